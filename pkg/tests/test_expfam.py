import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ngvi import expfam
from ngvi.errors import DimensionMismatch, DomainViolation, WrongFamily
from ngvi.expfam import ExpParam, MomentParam, NatParam

from conftest import FAMILY_MAKERS, random_member


def test_standard_normal_fixed_point():
    theta = NatParam(expfam.full(2), np.zeros(2), -0.5 * np.eye(2))
    omega = expfam.nat_to_exp(theta)
    np.testing.assert_allclose(omega.omega1, 0.0)
    np.testing.assert_allclose(omega.omega2, np.eye(2))
    back = expfam.exp_to_nat(ExpParam(expfam.full(2), np.zeros(2), np.eye(2)))
    np.testing.assert_allclose(back.theta2, -0.5 * np.eye(2))
    np.testing.assert_allclose(back.theta1, 0.0)


def test_one_dimensional_hand_values():
    theta = NatParam(expfam.full(1), [0.5], [[-0.25]])
    omega = expfam.nat_to_exp(theta)
    assert omega.omega1[0] == pytest.approx(1.0)
    assert omega.omega2[0, 0] == pytest.approx(3.0)
    assert expfam.log_partition(theta) == pytest.approx(0.25 + 0.5 * math.log(2.0), abs=1e-12)
    assert expfam.log_partition(theta) == pytest.approx(0.59657, abs=1e-5)


def test_log_partition_standard_normal_is_zero():
    for d in (1, 3, 6):
        assert expfam.log_partition(NatParam(expfam.full(d), np.zeros(d), -0.5 * np.eye(d))) == pytest.approx(0.0, abs=1e-14)
    assert expfam.log_partition(NatParam(expfam.diag_centered(4), None, -0.5 * np.ones(4))) == pytest.approx(0.0, abs=1e-14)


def test_negative_entropy_values():
    for d in (1, 2, 5):
        omega = ExpParam(expfam.full(d), np.zeros(d), np.eye(d))
        assert expfam.negative_entropy(omega) == pytest.approx(-d / 2)
    omega = ExpParam(expfam.full(1), [0.0], [[4.0]])
    assert expfam.negative_entropy(omega) == pytest.approx(-0.5 - 0.5 * math.log(4.0))


def test_domain_violations():
    with pytest.raises(DomainViolation):
        expfam.nat_to_exp(NatParam(expfam.full(2), np.zeros(2), np.diag([-0.5, 0.0])))
    with pytest.raises(DomainViolation):
        ExpParam(expfam.full(1), [1.0], [[1.0]])
    with pytest.raises(DomainViolation):
        expfam.nat_to_exp(NatParam(expfam.diag(2), np.zeros(2), [-1.0, 0.5]))
    with pytest.raises(DimensionMismatch):
        NatParam(expfam.full(2), np.zeros(3), -np.eye(2))


def test_natparam_has_no_domain_requirement():
    theta = NatParam(expfam.full(2), np.zeros(2), np.eye(2))
    assert not theta.is_interior()


def test_symmetrisation_on_construction():
    m = np.array([[-1.0, 0.2], [0.0, -1.0]])
    theta = NatParam(expfam.full(2), np.zeros(2), m)
    np.testing.assert_array_equal(theta.theta2, theta.theta2.T)


@pytest.mark.parametrize("kind", sorted(FAMILY_MAKERS))
def test_round_trips(kind, rng):
    for _ in range(100):
        d = int(rng.integers(1, 6))
        omega = random_member(rng, FAMILY_MAKERS[kind](d))
        theta = expfam.exp_to_nat(omega)
        theta_again = expfam.exp_to_nat(expfam.nat_to_exp(theta))
        np.testing.assert_allclose(theta_again.as_vector(), theta.as_vector(), rtol=1e-10, atol=1e-12)
        omega_again = expfam.nat_to_exp(theta)
        np.testing.assert_allclose(omega_again.as_vector(), omega.as_vector(), rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("kind", sorted(FAMILY_MAKERS))
def test_fenchel_young(kind, rng):
    for _ in range(50):
        omega = random_member(rng, FAMILY_MAKERS[kind](int(rng.integers(1, 6))))
        theta = expfam.exp_to_nat(omega)
        gap = expfam.log_partition(theta) + expfam.negative_entropy(omega) - expfam.inner(theta, omega)
        assert abs(gap) < 1e-10 * max(1.0, abs(expfam.log_partition(theta)))


def test_bregman_hand_values():
    f = expfam.full(1)
    a = ExpParam.from_moments(f, [0.0], [[1.0]])
    b = ExpParam.from_moments(f, [1.0], [[1.0]])
    assert expfam.bregman_dual(a, b) == pytest.approx(0.5)
    a = ExpParam.from_moments(f, [0.0], [[2.0]])
    b = ExpParam.from_moments(f, [0.0], [[1.0]])
    assert expfam.bregman_dual(a, b) == pytest.approx(0.5 * (1.0 - math.log(2.0)))
    assert expfam.bregman_dual(a, a) == pytest.approx(0.0, abs=1e-15)


def test_kl_oracle_hand_values():
    p = MomentParam(np.zeros(1), np.ones((1, 1)))
    q = MomentParam(np.ones(1), np.ones((1, 1)))
    assert expfam.kl_gaussian_oracle(p, q) == pytest.approx(0.5)
    assert expfam.kl_gaussian_oracle(p, p) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(DimensionMismatch):
        expfam.kl_gaussian_oracle(p, MomentParam(np.zeros(2), np.eye(2)))


@pytest.mark.parametrize("kind", sorted(FAMILY_MAKERS))
def test_bregman_matches_kl_oracle(kind, rng):
    for _ in range(100):
        fam = FAMILY_MAKERS[kind](int(rng.integers(1, 6)))
        a, b = random_member(rng, fam), random_member(rng, fam)
        breg = expfam.bregman_dual(a, b)
        oracle = expfam.kl_gaussian_oracle(a.moments(), b.moments())
        assert breg == pytest.approx(oracle, rel=1e-8, abs=1e-12)
        assert breg >= -1e-12


def test_bregman_rejects_mixed_families(rng):
    with pytest.raises(WrongFamily):
        expfam.bregman_dual(random_member(rng, expfam.full(2)), random_member(rng, expfam.diag(2)))


@settings(max_examples=60, deadline=None)
@given(
    d=st.integers(1, 4),
    seed=st.integers(0, 2**32 - 1),
    scale=st.floats(1e-3, 1e3),
)
def test_bregman_nonnegative_and_separating(d, seed, scale):
    rng = np.random.default_rng(seed)
    fam = expfam.full(d)
    a = random_member(rng, fam, lo=0.1 * scale, hi=scale)
    b = random_member(rng, fam, lo=0.1 * scale, hi=scale)
    v = expfam.bregman_dual(a, b)
    assert v >= -1e-12
    if v < 1e-12:
        np.testing.assert_allclose(a.as_vector(), b.as_vector(), atol=1e-6)


def test_sampling_moments_and_determinism():
    omega = ExpParam(expfam.full(2), np.zeros(2), np.eye(2))
    n = 100_000
    xs = expfam.sample(omega, n, np.random.default_rng(1))
    assert np.all(np.abs(xs.mean(axis=0)) < 4 / math.sqrt(n))
    second = xs.T @ xs / n
    # each entry of the empirical second moment has sd <= sqrt(2/n)
    assert np.all(np.abs(second - np.eye(2)) < 5 * math.sqrt(2.0 / n))
    again = expfam.sample(omega, n, np.random.default_rng(1))
    np.testing.assert_array_equal(xs, again)


def test_sampling_correlated_and_diagonal(rng):
    fam = expfam.full(3)
    omega = random_member(rng, fam)
    xs = expfam.sample(omega, 200_000, np.random.default_rng(3))
    np.testing.assert_allclose(np.cov(xs.T), omega.cov, atol=0.05)
    dfam = expfam.diag(3)
    omega = random_member(rng, dfam)
    xs = expfam.sample(omega, 200_000, np.random.default_rng(4))
    np.testing.assert_allclose(xs.var(axis=0), omega.cov, rtol=0.03)
    np.testing.assert_allclose(xs.mean(axis=0), omega.mean, atol=0.03)


def test_embed_paper_example_and_linearity(rng):
    fam = expfam.diag_centered(2)
    out = expfam.embed_diag_to_full(ExpParam(fam, None, [1.0, 1.0]))
    np.testing.assert_array_equal(out.omega1, np.zeros(2))
    np.testing.assert_array_equal(out.omega2, np.eye(2))

    a, b = random_member(rng, expfam.diag_centered(3)), random_member(rng, expfam.diag_centered(3))
    alpha, beta = 0.3, 1.7
    combo = ExpParam(a.family, None, alpha * a.omega2 + beta * b.omega2)
    lhs = expfam.embed_diag_to_full(combo).omega2
    rhs = alpha * expfam.embed_diag_to_full(a).omega2 + beta * expfam.embed_diag_to_full(b).omega2
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    with pytest.raises(WrongFamily):
        expfam.embed_diag_to_full(random_member(rng, expfam.full(2)))


def test_embed_preserves_kl(rng):
    for fam in (expfam.diag_centered(3), expfam.diag(3)):
        for _ in range(20):
            a = random_member(rng, fam, mean_scale=0.0) if fam.has_mean else random_member(rng, fam)
            b = random_member(rng, fam, mean_scale=0.0) if fam.has_mean else random_member(rng, fam)
            native = expfam.bregman_dual(a, b)
            embedded = expfam.bregman_dual(expfam.embed_diag_to_full(a), expfam.embed_diag_to_full(b))
            oracle = expfam.kl_gaussian_oracle(a.moments(), b.moments())
            assert embedded == pytest.approx(native, rel=1e-8)
            assert embedded == pytest.approx(oracle, rel=1e-8)


def test_moment_param_serialisation_round_trip():
    mp = MomentParam(np.array([1.0, -2.0]), np.array([[2.0, 0.5], [0.5, 1.0]]))
    again = MomentParam.from_dict(mp.to_dict())
    np.testing.assert_array_equal(again.mu, mp.mu)
    np.testing.assert_array_equal(again.sigma, mp.sigma)
    with pytest.raises(DomainViolation):
        MomentParam(np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_parameters_are_immutable(rng):
    omega = random_member(rng, expfam.full(2))
    with pytest.raises(ValueError):
        omega.omega2[0, 0] = 5.0


def test_pull_back_diag_chain_rule(rng):
    # F(omega_diag) = <a, E x> + <B, E x x^T> with E x x^T = diag(s2) + mu mu^T
    d = 3
    a = rng.standard_normal(d)
    b = rng.standard_normal((d, d))
    b = 0.5 * (b + b.T)
    fam = expfam.diag(d)
    omega = random_member(rng, fam)

    def value(w1, w2):
        mu = w1
        second = np.diag(w2 - mu * mu) + np.outer(mu, mu)
        return a @ mu + np.sum(b * second)

    g = expfam.pull_back_gradient(fam, a, b, omega.mean)
    h = 1e-6
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        fd1 = (value(omega.omega1 + e, omega.omega2) - value(omega.omega1 - e, omega.omega2)) / (2 * h)
        fd2 = (value(omega.omega1, omega.omega2 + e) - value(omega.omega1, omega.omega2 - e)) / (2 * h)
        assert g.theta1[i] == pytest.approx(fd1, rel=1e-6, abs=1e-8)
        assert g.theta2[i] == pytest.approx(fd2, rel=1e-6, abs=1e-8)
