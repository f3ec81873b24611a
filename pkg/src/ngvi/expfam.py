"""Dual-coordinate calculus for three Gaussian exponential families.

Densities are taken with respect to the base measure
``(2*pi)**(-d/2) * Lebesgue``.  With that choice

* full covariance, sufficient statistic ``(x, x x^T)``::

      theta = (Sigma^-1 mu, -1/2 Sigma^-1)
      A(theta) = -1/4 theta1^T theta2^-1 theta1 - 1/2 logdet(-2 theta2)
      omega = (mu, Sigma + mu mu^T)
      A*(omega) = -d/2 - 1/2 logdet Sigma

* diagonal covariance, statistic ``(x, x * x)``: the same formulas applied
  coordinatewise;
* centered diagonal, statistic ``x * x``: only the second block survives.

Natural parameters (:class:`NatParam`) are plain elements of the ambient
space and may sit outside ``int dom A``; this is what lets gradient
estimates and tentative updates share the type.  Expectation parameters
(:class:`ExpParam`) always lie in ``int dom A*``: construction runs a
Cholesky factorisation of the implied covariance and raises
:class:`~ngvi.errors.DomainViolation` when it fails.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, DomainViolation, WrongFamily


class Kind(str, enum.Enum):
    FULL = "gaussian_full"
    DIAG = "gaussian_diag"
    DIAG_CENTERED = "gaussian_diag_centered"


@dataclass(frozen=True)
class FamilyDescriptor:
    kind: Kind
    dim: int

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim!r}")
        object.__setattr__(self, "dim", int(self.dim))

    @property
    def has_mean(self) -> bool:
        return self.kind is not Kind.DIAG_CENTERED

    @property
    def is_diagonal(self) -> bool:
        return self.kind is not Kind.FULL

    def second_shape(self) -> tuple:
        d = self.dim
        return (d, d) if self.kind is Kind.FULL else (d,)


def full(dim: int) -> FamilyDescriptor:
    return FamilyDescriptor(Kind.FULL, dim)


def diag(dim: int) -> FamilyDescriptor:
    return FamilyDescriptor(Kind.DIAG, dim)


def diag_centered(dim: int) -> FamilyDescriptor:
    return FamilyDescriptor(Kind.DIAG_CENTERED, dim)


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def _coerce_blocks(family: FamilyDescriptor, first, second):
    d = family.dim
    if family.has_mean:
        if first is None:
            raise DimensionMismatch(f"{family.kind.value} needs a first block")
        first = np.array(first, dtype=float).reshape(-1)
        if first.shape != (d,):
            raise DimensionMismatch(f"first block has shape {first.shape}, expected {(d,)}")
        first = _frozen(first)
    else:
        first = None
    second = np.array(second, dtype=float)
    if family.kind is Kind.FULL:
        if second.shape != (d, d):
            raise DimensionMismatch(f"second block has shape {second.shape}, expected {(d, d)}")
        second = 0.5 * (second + second.T)
    else:
        second = second.reshape(-1)
        if second.shape != (d,):
            raise DimensionMismatch(f"second block has shape {second.shape}, expected {(d,)}")
    return first, _frozen(second)


def _cholesky(matrix: np.ndarray) -> Optional[np.ndarray]:
    """Lower Cholesky factor, or None when ``matrix`` is not positive definite."""
    if matrix.ndim == 1:
        if np.all(np.isfinite(matrix)) and np.all(matrix > 0.0):
            return np.sqrt(matrix)
        return None
    if not np.all(np.isfinite(matrix)):
        return None
    try:
        return np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError:
        return None


def _inverse_from_cholesky(chol: np.ndarray) -> np.ndarray:
    if chol.ndim == 1:
        return 1.0 / (chol * chol)
    linv = np.linalg.inv(chol)
    inv = linv.T @ linv
    return 0.5 * (inv + inv.T)


def _logdet_from_cholesky(chol: np.ndarray) -> float:
    if chol.ndim == 1:
        return float(2.0 * np.sum(np.log(chol)))
    return float(2.0 * np.sum(np.log(np.diagonal(chol))))


class NatParam:
    """Natural parameter ``(theta1, theta2)``; no domain requirement."""

    __slots__ = ("family", "theta1", "theta2")

    def __init__(self, family: FamilyDescriptor, theta1, theta2):
        self.family = family
        self.theta1, self.theta2 = _coerce_blocks(family, theta1, theta2)

    @classmethod
    def _raw(cls, family, theta1, theta2):
        out = object.__new__(cls)
        out.family = family
        out.theta1 = None if theta1 is None else _frozen(theta1)
        out.theta2 = _frozen(theta2)
        return out

    def precision_cholesky(self) -> Optional[np.ndarray]:
        """Cholesky factor of ``-2 theta2`` (the precision), None off-domain."""
        return _cholesky(-2.0 * self.theta2)

    def is_interior(self) -> bool:
        return self.precision_cholesky() is not None

    def is_finite(self) -> bool:
        ok = bool(np.all(np.isfinite(self.theta2)))
        if self.theta1 is not None:
            ok = ok and bool(np.all(np.isfinite(self.theta1)))
        return ok

    def _combine(self, other, op):
        if not isinstance(other, NatParam):
            return NotImplemented
        if other.family != self.family:
            raise WrongFamily(f"cannot combine {self.family} with {other.family}")
        t1 = None if self.theta1 is None else op(self.theta1, other.theta1)
        return NatParam._raw(self.family, t1, op(self.theta2, other.theta2))

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, scalar):
        scalar = float(scalar)
        t1 = None if self.theta1 is None else scalar * self.theta1
        return NatParam._raw(self.family, t1, scalar * self.theta2)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def as_vector(self) -> np.ndarray:
        parts = [] if self.theta1 is None else [self.theta1]
        parts.append(self.theta2.reshape(-1))
        return np.concatenate(parts)

    def allclose(self, other: "NatParam", rtol=1e-10, atol=1e-12) -> bool:
        return other.family == self.family and np.allclose(
            self.as_vector(), other.as_vector(), rtol=rtol, atol=atol
        )

    def __repr__(self):
        return f"NatParam({self.family.kind.value}, d={self.family.dim}, theta1={self.theta1!r}, theta2={self.theta2!r})"


class ExpParam:
    """Expectation parameter ``omega = E[Gamma(X)]`` in ``int dom A*``.

    The implied mean, covariance and its Cholesky factor are cached on
    construction.  For diagonal kinds ``cov`` and ``chol`` are vectors.
    """

    __slots__ = ("family", "omega1", "omega2", "mean", "cov", "chol", "_theta")

    def __init__(self, family: FamilyDescriptor, omega1, omega2):
        omega1, omega2 = _coerce_blocks(family, omega1, omega2)
        mean = omega1 if omega1 is not None else np.zeros(family.dim)
        if family.kind is Kind.FULL:
            cov = omega2 - np.outer(mean, mean)
            cov = 0.5 * (cov + cov.T)
        elif family.kind is Kind.DIAG:
            cov = omega2 - mean * mean
        else:
            cov = np.array(omega2)
        self._set(family, omega1, omega2, mean, cov)

    def _set(self, family, omega1, omega2, mean, cov):
        chol = _cholesky(cov)
        if chol is None:
            raise DomainViolation("implied covariance is not positive definite")
        self.family = family
        self.omega1 = omega1
        self.omega2 = omega2
        self.mean = _frozen(mean)
        self.cov = _frozen(cov)
        self.chol = _frozen(chol)
        self._theta = None

    @classmethod
    def from_moments(cls, family: FamilyDescriptor, mu, sigma) -> "ExpParam":
        """Build from mean and covariance, keeping ``sigma`` exactly as given."""
        d = family.dim
        sigma = np.array(sigma, dtype=float)
        if family.kind is Kind.FULL:
            if sigma.shape != (d, d):
                raise DimensionMismatch(f"sigma has shape {sigma.shape}, expected {(d, d)}")
            sigma = 0.5 * (sigma + sigma.T)
        else:
            if sigma.ndim == 2:
                sigma = np.diagonal(sigma).copy()
            if sigma.shape != (d,):
                raise DimensionMismatch(f"sigma has shape {sigma.shape}, expected {(d,)}")
        if family.has_mean:
            mu = np.array(mu, dtype=float).reshape(-1)
            if mu.shape != (d,):
                raise DimensionMismatch(f"mu has shape {mu.shape}, expected {(d,)}")
        else:
            mu = np.zeros(d)
        out = object.__new__(cls)
        if family.kind is Kind.FULL:
            omega1, omega2 = mu.copy(), sigma + np.outer(mu, mu)
        elif family.kind is Kind.DIAG:
            omega1, omega2 = mu.copy(), sigma + mu * mu
        else:
            omega1, omega2 = None, sigma.copy()
        out._set(
            family,
            None if omega1 is None else _frozen(omega1),
            _frozen(omega2),
            mu,
            sigma,
        )
        return out

    @property
    def logdet_cov(self) -> float:
        return _logdet_from_cholesky(self.chol)

    def moments(self) -> "MomentParam":
        return MomentParam(np.array(self.mean), np.array(self.cov))

    def as_vector(self) -> np.ndarray:
        parts = [] if self.omega1 is None else [self.omega1]
        parts.append(self.omega2.reshape(-1))
        return np.concatenate(parts)

    def __repr__(self):
        return f"ExpParam({self.family.kind.value}, d={self.family.dim}, mean={self.mean!r}, cov={self.cov!r})"


@dataclass(frozen=True)
class MomentParam:
    """Human-readable ``(mu, Sigma)`` view; ``sigma`` is a matrix or a vector of variances."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float).reshape(-1)
        sigma = np.array(self.sigma, dtype=float)
        if sigma.ndim == 0:
            sigma = sigma.reshape(1)
        if sigma.ndim == 2 and sigma.shape != (mu.size, mu.size):
            raise DimensionMismatch(f"sigma {sigma.shape} does not match mu {mu.shape}")
        if sigma.ndim == 1 and sigma.shape != mu.shape:
            raise DimensionMismatch(f"sigma {sigma.shape} does not match mu {mu.shape}")
        if sigma.ndim == 2:
            sigma = 0.5 * (sigma + sigma.T)
        if _cholesky(sigma) is None:
            raise DomainViolation("sigma must be positive definite")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @property
    def dim(self) -> int:
        return self.mu.size

    def full_sigma(self) -> np.ndarray:
        return np.diag(self.sigma) if self.sigma.ndim == 1 else self.sigma

    def to_dict(self) -> dict:
        return {"mu": self.mu.tolist(), "sigma": self.full_sigma().tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "MomentParam":
        return cls(np.asarray(data["mu"], dtype=float), np.asarray(data["sigma"], dtype=float))


# --------------------------------------------------------------------------
# Dual maps, potentials, divergences
# --------------------------------------------------------------------------


def nat_to_exp(theta: NatParam) -> ExpParam:
    """``omega = grad A(theta)``."""
    chol = theta.precision_cholesky()
    if chol is None:
        raise DomainViolation("-2*theta2 is not positive definite")
    family = theta.family
    cov = _inverse_from_cholesky(chol)
    if family.kind is Kind.DIAG_CENTERED:
        mu = np.zeros(family.dim)
    elif family.kind is Kind.FULL:
        mu = cov @ theta.theta1
    else:
        mu = cov * theta.theta1
    return ExpParam.from_moments(family, mu, cov)


def exp_to_nat(omega: ExpParam) -> NatParam:
    """``theta = grad A*(omega)``."""
    if omega._theta is not None:
        return omega._theta
    family = omega.family
    prec = _inverse_from_cholesky(omega.chol)
    if family.kind is Kind.DIAG_CENTERED:
        theta1 = None
    elif family.kind is Kind.FULL:
        theta1 = prec @ omega.mean
    else:
        theta1 = prec * omega.mean
    omega._theta = NatParam._raw(family, theta1, -0.5 * prec)
    return omega._theta


def log_partition(theta: NatParam) -> float:
    chol = theta.precision_cholesky()
    if chol is None:
        raise DomainViolation("-2*theta2 is not positive definite")
    logdet_prec = _logdet_from_cholesky(chol)
    if theta.family.kind is Kind.DIAG_CENTERED:
        return -0.5 * logdet_prec
    if theta.family.kind is Kind.FULL:
        mu = _inverse_from_cholesky(chol) @ theta.theta1
    else:
        mu = theta.theta1 / (chol * chol)
    return 0.5 * float(theta.theta1 @ mu) - 0.5 * logdet_prec


def negative_entropy(omega: ExpParam) -> float:
    """``A*(omega) = E_q[log q]`` under the base measure above."""
    return -0.5 * omega.family.dim - 0.5 * omega.logdet_cov


def _inner_blocks(theta: NatParam, first, second) -> float:
    total = float(np.sum(theta.theta2 * second))
    if theta.theta1 is not None:
        total += float(theta.theta1 @ first)
    return total


def inner(theta: NatParam, omega: ExpParam) -> float:
    """Duality pairing ``<theta, omega>``; Frobenius on the matrix block."""
    if theta.family != omega.family:
        raise WrongFamily(f"cannot pair {theta.family} with {omega.family}")
    return _inner_blocks(theta, omega.omega1, omega.omega2)


def bregman_dual(omega_a: ExpParam, omega_b: ExpParam) -> float:
    """``d_{A*}(omega_a, omega_b)``, equal to ``KL(q_a || q_b)``."""
    if omega_a.family != omega_b.family:
        raise WrongFamily(f"cannot compare {omega_a.family} with {omega_b.family}")
    theta_b = exp_to_nat(omega_b)
    d1 = None if omega_a.omega1 is None else omega_a.omega1 - omega_b.omega1
    d2 = omega_a.omega2 - omega_b.omega2
    entropy_gap = -0.5 * (omega_a.logdet_cov - omega_b.logdet_cov)
    return entropy_gap - _inner_blocks(theta_b, d1, d2)


def kl_gaussian_oracle(p: MomentParam, q: MomentParam) -> float:
    """Closed-form ``KL(N(mu_p, S_p) || N(mu_q, S_q))`` in moment coordinates."""
    if p.dim != q.dim:
        raise DimensionMismatch(f"dimensions differ: {p.dim} vs {q.dim}")
    sp, sq = p.full_sigma(), q.full_sigma()
    diff = q.mu - p.mu
    sign_p, logdet_p = np.linalg.slogdet(sp)
    sign_q, logdet_q = np.linalg.slogdet(sq)
    if sign_p <= 0 or sign_q <= 0:
        raise DomainViolation("covariances must be positive definite")
    trace_term = np.trace(np.linalg.solve(sq, sp))
    quad = float(diff @ np.linalg.solve(sq, diff))
    return 0.5 * (trace_term + quad - p.dim + logdet_q - logdet_p)


def sample(omega: ExpParam, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` independent draws from ``q_omega`` as an ``(n, d)`` array."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    z = rng.standard_normal((int(n), omega.family.dim))
    if omega.chol.ndim == 1:
        return omega.mean + z * omega.chol
    return omega.mean + z @ omega.chol.T


# --------------------------------------------------------------------------
# LERC embedding of diagonal families into the full family
# --------------------------------------------------------------------------


def embed_diag_to_full(omega: ExpParam) -> ExpParam:
    """Linear embedding ``(w1, w2) -> (w1, diag w2)`` (``w -> (0, diag w)`` when centered).

    For a non-centered diagonal member with non-zero mean the image is not
    the full-family parameter of the same density and may leave
    ``int dom A*``; a :class:`DomainViolation` is raised in that case.
    """
    family = omega.family
    if family.kind is Kind.FULL:
        raise WrongFamily("embed_diag_to_full expects a diagonal family")
    d = family.dim
    first = np.zeros(d) if omega.omega1 is None else np.array(omega.omega1)
    return ExpParam(full(d), first, np.diag(omega.omega2))


def pull_back_gradient(family: FamilyDescriptor, a, b, mean=None) -> NatParam:
    """Express a full-family gradient ``(a, B)`` in ``family`` coordinates.

    ``(a, B)`` is the gradient of a functional that is linear in
    ``(E[x], E[x x^T])``.  For the full family this is the identity; for the
    centered diagonal family it is the adjoint of the LERC embedding
    (``diag B``).  For the non-centered diagonal family ``E[x x^T]`` depends
    on the mean quadratically, and the chain rule adds ``2 offdiag(B) mu`` to
    the first block.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if family.kind is Kind.FULL:
        return NatParam._raw(family, a.copy(), 0.5 * (b + b.T))
    b_diag = np.diagonal(b).copy()
    if family.kind is Kind.DIAG_CENTERED:
        return NatParam._raw(family, None, b_diag)
    if mean is None:
        raise ValueError("the diagonal family needs the current mean")
    offdiag = 0.5 * (b + b.T) - np.diag(b_diag)
    return NatParam._raw(family, a + 2.0 * offdiag @ mean, b_diag)
