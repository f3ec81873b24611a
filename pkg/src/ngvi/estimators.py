"""Stochastic estimators of ``grad_omega E_{q_omega}[log pi(X)]``.

All estimators share the call signature ``(model, omega, n, rng)`` and
return a :class:`GradientEstimate` in the coordinates of ``omega``'s
family.  ``exact`` ignores ``n`` and ``rng``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ModelCapabilityMissing, NonFiniteGradient, WellPosednessViolated
from .expfam import ExpParam, Kind, NatParam, bregman_dual, exp_to_nat, nat_to_exp, pull_back_gradient, sample


@dataclass(frozen=True)
class GradientEstimate:
    value: NatParam
    n_used: int


def _checked(value: NatParam, n_used: int, what: str) -> GradientEstimate:
    if not value.is_finite():
        raise NonFiniteGradient(f"{what} produced a non-finite gradient estimate")
    return GradientEstimate(value, n_used)


def bonnet_price(model, omega: ExpParam, n: int, rng: np.random.Generator) -> GradientEstimate:
    """Average sampled gradients and Hessians of ``log pi`` at ``n`` draws from ``q_omega``.

    Full family::

        g1 = mean(grad log pi(X) - Hess log pi(X) mu),  g2 = mean(Hess log pi(X)) / 2

    Diagonal families use only the Hessian diagonal (the second statistic
    is ``x * x``); the centered family keeps just ``g2``.
    """
    if not getattr(model, "has_hessian", False):
        raise ModelCapabilityMissing(f"{model.name} does not provide a Hessian")
    family = omega.family
    xs = sample(omega, n, rng)
    g_sum, h_sum = model.grad_hess_sum(xs)
    g_mean = g_sum / n
    h_mean = h_sum / n
    if family.kind is Kind.FULL:
        h_mean = 0.5 * (h_mean + h_mean.T)
        value = NatParam._raw(family, g_mean - h_mean @ omega.mean, 0.5 * h_mean)
    else:
        h_diag = np.diagonal(h_mean).copy()
        if family.kind is Kind.DIAG:
            value = NatParam._raw(family, g_mean - h_diag * omega.mean, 0.5 * h_diag)
        else:
            value = NatParam._raw(family, None, 0.5 * h_diag)
    return _checked(value, n, "bonnet_price")


def subsample_gradient(model, omega: ExpParam, n: int, rng: np.random.Generator) -> GradientEstimate:
    """``L0^T theta0 + (M/N) sum_n theta_{y_{U_n}}(omega)``, indices i.i.d. uniform with replacement."""
    if not model.finite_sum:
        raise ModelCapabilityMissing(f"{model.name} is not of finite-sum form")
    big_m = model.n_data
    idx = rng.integers(0, big_m, size=int(n))
    counts = np.bincount(idx, minlength=big_m).astype(float)
    a0, b0 = model.prior_nat_full()
    a, b = model.data_nat_full(counts)
    scale = big_m / n
    value = pull_back_gradient(omega.family, a0 + scale * a, b0 + scale * b, omega.mean)
    return _checked(value, int(n), "subsample_gradient")


def exact_gradient(model, omega: ExpParam, n: int = 0, rng=None) -> GradientEstimate:
    """Closed-form gradient for conjugate models (``theta_pi`` pulled back to the family)."""
    if not model.conjugate:
        raise ModelCapabilityMissing(f"{model.name} has no closed-form gradient")
    a, b = model.posterior_nat_full()
    value = pull_back_gradient(omega.family, a, b, omega.mean)
    n_used = model.n_data if model.finite_sum else 0
    return GradientEstimate(value, n_used)


ESTIMATORS: dict[str, Callable] = {
    "bonnet_price": bonnet_price,
    "subsample": subsample_gradient,
    "exact": exact_gradient,
}


def get_estimator(name: str) -> Callable:
    try:
        return ESTIMATORS[name]
    except KeyError:
        raise ValueError(f"unknown estimator {name!r}; expected one of {sorted(ESTIMATORS)}") from None


def estimator_problem(model, family, name: str):
    """Reason why ``name`` cannot run on ``model``/``family``, or None."""
    if name not in ESTIMATORS:
        return f"unknown estimator {name!r}"
    if name == "bonnet_price" and not model.has_hessian:
        return f"bonnet_price needs a Hessian, which model {model.name!r} lacks"
    if name == "subsample":
        if not model.finite_sum:
            return f"subsample needs a finite-sum model, got {model.name!r}"
        try:
            model.data_nat_full(np.zeros(model.n_data))
        except ModelCapabilityMissing:
            return f"subsample needs closed-form per-datum terms, which model {model.name!r} lacks"
    if name == "exact" and not model.conjugate:
        return f"exact needs a conjugate model, got {model.name!r}"
    return None


def variance_proxy(
    model,
    omega: ExpParam,
    eta: float,
    n: int,
    trials: int,
    rng: np.random.Generator,
    estimator: str | Callable = "bonnet_price",
) -> float:
    """Monte Carlo value of ``E[d_{A*}(exact step, noisy step)] / eta**2`` at ``omega``.

    Both steps start from ``theta = grad A*(omega)``:
    ``theta_bar = (1-eta) theta + eta * exact`` and
    ``theta_plus = (1-eta) theta + eta * g^N``.
    """
    if not 0.0 < eta <= 1.0:
        raise ValueError(f"eta must lie in (0, 1], got {eta}")
    est = get_estimator(estimator) if isinstance(estimator, str) else estimator
    theta = exp_to_nat(omega)
    base = (1.0 - eta) * theta
    exact = exact_gradient(model, omega).value
    omega_bar = nat_to_exp(base + eta * exact)
    total = 0.0
    for _ in range(int(trials)):
        g = est(model, omega, n, rng).value
        theta_plus = base + eta * g
        if not theta_plus.is_interior():
            raise WellPosednessViolated("a noisy step left int dom A")
        total += bregman_dual(omega_bar, nat_to_exp(theta_plus))
    return max(total / trials, 0.0) / (eta * eta)
