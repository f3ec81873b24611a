"""Bregman projections onto constraint sets in the geometry of ``A*``.

Two closed forms are available:

* ``EigenClip(alpha, beta)`` keeps the mean and clips the spectrum of the
  covariance into ``[alpha, beta]``.  For diagonal families the same map
  acts componentwise on the variances (an extension: the closed form is
  only derived for the full family, the diagonal case follows because the
  divergence is separable).
* ``NonNegativeMean`` (diagonal family only) replaces negative mean
  components by zero and keeps the variances.

:func:`project_natural` applies the projection to a mixed natural
parameter.  Eigenvalue clipping is also defined when ``theta`` has left
``int dom A`` (the implied "covariance" ``(-2 theta2)^{-1}`` is indefinite
but invertible), which is what lets the constraint rescue steps on
targets whose Hessian is not negative definite.

:func:`project_oracle` is a slow numerical minimiser used by the tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainViolation, InvalidConstraint, NoConvergence, WrongFamily
from .expfam import ExpParam, Kind, NatParam, bregman_dual, nat_to_exp

SNAP_TOL = 1e-12


@dataclass(frozen=True)
class ConstraintSet:
    variant: str = "none"
    alpha: Optional[float] = None
    beta: Optional[float] = None

    def __post_init__(self):
        if self.variant not in ("none", "eigen_clip", "nonneg_mean"):
            raise InvalidConstraint(f"unknown projection {self.variant!r}")
        if self.variant == "eigen_clip":
            if self.alpha is None or self.beta is None:
                raise InvalidConstraint("eigen_clip needs alpha and beta")
            if not (0.0 < self.alpha < self.beta):
                raise InvalidConstraint(
                    f"eigen_clip requires 0 < alpha < beta, got alpha={self.alpha}, beta={self.beta}"
                )

    def check_family(self, family) -> None:
        if self.variant == "nonneg_mean" and family.kind is not Kind.DIAG:
            raise WrongFamily("nonneg_mean is only defined for the gaussian_diag family")

    def contains(self, omega: ExpParam, tol: float = 1e-10) -> bool:
        if self.variant == "none":
            return True
        if self.variant == "nonneg_mean":
            return bool(np.all(omega.mean >= 0.0))
        lam = _spectrum(omega.cov)
        scale = max(1.0, self.beta)
        return bool(lam.min() >= self.alpha - tol * scale and lam.max() <= self.beta + tol * scale)

    def to_config(self) -> dict:
        if self.variant == "eigen_clip":
            return {"projection": "eigen_clip", "alpha": self.alpha, "beta": self.beta}
        return {"projection": self.variant}

    @classmethod
    def from_config(cls, cfg: dict) -> "ConstraintSet":
        name = cfg.get("projection", "none")
        if name == "eigen_clip":
            return cls("eigen_clip", float(cfg["alpha"]), float(cfg["beta"]))
        return cls(name)


def Unconstrained() -> ConstraintSet:
    return ConstraintSet("none")


def EigenClip(alpha: float, beta: float) -> ConstraintSet:
    return ConstraintSet("eigen_clip", float(alpha), float(beta))


def NonNegativeMean() -> ConstraintSet:
    return ConstraintSet("nonneg_mean")


def _spectrum(cov: np.ndarray) -> np.ndarray:
    return cov if cov.ndim == 1 else np.linalg.eigvalsh(cov)


def clip_spectrum(values: np.ndarray, alpha: float, beta: float) -> np.ndarray:
    out = np.clip(values, alpha, beta)
    out[np.abs(out - alpha) <= SNAP_TOL * max(1.0, alpha)] = alpha
    out[np.abs(out - beta) <= SNAP_TOL * max(1.0, beta)] = beta
    return out


def clip_covariance(cov: np.ndarray, alpha: float, beta: float) -> np.ndarray:
    """Spectral clipping of a symmetric matrix (or variance vector) into ``[alpha, beta]``."""
    if cov.ndim == 1:
        return clip_spectrum(np.array(cov, dtype=float), alpha, beta)
    lam, q = np.linalg.eigh(cov)
    clipped = clip_spectrum(lam, alpha, beta)
    out = (q * clipped) @ q.T
    return 0.5 * (out + out.T)


def project(omega: ExpParam, c: ConstraintSet) -> ExpParam:
    """Closed-form ``argmin_{w in C} d_{A*}(w, omega)``."""
    c.check_family(omega.family)
    if c.variant == "none":
        return omega
    if c.variant == "nonneg_mean":
        if np.all(omega.mean >= 0.0):
            return omega
        return ExpParam.from_moments(omega.family, np.maximum(omega.mean, 0.0), omega.cov)
    lam = _spectrum(omega.cov)
    lo = c.alpha - SNAP_TOL * max(1.0, c.alpha)
    hi = c.beta + SNAP_TOL * max(1.0, c.beta)
    if lam.min() >= lo and lam.max() <= hi:
        return omega
    return ExpParam.from_moments(omega.family, omega.mean, clip_covariance(omega.cov, c.alpha, c.beta))


def project_natural(theta: NatParam, c: ConstraintSet) -> ExpParam:
    """``proj_C(grad A(theta))``, extended to invertible ``theta`` outside ``int dom A`` for EigenClip.

    Outside the domain the mean ``(-2 theta2)^{-1} theta1`` and the spectral
    clip of ``(-2 theta2)^{-1}`` are still well defined; negative
    eigenvalues fall below ``alpha`` and are raised to it.  Other
    constraint sets raise :class:`DomainViolation` there.
    """
    c.check_family(theta.family)
    if theta.is_interior():
        omega = nat_to_exp(theta)
        omega._theta = theta
        return project(omega, c)
    if c.variant != "eigen_clip":
        raise DomainViolation("natural parameter is outside int dom A")
    family = theta.family
    prec = -2.0 * np.asarray(theta.theta2, dtype=float)
    if prec.ndim == 1:
        if np.any(prec == 0.0) or not np.all(np.isfinite(prec)):
            raise DomainViolation("precision has a zero or non-finite component")
        cov = 1.0 / prec
        mu = None if theta.theta1 is None else cov * theta.theta1
        return ExpParam.from_moments(family, mu, clip_spectrum(cov, c.alpha, c.beta))
    if not np.all(np.isfinite(prec)):
        raise DomainViolation("precision has non-finite entries")
    lam, q = np.linalg.eigh(0.5 * (prec + prec.T))
    if np.any(lam == 0.0):
        raise DomainViolation("precision is singular")
    mu = (q / lam) @ (q.T @ theta.theta1)
    cov = (q * clip_spectrum(1.0 / lam, c.alpha, c.beta)) @ q.T
    return ExpParam.from_moments(family, mu, 0.5 * (cov + cov.T))


# --------------------------------------------------------------------------
# Numerical oracle (tests only)
# --------------------------------------------------------------------------


def _kl_moments(mu_p, cov_p, mu_q, prec_q, logdet_q):
    """KL(N(mu_p, cov_p) || N(mu_q, .)) given the precision of q."""
    d = mu_p.size
    diff = mu_q - mu_p
    if cov_p.ndim == 1:
        if np.any(cov_p <= 0):
            return np.inf
        logdet_p = float(np.sum(np.log(cov_p)))
        return 0.5 * (float(np.sum(prec_q * cov_p)) + float(np.sum(prec_q * diff * diff)) - d + logdet_q - logdet_p)
    sign, logdet_p = np.linalg.slogdet(cov_p)
    if sign <= 0:
        return np.inf
    return 0.5 * (float(np.sum(prec_q * cov_p)) + float(diff @ prec_q @ diff) - d + logdet_q - logdet_p)


def _oracle_eigen_clip(omega, c, tol, max_evals):
    """Projected gradient with backtracking; stops on a Frank-Wolfe gap certificate.

    The feasible set is ``{(m, S): alpha I <= S <= beta I}``.  Trial points are
    mapped back into it by Euclidean (spectral) clipping, and the linear
    minimisation oracle over the set bounds the suboptimality:
    ``f(x) - f* <= <grad f(x), x - s>``.
    """
    mu = np.array(omega.mean)
    cov = np.array(omega.cov)
    diagonal = cov.ndim == 1
    prec = 1.0 / cov if diagonal else np.linalg.inv(cov)
    logdet = float(np.sum(np.log(cov))) if diagonal else float(np.linalg.slogdet(cov)[1])

    def objective(m, s):
        return _kl_moments(m, s, mu, prec, logdet)

    def gradient(m, s):
        if diagonal:
            return prec * (m - mu), 0.5 * (prec - 1.0 / s)
        return prec @ (m - mu), 0.5 * (prec - np.linalg.inv(s))

    def feasible(s):
        return clip_covariance(s, c.alpha, c.beta)

    m = mu.copy()
    s = feasible(np.ones_like(cov) if diagonal else np.eye(mu.size) * np.sqrt(c.alpha * c.beta))
    f = objective(m, s)
    step = c.alpha * c.alpha
    evals = 1
    while evals < max_evals:
        gm, gs = gradient(m, s)
        # linear minimisation over the spectral box
        if diagonal:
            s_lmo = np.where(gs > 0, c.alpha, c.beta)
            gap_s = float(np.sum(gs * (s - s_lmo)))
        else:
            glam, gq = np.linalg.eigh(gs)
            s_lmo = (gq * np.where(glam > 0, c.alpha, c.beta)) @ gq.T
            gap_s = float(np.sum(gs * (s - s_lmo)))
        # the mean block is an unconstrained quadratic: its gap is exact
        gap_m = 0.5 * float(gm @ (gm / prec if diagonal else np.linalg.solve(prec, gm)))
        gap = gap_s + gap_m
        if gap <= tol:
            return ExpParam.from_moments(omega.family, m if omega.family.has_mean else None, s)
        step *= 2.0
        while True:
            m_new = m - step * gm
            s_new = feasible(s - step * gs)
            f_new = objective(m_new, s_new)
            evals += 1
            dm, ds = m_new - m, s_new - s
            lin = float(gm @ dm) + float(np.sum(gs * ds))
            quad = (float(dm @ dm) + float(np.sum(ds * ds))) / (2.0 * step)
            if f_new <= f + lin + quad + 1e-15 or evals >= max_evals:
                break
            step *= 0.5
        m, s, f = m_new, s_new, f_new
    raise NoConvergence(f"eigen_clip oracle did not certify tol={tol} within {max_evals} evaluations")


def _golden_min(fun, lo, hi, tol):
    inv_phi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    x1, x2 = b - inv_phi * (b - a), a + inv_phi * (b - a)
    f1, f2 = fun(x1), fun(x2)
    evals = 2
    while b - a > tol:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - inv_phi * (b - a)
            f1 = fun(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + inv_phi * (b - a)
            f2 = fun(x2)
        evals += 1
    return 0.5 * (a + b), evals


def _oracle_nonneg_mean(omega, tol, max_evals):
    """Cyclic coordinate search with golden-section refinement on each coordinate.

    Means are searched on ``[0, |mu| + 10 sd]`` and log-variances on a wide
    bracket around the current value; sweeps repeat until the objective
    stops improving by more than ``tol``.
    """
    mu = np.array(omega.mean)
    var = np.array(omega.cov)
    prec = 1.0 / var
    logdet = float(np.sum(np.log(var)))
    m = np.maximum(mu, 0.0) + 1.0
    log_s = np.log(var) + 1.0
    f = _kl_moments(m, np.exp(log_s), mu, prec, logdet)
    evals = 1
    for _ in range(200):
        f_old = f
        for i in range(mu.size):
            def along_mean(x, i=i):
                trial = m.copy()
                trial[i] = x
                return _kl_moments(trial, np.exp(log_s), mu, prec, logdet)

            hi = abs(mu[i]) + 10.0 * np.sqrt(var[i]) + 1.0
            m[i], k = _golden_min(along_mean, 0.0, hi, 1e-12 * hi)
            evals += k

            def along_logvar(x, i=i):
                trial = log_s.copy()
                trial[i] = x
                return _kl_moments(m, np.exp(trial), mu, prec, logdet)

            centre = np.log(var[i])
            log_s[i], k = _golden_min(along_logvar, centre - 20.0, centre + 20.0, 1e-12)
            evals += k
        f = _kl_moments(m, np.exp(log_s), mu, prec, logdet)
        if f_old - f <= tol * 1e-3:
            return ExpParam.from_moments(omega.family, m, np.exp(log_s))
        if evals >= max_evals:
            break
    raise NoConvergence(f"nonneg_mean oracle did not settle within {max_evals} evaluations")


def project_oracle(omega: ExpParam, c: ConstraintSet, tol: float = 1e-9, max_evals: int = 100_000) -> ExpParam:
    """Numerically minimise ``w -> d_{A*}(w, omega)`` over ``C`` (``d <= 3``)."""
    c.check_family(omega.family)
    if c.variant == "none":
        return omega
    if omega.family.dim > 3:
        raise ValueError("project_oracle is limited to d <= 3")
    if c.variant == "nonneg_mean":
        return _oracle_nonneg_mean(omega, tol, max_evals)
    return _oracle_eigen_clip(omega, c, tol, max_evals)


def projection_gap(omega: ExpParam, c: ConstraintSet, tol: float = 1e-9) -> float:
    """``d(project) - d(oracle)``; non-positive up to ``tol`` when ``project`` is optimal."""
    return bregman_dual(project(omega, c), omega) - bregman_dual(project_oracle(omega, c, tol), omega)
