"""Projected stochastic NGVI: schedules, the update step and the run loop.

One iteration maps ``omega_t`` to::

    theta_plus  = (1 - eta_t) grad A*(omega_t) + eta_t g^{N_t}(omega_t)
    omega_{t+1} = proj_C(grad A(theta_plus))

The run loop records metrics for ``omega_0`` and after every projection,
and stops with a failure status (instead of raising) when an update
leaves ``int dom A`` or produces non-finite numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, NamedTuple, Optional, Union

import numpy as np

from . import models as _models
from .errors import (
    ConfigError,
    DomainViolation,
    NonFiniteGradient,
    NonFiniteValue,
    WellPosednessViolated,
)
from .estimators import GradientEstimate, estimator_problem, get_estimator
from .expfam import ExpParam, FamilyDescriptor, NatParam, bregman_dual, exp_to_nat, negative_entropy, sample
from .projections import ConstraintSet, project, project_natural

# --------------------------------------------------------------------------
# Schedules
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstantStep:
    eta: float

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise ConfigError(f"step.eta must lie in (0,1], got {self.eta}")

    def __call__(self, t: int) -> float:
        return self.eta


@dataclass(frozen=True)
class DecreasingStep:
    """``eta_t = 1 / (m (t/2 + 1))``."""

    m: float = 1.0

    def __post_init__(self):
        if not self.m >= 1.0:
            raise ConfigError(f"step.m must be >= 1 so that eta_0 <= 1, got {self.m}")

    def __call__(self, t: int) -> float:
        return 1.0 / (self.m * (t / 2.0 + 1.0))


def _ceil(v: float) -> int:
    r = round(v)
    return int(r) if abs(v - r) < 1e-9 * max(1.0, abs(v)) else math.ceil(v)


@dataclass(frozen=True)
class ConstantBatch:
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ConfigError(f"batch.n must be a positive integer, got {self.n}")

    def __call__(self, t: int) -> int:
        return int(self.n)


@dataclass(frozen=True)
class PolyBatch:
    """``N_t = ceil((t + 1)^gamma)``."""

    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ConfigError(f"batch.gamma must be positive, got {self.gamma}")

    def __call__(self, t: int) -> int:
        return max(1, _ceil((t + 1.0) ** self.gamma))


@dataclass(frozen=True)
class ClippedPolyBatch:
    """``N_t = max(n, ceil((1 + t)^gamma))``."""

    n: int
    gamma: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ConfigError(f"batch.n must be a positive integer, got {self.n}")
        if not self.gamma > 0:
            raise ConfigError(f"batch.gamma must be positive, got {self.gamma}")

    def __call__(self, t: int) -> int:
        return max(int(self.n), _ceil((t + 1.0) ** self.gamma))


StepRule = Union[ConstantStep, DecreasingStep]
BatchRule = Union[ConstantBatch, PolyBatch, ClippedPolyBatch]


@dataclass(frozen=True)
class Schedule:
    step: StepRule
    batch: BatchRule

    def values(self, t: int):
        return self.step(t), self.batch(t)

    def to_config(self) -> dict:
        if isinstance(self.step, ConstantStep):
            step = {"type": "constant", "eta": self.step.eta}
        else:
            step = {"type": "decreasing", "m": self.step.m}
        if isinstance(self.batch, ConstantBatch):
            batch = {"type": "constant", "n": self.batch.n}
        elif isinstance(self.batch, PolyBatch):
            batch = {"type": "poly", "gamma": self.batch.gamma}
        else:
            batch = {"type": "clipped_poly", "n": self.batch.n, "gamma": self.batch.gamma}
        return {"step": step, "batch": batch}

    @classmethod
    def from_config(cls, cfg: dict) -> "Schedule":
        step_cfg, batch_cfg = cfg["step"], cfg["batch"]
        kind = step_cfg.get("type", "constant")
        if kind == "constant":
            step = ConstantStep(float(step_cfg["eta"]))
        elif kind == "decreasing":
            step = DecreasingStep(float(step_cfg.get("m", 1.0)))
        else:
            raise ConfigError(f"unknown step type {kind!r}")
        kind = batch_cfg.get("type", "constant")
        if kind == "constant":
            batch = ConstantBatch(int(batch_cfg["n"]))
        elif kind == "poly":
            batch = PolyBatch(float(batch_cfg["gamma"]))
        elif kind == "clipped_poly":
            batch = ClippedPolyBatch(int(batch_cfg["n"]), float(batch_cfg["gamma"]))
        else:
            raise ConfigError(f"unknown batch type {kind!r}")
        return cls(step, batch)


def schedule_values(schedule: Schedule, t: int):
    """``(eta_t, N_t)``."""
    if t < 0:
        raise ValueError("t must be >= 0")
    return schedule.values(t)


# --------------------------------------------------------------------------
# One step
# --------------------------------------------------------------------------


def ngvi_step(omega: ExpParam, eta: float, g: Union[GradientEstimate, NatParam], c: ConstraintSet) -> ExpParam:
    """Mirror step in natural coordinates followed by the Bregman projection.

    Raises :class:`WellPosednessViolated` when the mixed natural parameter
    leaves ``int dom A``, unless ``c`` is an eigenvalue clip, which maps
    any invertible ``theta_plus`` back into ``C`` (see
    :func:`~ngvi.projections.project_natural`).
    """
    if not 0.0 < eta <= 1.0:
        raise ValueError(f"eta must lie in (0, 1], got {eta}")
    value = g.value if isinstance(g, GradientEstimate) else g
    theta_plus = (1.0 - eta) * exp_to_nat(omega) + eta * value
    if c.variant != "eigen_clip" and not theta_plus.is_interior():
        raise WellPosednessViolated("updated natural parameter left int dom A")
    try:
        return project_natural(theta_plus, c)
    except DomainViolation as exc:
        raise WellPosednessViolated(str(exc)) from None


def bregman_to_optimum(omega: ExpParam, omega_star: ExpParam) -> float:
    """``d_{A*}(omega_star, omega)``: the optimum goes first."""
    return bregman_dual(omega_star, omega)


def elbo_mc(model, omega: ExpParam, n_samples: int, rng: np.random.Generator) -> float:
    """``mean log pi~(X_i) - A*(omega)`` over ``n_samples`` draws from ``q_omega``."""
    xs = sample(omega, n_samples, rng)
    value = float(np.mean(model.log_density_batch(xs))) - negative_entropy(omega)
    if not math.isfinite(value):
        raise NonFiniteValue("Monte Carlo ELBO is not finite")
    return value


# --------------------------------------------------------------------------
# Run loop
# --------------------------------------------------------------------------


COMPLETED = "completed"
WELL_POSEDNESS_VIOLATED = "well_posedness_violated"
NON_FINITE = "non_finite"


class TraceRecord(NamedTuple):
    t: int
    eta: float
    batch: int
    budget: int
    bregman_to_opt: Optional[float]
    elbo_mc: Optional[float]


@dataclass
class RunTrace:
    records: List[TraceRecord] = field(default_factory=list)
    status: str = COMPLETED
    failed_at: Optional[int] = None
    seed: Optional[int] = None
    final: Optional[ExpParam] = field(default=None, repr=False, compare=False)

    @property
    def completed(self) -> bool:
        return self.status == COMPLETED

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)


@dataclass(frozen=True)
class Metrics:
    bregman: bool = False
    elbo_samples: Optional[int] = None
    stride: int = 1
    omega_star: Optional[ExpParam] = None


def default_init(model, family: FamilyDescriptor, rng: np.random.Generator) -> ExpParam:
    """Mean uniform on ``[-5, 5]^d`` with covariance ``10 I`` (``0.5 I`` for logistic).

    Student regressions start from the prior.
    """
    d = family.dim
    if isinstance(model, _models.StudentReg):
        mu = model.prior_mu0 if family.has_mean else None
        cov = model.prior_sigma0
        if family.is_diagonal:
            cov = np.diagonal(cov).copy()
        return ExpParam.from_moments(family, mu, cov)
    scale = 0.5 if isinstance(model, _models.Logistic) else 10.0
    mu = rng.uniform(-5.0, 5.0, d)
    cov = np.full(d, scale) if family.is_diagonal else scale * np.eye(d)
    return ExpParam.from_moments(family, mu if family.has_mean else None, cov)


def check_run_config(model, family, c, estimator, metrics) -> Optional[ExpParam]:
    """Validate the combination and return ``omega_star`` if the bregman metric needs it."""
    if model.dim != family.dim:
        raise ConfigError(f"model dimension {model.dim} differs from family dimension {family.dim}")
    try:
        c.check_family(family)
    except Exception as exc:
        raise ConfigError(str(exc)) from None
    if isinstance(estimator, str):
        problem = estimator_problem(model, family, estimator)
        if problem:
            raise ConfigError(problem)
    if metrics.bregman:
        star = metrics.omega_star
        if star is None:
            star = _models.optimum(model, family, c)
        if star is None:
            raise ConfigError(f"bregman metric needs a closed-form optimum, unavailable for {model.name!r} with {family.kind.value}")
        return star
    return None


def run(
    model,
    family: FamilyDescriptor,
    c: ConstraintSet,
    schedule: Schedule,
    estimator: Union[str, Callable],
    T: int,
    omega0: Optional[ExpParam] = None,
    seed: int = 0,
    metrics: Metrics = Metrics(),
) -> RunTrace:
    """Iterate :func:`ngvi_step` ``T`` times and record the requested metrics.

    The seed feeds three independent streams (estimator draws, metric
    draws, default initialisation) so that toggling a metric never changes
    the iterates.
    """
    if T < 1:
        raise ConfigError("T must be >= 1")
    omega_star = check_run_config(model, family, c, estimator, metrics)
    est = get_estimator(estimator) if isinstance(estimator, str) else estimator
    est_rng, metric_rng, init_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3))
    omega = default_init(model, family, init_rng) if omega0 is None else omega0
    if omega.family != family:
        raise ConfigError("omega0 belongs to a different family")
    omega = project(omega, c)
    stride = max(1, int(metrics.stride))

    trace = RunTrace(seed=seed)
    budget = 0
    for t in range(T + 1):
        eta, n = schedule.values(t)
        budget += n
        breg = elbo = None
        if t % stride == 0 or t == T:
            try:
                if omega_star is not None:
                    breg = bregman_to_optimum(omega, omega_star)
                if metrics.elbo_samples:
                    elbo = elbo_mc(model, omega, metrics.elbo_samples, metric_rng)
            except (NonFiniteValue, FloatingPointError):
                trace.status, trace.failed_at = NON_FINITE, t
                break
        trace.records.append(TraceRecord(t, eta, n, budget, breg, elbo))
        if t == T:
            break
        try:
            omega = ngvi_step(omega, eta, est(model, omega, n, est_rng), c)
        except WellPosednessViolated:
            trace.status, trace.failed_at = WELL_POSEDNESS_VIOLATED, t
            break
        except (NonFiniteGradient, NonFiniteValue, DomainViolation, FloatingPointError):
            trace.status, trace.failed_at = NON_FINITE, t
            break
    trace.final = omega
    return trace
