"""Target posteriors, datasets, and closed-form optima for conjugate cases.

Every model works in full-family coordinates internally: ``(a, B)`` pairs
for natural-parameter images with ``a`` in R^d and ``B`` symmetric d x d.
:func:`~ngvi.expfam.pull_back_gradient` turns them into the coordinates of
whichever approximating family is in use.

Log-densities are reported up to an additive constant, except for
:class:`SyntheticGaussian`, whose log-density is normalised with respect to
the ``(2*pi)**(-d/2) * Lebesgue`` base measure shared with :mod:`ngvi.expfam`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .errors import (
    DomainViolation,
    InvalidArgument,
    IoError,
    ModelCapabilityMissing,
    NonFiniteValue,
    ParseError,
    SchemaError,
)
from .expfam import ExpParam, FamilyDescriptor, Kind, NatParam, full, log_partition, nat_to_exp, pull_back_gradient
from .projections import ConstraintSet, project


# --------------------------------------------------------------------------
# Data
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    """Covariates ``z`` (M x d) and responses ``y`` (M,)."""

    z: np.ndarray
    y: np.ndarray
    standardized: bool = False
    columns: tuple = field(default=(), compare=False)

    def __post_init__(self):
        z = np.array(self.z, dtype=float)
        y = np.array(self.y, dtype=float).reshape(-1)
        if z.ndim != 2 or z.shape[0] != y.size:
            raise SchemaError(f"covariates {z.shape} and responses {y.shape} do not align")
        if y.size < 1:
            raise SchemaError("a dataset needs at least one row")
        if not (np.all(np.isfinite(z)) and np.all(np.isfinite(y))):
            raise ParseError("dataset contains non-finite entries")
        z.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "y", y)

    @property
    def size(self) -> int:
        return self.y.size

    @property
    def dim(self) -> int:
        return self.z.shape[1]


def _standardize(a: np.ndarray) -> np.ndarray:
    sd = a.std(axis=0, ddof=1)
    sd = np.where(sd > 0, sd, 1.0)
    return (a - a.mean(axis=0)) / sd


def load_csv(
    path,
    response_column: str,
    covariate_columns: Optional[Sequence[str]] = None,
    standardize: bool = False,
    standardize_response: bool = False,
) -> Dataset:
    """Read a headed, comma-separated UTF-8 file into a :class:`Dataset`.

    ``covariate_columns=None`` takes every column except the response.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path} is empty") from None
        if response_column not in header:
            raise SchemaError(f"missing response column {response_column!r}")
        if covariate_columns is None:
            covariate_columns = [h for h in header if h != response_column]
        for name in covariate_columns:
            if name not in header:
                raise SchemaError(f"missing covariate column {name!r}")
        cols = [header.index(c) for c in covariate_columns]
        ycol = header.index(response_column)
        rows_z, rows_y = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                vals = [float(row[i]) for i in cols]
                yv = float(row[ycol])
            except (ValueError, IndexError):
                raise ParseError(f"{path}: row {lineno} has a missing or non-numeric entry", row=lineno) from None
            if not all(math.isfinite(v) for v in vals + [yv]):
                raise ParseError(f"{path}: row {lineno} has a non-finite entry", row=lineno)
            rows_z.append(vals)
            rows_y.append(yv)
    if not rows_y:
        raise SchemaError(f"{path} has no data rows")
    z = np.array(rows_z, dtype=float).reshape(len(rows_y), len(cols))
    y = np.array(rows_y, dtype=float)
    if standardize:
        z = _standardize(z)
    if standardize_response:
        y = _standardize(y[:, None])[:, 0]
    return Dataset(z, y, standardized=standardize, columns=tuple(covariate_columns))


def synthetic_regression(
    size: int,
    dim: int,
    seed: int,
    noise: str = "gaussian",
    dof: float = 3.0,
    noise_scale: float = 1.0,
) -> Dataset:
    """Seeded stand-in for a tabular regression dataset; all variables standardised."""
    rng = np.random.default_rng(seed)
    z = _standardize(rng.standard_normal((size, dim)))
    coef = rng.standard_normal(dim)
    if noise == "gaussian":
        eps = rng.standard_normal(size)
    elif noise == "student":
        eps = rng.standard_t(dof, size)
    else:
        raise InvalidArgument(f"unknown noise {noise!r}")
    y = z @ coef + noise_scale * eps
    y = _standardize(y[:, None])[:, 0]
    return Dataset(z, y, standardized=True)


def synthetic_logistic(size: int, dim: int, seed: int, x_star: float = 5.0, box: float = 5.0) -> Dataset:
    """Covariates uniform on ``[-box, box]^d``, labels Bernoulli(sigmoid(<x_star*1, z>))."""
    rng = np.random.default_rng(seed)
    z = rng.uniform(-box, box, size=(size, dim))
    p = 1.0 / (1.0 + np.exp(-(z @ np.full(dim, x_star))))
    y = (rng.uniform(size=size) < p).astype(float)
    return Dataset(z, y)


# --------------------------------------------------------------------------
# Models
# --------------------------------------------------------------------------


def _as_cov(s, dim: int) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if s.ndim == 0:
        s = s * np.eye(dim)
    elif s.ndim == 1:
        s = np.diag(s)
    if s.shape != (dim, dim):
        raise InvalidArgument(f"prior covariance has shape {s.shape}, expected {(dim, dim)}")
    try:
        np.linalg.cholesky(s)
    except np.linalg.LinAlgError:
        raise DomainViolation("prior covariance must be positive definite") from None
    return 0.5 * (s + s.T)


class TargetModel:
    """Common interface; subclasses fill in what they can."""

    name = "abstract"
    conjugate = False
    finite_sum = False
    has_hessian = True

    dim: int

    def capabilities(self) -> dict:
        return {
            "log_density": True,
            "gradient": True,
            "hessian": self.has_hessian,
            "finite_sum": self.finite_sum,
            "conjugate": self.conjugate,
        }

    # single point --------------------------------------------------------
    def log_density(self, x) -> float:
        return float(self.log_density_batch(np.atleast_2d(np.asarray(x, dtype=float)))[0])

    def grad_hess(self, x):
        g, h = self.grad_hess_sum(np.atleast_2d(np.asarray(x, dtype=float)))
        return g, h

    def gradient(self, x) -> np.ndarray:
        return self.grad_hess(x)[0]

    def hessian(self, x) -> np.ndarray:
        return self.grad_hess(x)[1]

    # batched -------------------------------------------------------------
    def log_density_batch(self, xs: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad_hess_sum(self, xs: np.ndarray):
        """Sum over the rows of ``xs`` of the gradient and Hessian of ``log pi``."""
        raise NotImplementedError

    # conjugate / finite-sum structure -----------------------------------
    def posterior_nat_full(self):
        raise ModelCapabilityMissing(f"{self.name} has no closed-form posterior")

    def prior_nat_full(self):
        raise ModelCapabilityMissing(f"{self.name} is not of finite-sum form")

    def data_nat_full(self, counts: np.ndarray):
        raise ModelCapabilityMissing(f"{self.name} has no closed-form per-datum natural parameters")

    @property
    def n_data(self) -> int:
        raise ModelCapabilityMissing(f"{self.name} is not of finite-sum form")


class SyntheticGaussian(TargetModel):
    """Gaussian target ``pi = q_{theta_pi}`` with a normalised log-density."""

    name = "gaussian"
    conjugate = True

    def __init__(self, theta_pi: NatParam):
        if theta_pi.family.kind is not Kind.FULL:
            raise InvalidArgument("theta_pi must be a full-family natural parameter")
        if not theta_pi.is_interior():
            raise DomainViolation("theta_pi is outside int dom A")
        self.theta_pi = theta_pi
        self.dim = theta_pi.family.dim
        self._log_z = log_partition(theta_pi)
        omega = nat_to_exp(theta_pi)
        self.mu = np.array(omega.mean)
        self.sigma = np.array(omega.cov)
        self.precision = -2.0 * np.array(theta_pi.theta2)

    def log_density_batch(self, xs):
        t1, t2 = self.theta_pi.theta1, self.theta_pi.theta2
        return xs @ t1 + np.einsum("ni,ij,nj->n", xs, t2, xs) - self._log_z

    def grad_hess_sum(self, xs):
        n = xs.shape[0]
        g = n * self.theta_pi.theta1 + 2.0 * xs.sum(axis=0) @ self.theta_pi.theta2
        return g, n * 2.0 * np.array(self.theta_pi.theta2)

    def posterior_nat_full(self):
        return np.array(self.theta_pi.theta1), np.array(self.theta_pi.theta2)


class BayesLinReg(TargetModel):
    """Gaussian likelihood ``y | x ~ N(x^T z, noise_var)`` with prior ``N(0, Sigma0)``."""

    name = "blr"
    conjugate = True
    finite_sum = True

    def __init__(self, data: Dataset, prior_sigma0, noise_var: float):
        if not noise_var > 0:
            raise InvalidArgument("noise_var must be positive")
        self.data = data
        self.dim = data.dim
        self.noise_var = float(noise_var)
        self.prior_sigma0 = _as_cov(prior_sigma0, self.dim)
        self.prior_precision = np.linalg.inv(self.prior_sigma0)

    @property
    def n_data(self) -> int:
        return self.data.size

    def log_density_batch(self, xs):
        r = self.data.y - xs @ self.data.z.T
        prior = -0.5 * np.einsum("ni,ij,nj->n", xs, self.prior_precision, xs)
        return prior - 0.5 * (r * r).sum(axis=1) / self.noise_var

    def grad_hess_sum(self, xs):
        n = xs.shape[0]
        z, y = self.data.z, self.data.y
        r = y - xs @ z.T
        g = r.sum(axis=0) @ z / self.noise_var - xs.sum(axis=0) @ self.prior_precision
        h = -n * (z.T @ z / self.noise_var + self.prior_precision)
        return g, h

    def prior_nat_full(self):
        return np.zeros(self.dim), -0.5 * self.prior_precision

    def data_nat_full(self, counts):
        """``sum_m counts[m] * theta_{y_m}`` with ``theta_y = (y z, -z z^T / 2) / noise_var``."""
        counts = np.asarray(counts, dtype=float)
        z, y = self.data.z, self.data.y
        a = ((counts * y) @ z) / self.noise_var
        b = -((z.T * counts) @ z) / (2.0 * self.noise_var)
        return a, b

    def posterior_nat_full(self):
        a0, b0 = self.prior_nat_full()
        a, b = self.data_nat_full(np.ones(self.n_data))
        return a0 + a, b0 + b


class Logistic(TargetModel):
    """Bernoulli likelihood with success probability ``sigmoid(z^T x)`` and prior ``N(0, Sigma0)``."""

    name = "logistic"
    finite_sum = True

    def __init__(self, data: Dataset, prior_sigma0):
        self.data = data
        self.dim = data.dim
        self.prior_sigma0 = _as_cov(prior_sigma0, self.dim)
        self.prior_precision = np.linalg.inv(self.prior_sigma0)

    @property
    def n_data(self) -> int:
        return self.data.size

    def log_density_batch(self, xs):
        ll = kernels.logistic_loglik(xs, self.data.z, self.data.y)
        return ll - 0.5 * np.einsum("ni,ij,nj->n", xs, self.prior_precision, xs)

    def grad_hess_sum(self, xs):
        g, h = kernels.logistic_grad_hess_sum(xs, self.data.z, self.data.y)
        n = xs.shape[0]
        return g - xs.sum(axis=0) @ self.prior_precision, h - n * self.prior_precision


class StudentReg(TargetModel):
    """Student-t likelihood (scale ``noise_var``, ``dof`` degrees of freedom) with prior ``N(mu0, Sigma0)``."""

    name = "student"
    finite_sum = True

    def __init__(self, data: Dataset, prior_mu0, prior_sigma0, noise_var: float, dof: float):
        if not noise_var > 0:
            raise InvalidArgument("noise_var must be positive")
        if not dof > 0:
            raise InvalidArgument("dof must be positive")
        self.data = data
        self.dim = data.dim
        self.noise_var = float(noise_var)
        self.dof = float(dof)
        self.prior_mu0 = np.zeros(self.dim) if prior_mu0 is None else np.asarray(prior_mu0, dtype=float).reshape(-1)
        self.prior_sigma0 = _as_cov(prior_sigma0, self.dim)
        self.prior_precision = np.linalg.inv(self.prior_sigma0)

    @property
    def n_data(self) -> int:
        return self.data.size

    def log_density_batch(self, xs):
        ll = kernels.student_loglik(xs, self.data.z, self.data.y, self.dof, self.noise_var)
        c = xs - self.prior_mu0
        return ll - 0.5 * np.einsum("ni,ij,nj->n", c, self.prior_precision, c)

    def grad_hess_sum(self, xs):
        g, h = kernels.student_grad_hess_sum(xs, self.data.z, self.data.y, self.dof, self.noise_var)
        n = xs.shape[0]
        return (
            g - (xs - self.prior_mu0).sum(axis=0) @ self.prior_precision,
            h - n * self.prior_precision,
        )


# --------------------------------------------------------------------------
# Operations
# --------------------------------------------------------------------------


def random_orthogonal(dim: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q * np.sign(np.diagonal(r))


def synthetic_gaussian(dim: int, kappa: float, seed: int) -> SyntheticGaussian:
    """Gaussian target with a log-spaced spectrum on ``[1, kappa]`` and a random eigenbasis."""
    if not kappa >= 1:
        raise InvalidArgument(f"kappa must be >= 1, got {kappa}")
    rng = np.random.default_rng(seed)
    q = random_orthogonal(dim, rng)
    lam = np.logspace(0.0, np.log10(kappa), dim) if dim > 1 else np.ones(1)
    sigma = (q * lam) @ q.T
    sigma = 0.5 * (sigma + sigma.T)
    mu = rng.uniform(-1.0, 1.0, dim)
    precision = (q / lam) @ q.T
    precision = 0.5 * (precision + precision.T)
    theta = NatParam(full(dim), precision @ mu, -0.5 * precision)
    model = SyntheticGaussian(theta)
    model.sigma = sigma
    return model


def blr_posterior_nat(model: BayesLinReg) -> NatParam:
    """``theta_pi = (sum y z / s2, theta0 - sum z z^T / (2 s2))``."""
    if not isinstance(model, BayesLinReg):
        raise ModelCapabilityMissing("blr_posterior_nat needs a BayesLinReg model")
    a, b = model.posterior_nat_full()
    theta = NatParam(full(model.dim), a, b)
    if not theta.is_interior():
        raise DomainViolation("posterior precision is not positive definite")
    return theta


def per_datum_nat(model: TargetModel, m: int, omega: ExpParam) -> NatParam:
    """``theta_{y_m}(omega)`` in ``omega``'s family coordinates (``m`` is 0-based)."""
    if not model.finite_sum:
        raise ModelCapabilityMissing(f"{model.name} is not of finite-sum form")
    if not 0 <= m < model.n_data:
        raise IndexError(f"datum index {m} out of range [0, {model.n_data})")
    counts = np.zeros(model.n_data)
    counts[m] = 1.0
    a, b = model.data_nat_full(counts)
    return pull_back_gradient(omega.family, a, b, omega.mean)


def log_density_grad_hess(model: TargetModel, x):
    """``(log pi(x) + const, grad, Hessian)`` at a single point."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    value = float(model.log_density_batch(x)[0])
    g, h = model.grad_hess_sum(x)
    if not (math.isfinite(value) and np.all(np.isfinite(g)) and np.all(np.isfinite(h))):
        raise NonFiniteValue(f"{model.name}: non-finite log-density or derivative at x={x[0]}")
    return value, g, h


def lerc_natural(model: TargetModel, family: FamilyDescriptor) -> Optional[NatParam]:
    """``L^T theta_pi`` for ``family``, or None when the embedding does not exist."""
    if not model.conjugate:
        return None
    a, b = model.posterior_nat_full()
    if family.kind is Kind.DIAG:
        off = b - np.diag(np.diagonal(b))
        if np.max(np.abs(off)) > 1e-14 * max(1.0, np.max(np.abs(b))):
            return None
    return pull_back_gradient(family, a, b, np.zeros(family.dim))


def optimum(model: TargetModel, family: FamilyDescriptor, c: ConstraintSet) -> Optional[ExpParam]:
    """``proj_C(grad A(L^T theta_pi))`` for conjugate models; None when unavailable."""
    theta = lerc_natural(model, family)
    if theta is None:
        return None
    if not theta.is_interior():
        raise DomainViolation("L^T theta_pi is outside int dom A")
    return project(nat_to_exp(theta), c)
