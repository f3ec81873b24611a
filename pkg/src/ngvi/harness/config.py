"""Experiment configuration documents: loading, validation and object builders.

A configuration is a JSON object.  Example::

    {
      "family": "gaussian_full",
      "model": {"model": "gaussian", "dim": 5, "kappa": 10, "seed": 0},
      "estimator": "bonnet_price",
      "projection": {"projection": "none"},
      "schedule": {"step": {"type": "constant", "eta": 0.05},
                   "batch": {"type": "constant", "n": 100}},
      "iterations": 2000, "runs": 50, "base_seed": 0,
      "metrics": {"bregman": true, "elbo": {"n_samples": 100}, "metric_stride": 1}
    }

Data-driven models take either ``"csv"`` (path relative to the config
file) with ``"response"``/``"covariates"``, or ``"synthetic"`` with
``size``/``dim``/``seed`` for the seeded generators.
"""

from __future__ import annotations

import copy
import json
import os
from importlib import resources
from typing import Any, Dict, List, Optional

import numpy as np

from .. import models as _models
from ..errors import ConfigError, NGVIError, ParseError
from ..estimators import ESTIMATORS, estimator_problem
from ..expfam import ExpParam, FamilyDescriptor, Kind, MomentParam
from ..optimizer import Metrics, Schedule
from ..projections import ConstraintSet

MODEL_KINDS = ("gaussian", "blr", "logistic", "student")
FAMILY_ALIASES = {
    "gaussian_full": Kind.FULL,
    "full": Kind.FULL,
    "gaussian_diag": Kind.DIAG,
    "diag": Kind.DIAG,
    "gaussian_diag_centered": Kind.DIAG_CENTERED,
    "diag_centered": Kind.DIAG_CENTERED,
}
STEP_TYPES = ("constant", "decreasing")
BATCH_TYPES = ("constant", "poly", "clipped_poly")
PROJECTIONS = ("none", "eigen_clip", "nonneg_mean")

# defaults applied when a key is absent
DEFAULTS = {"runs": 1, "base_seed": 0, "estimator": "bonnet_price", "projection": {"projection": "none"}}


def bundled_configs() -> List[str]:
    root = resources.files("ngvi").joinpath("configs")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def resolve_path(path: str) -> str:
    """Return ``path`` if it exists, else the bundled config of that name."""
    if os.path.exists(path):
        return path
    name = os.path.basename(path)
    name = name[:-5] if name.endswith(".json") else name
    if name in bundled_configs():
        return str(resources.files("ngvi").joinpath("configs", name + ".json"))
    return path


def load_config(path: str) -> Dict[str, Any]:
    """Parse a config file; relative data paths are resolved against its directory."""
    path = resolve_path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read config {path}: {exc}") from None
    cfg = parse_config(text)
    cfg.setdefault("_base_dir", os.path.dirname(os.path.abspath(path)))
    return cfg


def parse_config(text: str) -> Dict[str, Any]:
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed config: {exc.msg} (line {exc.lineno})", row=exc.lineno) from None
    if not isinstance(cfg, dict):
        raise ParseError("config document must be a JSON object")
    return cfg


def public(cfg: Dict[str, Any]) -> Dict[str, Any]:
    """Copy without private bookkeeping keys (used for echoing)."""
    return {k: v for k, v in cfg.items() if not k.startswith("_")}


# --------------------------------------------------------------------------
# validation
# --------------------------------------------------------------------------


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and np.isfinite(v)


def _is_count(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool) and v >= 1


def _family_kind(cfg) -> Optional[Kind]:
    fam = cfg.get("family")
    if isinstance(fam, dict):
        fam = fam.get("kind")
    return FAMILY_ALIASES.get(fam) if isinstance(fam, str) else None


def _projection_cfg(cfg) -> Any:
    proj = cfg.get("projection", DEFAULTS["projection"])
    return {"projection": proj} if isinstance(proj, str) else proj


def _estimator_name(cfg) -> Any:
    est = cfg.get("estimator", DEFAULTS["estimator"])
    return est.get("estimator") if isinstance(est, dict) else est


def _validate_schedule(sched, errors: List[str]) -> None:
    if not isinstance(sched, dict):
        errors.append("schedule: must be an object with 'step' and 'batch'")
        return
    step = sched.get("step")
    if not isinstance(step, dict):
        errors.append("schedule.step: missing")
    else:
        kind = step.get("type", "constant")
        if kind == "constant":
            eta = step.get("eta")
            if not (_is_number(eta) and 0.0 < eta <= 1.0):
                errors.append(f"schedule.step.eta must lie in (0,1], got {eta!r}")
        elif kind == "decreasing":
            m = step.get("m", 1.0)
            if not (_is_number(m) and m >= 1.0):
                errors.append(f"schedule.step.m must be >= 1 so that every step size lies in (0,1], got {m!r}")
        else:
            errors.append(f"schedule.step.type must be one of {list(STEP_TYPES)}, got {kind!r}")
    batch = sched.get("batch")
    if not isinstance(batch, dict):
        errors.append("schedule.batch: missing")
        return
    kind = batch.get("type", "constant")
    if kind not in BATCH_TYPES:
        errors.append(f"schedule.batch.type must be one of {list(BATCH_TYPES)}, got {kind!r}")
        return
    if kind in ("constant", "clipped_poly") and not _is_count(batch.get("n")):
        errors.append(f"schedule.batch.n must be a positive integer, got {batch.get('n')!r}")
    if kind in ("poly", "clipped_poly"):
        gamma = batch.get("gamma")
        if not (_is_number(gamma) and gamma > 0):
            errors.append(f"schedule.batch.gamma must be positive, got {gamma!r}")


def _validate_model(model, errors: List[str]) -> None:
    if not isinstance(model, dict):
        errors.append("model: must be an object with a 'model' key")
        return
    kind = model.get("model")
    if kind not in MODEL_KINDS:
        errors.append(f"model.model must be one of {list(MODEL_KINDS)}, got {kind!r}")
        return
    if kind == "gaussian":
        if not _is_count(model.get("dim")):
            errors.append(f"model.dim must be a positive integer, got {model.get('dim')!r}")
        kappa = model.get("kappa", 1.0)
        if not (_is_number(kappa) and kappa >= 1.0):
            errors.append(f"model.kappa must be >= 1, got {kappa!r}")
        return
    has_csv, has_syn = "csv" in model, "synthetic" in model
    if has_csv == has_syn:
        errors.append("model: exactly one of 'csv' or 'synthetic' is required")
    if has_csv:
        if not isinstance(model.get("csv"), str):
            errors.append("model.csv must be a path")
        if not isinstance(model.get("response"), str):
            errors.append("model.response must name the response column")
    if has_syn:
        syn = model.get("synthetic")
        if not isinstance(syn, dict):
            errors.append("model.synthetic must be an object")
        else:
            for key in ("size", "dim"):
                if not _is_count(syn.get(key)):
                    errors.append(f"model.synthetic.{key} must be a positive integer, got {syn.get(key)!r}")
    scale = model.get("prior_scale", 5.0)
    if not (_is_number(scale) and scale > 0):
        errors.append(f"model.prior_scale must be positive, got {scale!r}")
    if kind in ("blr", "student"):
        v = model.get("noise_var", 1.0)
        if not (_is_number(v) and v > 0):
            errors.append(f"model.noise_var must be positive, got {v!r}")
    if kind == "student":
        dof = model.get("dof")
        if not (_is_number(dof) and dof > 0):
            errors.append(f"model.dof must be positive, got {dof!r}")


def validate(cfg: Dict[str, Any]) -> List[str]:
    """All violations of the config invariants, each prefixed by its field path.

    An empty list means the document can be run.  The input is not modified.
    """
    if not isinstance(cfg, dict):
        raise ParseError("config document must be a JSON object")
    errors: List[str] = []

    kind = _family_kind(cfg)
    if kind is None:
        errors.append(f"family must be one of {sorted(FAMILY_ALIASES)}, got {cfg.get('family')!r}")
    _validate_model(cfg.get("model"), errors)

    est = _estimator_name(cfg)
    if est not in ESTIMATORS:
        errors.append(f"estimator must be one of {sorted(ESTIMATORS)}, got {est!r}")

    proj = _projection_cfg(cfg)
    if not isinstance(proj, dict) or proj.get("projection") not in PROJECTIONS:
        errors.append(f"projection.projection must be one of {list(PROJECTIONS)}")
    else:
        try:
            c = ConstraintSet.from_config(proj)
        except KeyError as exc:
            errors.append(f"projection.{exc.args[0]}: missing")
        except (NGVIError, TypeError, ValueError) as exc:
            errors.append(f"projection: {exc}")
        else:
            if c.variant == "nonneg_mean" and kind is not None and kind is not Kind.DIAG:
                errors.append("projection: nonneg_mean requires family gaussian_diag")

    _validate_schedule(cfg.get("schedule"), errors)
    for key in ("iterations", "runs"):
        if key == "runs" and key not in cfg:
            continue
        if not _is_count(cfg.get(key)):
            errors.append(f"{key} must be a positive integer, got {cfg.get(key)!r}")
    seed = cfg.get("base_seed", 0)
    if not (isinstance(seed, int) and not isinstance(seed, bool) and seed >= 0):
        errors.append(f"base_seed must be a non-negative integer, got {seed!r}")

    metrics = cfg.get("metrics", {})
    if not isinstance(metrics, dict):
        errors.append("metrics: must be an object")
        metrics = {}
    elbo = metrics.get("elbo")
    if elbo not in (None, False):
        n = elbo.get("n_samples", 100) if isinstance(elbo, dict) else (100 if elbo is True else None)
        if not _is_count(n):
            errors.append(f"metrics.elbo.n_samples must be a positive integer, got {n!r}")
    stride = metrics.get("metric_stride", cfg.get("metric_stride", 1))
    if not _is_count(stride):
        errors.append(f"metrics.metric_stride must be a positive integer, got {stride!r}")
    for key in ("init", "omega_star"):
        src = cfg if key == "init" else metrics
        if src.get(key) is not None:
            try:
                MomentParam.from_dict(src[key])
            except (NGVIError, KeyError, TypeError, ValueError) as exc:
                errors.append(f"{'' if key == 'init' else 'metrics.'}{key}: {exc}")

    model_cfg = cfg.get("model")
    if errors or not isinstance(model_cfg, dict):
        return errors

    # cross references that need the built model
    try:
        model = build_model(cfg)
    except NGVIError as exc:
        errors.append(f"model: {exc}")
        return errors
    family = build_family(cfg, model)
    if family.dim != model.dim:
        errors.append(f"family.dim {family.dim} differs from the model dimension {model.dim}")
        return errors
    problem = estimator_problem(model, family, est)
    if problem:
        errors.append(f"estimator: {problem}")
    if metrics.get("bregman"):
        if metrics.get("omega_star") is None:
            c = build_constraint(cfg)
            try:
                star = _models.optimum(model, family, c)
            except NGVIError as exc:
                star, problem = None, str(exc)
            else:
                problem = f"no closed-form optimum for model {model.name!r} with family {family.kind.value}"
            if star is None:
                errors.append(f"metrics.bregman: {problem}; supply metrics.omega_star or drop the metric")
    for key in ("init", "omega_star"):
        src = cfg if key == "init" else metrics
        if src.get(key) is not None:
            mp = MomentParam.from_dict(src[key])
            if np.size(mp.mu) != family.dim:
                errors.append(f"{'' if key == 'init' else 'metrics.'}{key}.mu has length {np.size(mp.mu)}, expected {family.dim}")
    return errors


def check(cfg: Dict[str, Any]) -> None:
    errors = validate(cfg)
    if errors:
        raise ConfigError("; ".join(errors))


# --------------------------------------------------------------------------
# builders
# --------------------------------------------------------------------------


def _dataset(model_cfg: Dict[str, Any], base_dir: str, kind: str) -> _models.Dataset:
    if "csv" in model_cfg:
        path = model_cfg["csv"]
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        return _models.load_csv(
            path,
            model_cfg["response"],
            model_cfg.get("covariates"),
            standardize=model_cfg.get("standardize", True),
            standardize_response=model_cfg.get("standardize_response", kind != "logistic"),
        )
    syn = model_cfg["synthetic"]
    seed = syn.get("seed", 0)
    if kind == "logistic":
        return _models.synthetic_logistic(syn["size"], syn["dim"], seed, x_star=syn.get("x_star", 5.0), box=syn.get("box", 5.0))
    noise = "student" if kind == "student" else "gaussian"
    return _models.synthetic_regression(
        syn["size"], syn["dim"], seed, noise=syn.get("noise", noise), dof=syn.get("dof", model_cfg.get("dof", 3.0))
    )


def build_model(cfg: Dict[str, Any]):
    m = cfg["model"]
    kind = m["model"]
    if kind == "gaussian":
        return _models.synthetic_gaussian(m["dim"], m.get("kappa", 1.0), m.get("seed", 0))
    data = _dataset(m, cfg.get("_base_dir", "."), kind)
    scale = m.get("prior_scale", 5.0)
    if kind == "blr":
        return _models.BayesLinReg(data, scale, m.get("noise_var", 1.0))
    if kind == "logistic":
        return _models.Logistic(data, scale)
    return _models.StudentReg(data, m.get("prior_mean"), scale, m.get("noise_var", 1.0), m["dof"])


def build_family(cfg: Dict[str, Any], model=None) -> FamilyDescriptor:
    fam = cfg["family"]
    dim = fam.get("dim") if isinstance(fam, dict) else None
    if dim is None:
        dim = model.dim if model is not None else build_model(cfg).dim
    return FamilyDescriptor(_family_kind(cfg), int(dim))


def build_constraint(cfg: Dict[str, Any]) -> ConstraintSet:
    return ConstraintSet.from_config(_projection_cfg(cfg))


def build_schedule(cfg: Dict[str, Any]) -> Schedule:
    return Schedule.from_config(cfg["schedule"])


def build_metrics(cfg: Dict[str, Any], family: FamilyDescriptor) -> Metrics:
    metrics = cfg.get("metrics", {})
    elbo = metrics.get("elbo")
    n = None
    if isinstance(elbo, dict):
        n = int(elbo.get("n_samples", 100))
    elif elbo is True:
        n = 100
    star = None
    if metrics.get("omega_star") is not None:
        star = moment_to_exp(MomentParam.from_dict(metrics["omega_star"]), family)
    stride = metrics.get("metric_stride", cfg.get("metric_stride", 1))
    return Metrics(bregman=bool(metrics.get("bregman")), elbo_samples=n, stride=int(stride), omega_star=star)


def build_init(cfg: Dict[str, Any], family: FamilyDescriptor) -> Optional[ExpParam]:
    if cfg.get("init") is None:
        return None
    return moment_to_exp(MomentParam.from_dict(cfg["init"]), family)


def moment_to_exp(mp: MomentParam, family: FamilyDescriptor) -> ExpParam:
    sigma = np.asarray(mp.sigma, dtype=float)
    if family.is_diagonal and sigma.ndim == 2:
        sigma = np.diagonal(sigma).copy()
    mu = np.asarray(mp.mu, dtype=float) if family.has_mean else None
    return ExpParam.from_moments(family, mu, sigma)


def with_overrides(cfg: Dict[str, Any], **overrides) -> Dict[str, Any]:
    """Copy of ``cfg`` with top-level keys replaced (``None`` values ignored)."""
    out = copy.deepcopy(cfg)
    for key, value in overrides.items():
        if value is not None:
            out[key] = value
    return out


def set_path(cfg: Dict[str, Any], dotted: str, value) -> Dict[str, Any]:
    """Copy of ``cfg`` with ``a.b.c`` set to ``value`` (intermediate objects created)."""
    out = copy.deepcopy(cfg)
    node = out
    parts = dotted.split(".")
    for part in parts[:-1]:
        if not isinstance(node.get(part), dict):
            node[part] = {}
        node = node[part]
    node[parts[-1]] = value
    return out
