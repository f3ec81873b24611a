"""Projected stochastic natural-gradient variational inference for Gaussian families."""

from . import errors, estimators, expfam, kernels, models, optimizer, projections
from .expfam import ExpParam, FamilyDescriptor, Kind, MomentParam, NatParam
from .optimizer import Metrics, RunTrace, Schedule, ngvi_step, run
from .projections import ConstraintSet, EigenClip, NonNegativeMean, Unconstrained, project

__version__ = "0.1.0"

__all__ = [
    "errors",
    "estimators",
    "expfam",
    "kernels",
    "models",
    "optimizer",
    "projections",
    "ExpParam",
    "FamilyDescriptor",
    "Kind",
    "MomentParam",
    "NatParam",
    "Metrics",
    "RunTrace",
    "Schedule",
    "ngvi_step",
    "run",
    "ConstraintSet",
    "EigenClip",
    "NonNegativeMean",
    "Unconstrained",
    "project",
]
