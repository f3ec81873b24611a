"""Seeded multi-run execution and result files.

``run_experiment`` executes ``runs`` independent runs with seeds
``base_seed + r`` and writes ``results.csv`` and ``manifest.json`` to the
output directory.  The CSV holds one row per (run, iteration, metric) and
depends only on the config, so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional

from .. import kernels
from ..errors import ConfigError, IoError
from ..optimizer import RunTrace, run
from . import config as _config

RESULTS_HEADER = ("run", "iter", "eta", "batch", "budget", "metric", "value")
METRICS = ("bregman_to_opt", "elbo_mc")

# per-process cache so that pool workers build the model once
_BUILT: Dict[str, Any] = {}


@dataclass
class ExperimentResult:
    traces: List[RunTrace]
    manifest: Dict[str, Any]
    out_dir: Optional[str]


def default_jobs(jobs: Optional[int] = None) -> int:
    """``NGVI_JOBS`` wins over ``jobs``; fall back to the usable CPU count."""
    env = os.environ.get("NGVI_JOBS")
    if env:
        try:
            jobs = int(env)
        except ValueError:
            raise ConfigError(f"NGVI_JOBS must be an integer, got {env!r}") from None
    if jobs is None:
        try:
            jobs = len(os.sched_getaffinity(0))
        except AttributeError:
            jobs = os.cpu_count() or 1
    return max(1, int(jobs))


def _objects(cfg_json: str):
    objs = _BUILT.get(cfg_json)
    if objs is None:
        cfg = json.loads(cfg_json)
        model = _config.build_model(cfg)
        family = _config.build_family(cfg, model)
        objs = (
            model,
            family,
            _config.build_constraint(cfg),
            _config.build_schedule(cfg),
            _config._estimator_name(cfg),
            int(cfg["iterations"]),
            _config.build_init(cfg, family),
            _config.build_metrics(cfg, family),
        )
        _BUILT.clear()
        _BUILT[cfg_json] = objs
    return objs


def _one_run(cfg_json: str, seed: int) -> RunTrace:
    model, family, c, schedule, estimator, T, omega0, metrics = _objects(cfg_json)
    trace = run(model, family, c, schedule, estimator, T, omega0=omega0, seed=seed, metrics=metrics)
    trace.final = None  # keep pickles small; the CSV is the product
    return trace


def execute(cfg: Dict[str, Any], jobs: Optional[int] = None) -> List[RunTrace]:
    """Run all seeds of a validated config and return traces in run order."""
    cfg_json = json.dumps(cfg, sort_keys=True)
    seeds = [int(cfg.get("base_seed", 0)) + r for r in range(int(cfg.get("runs", 1)))]
    # surface configuration problems in the parent before spawning workers
    _objects(cfg_json)
    n_jobs = min(default_jobs(jobs), len(seeds))
    if n_jobs <= 1:
        return [_one_run(cfg_json, s) for s in seeds]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(_one_run, [cfg_json] * len(seeds), seeds))


def trace_rows(run_index: int, trace: RunTrace):
    for rec in trace.records:
        for name in METRICS:
            value = getattr(rec, name)
            if value is not None:
                yield (run_index, rec.t, repr(float(rec.eta)), rec.batch, rec.budget, name, repr(float(value)))


def write_results(path: str, traces: List[RunTrace]) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(RESULTS_HEADER)
            for r, trace in enumerate(traces):
                writer.writerows(trace_rows(r, trace))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def run_experiment(
    cfg: Dict[str, Any],
    out_dir: Optional[str] = None,
    jobs: Optional[int] = None,
) -> ExperimentResult:
    """Validate, execute every run and (if ``out_dir``) write results and manifest."""
    _config.check(cfg)
    if out_dir is None:
        out_dir = cfg.get("output")
    if out_dir is not None:
        try:
            os.makedirs(out_dir, exist_ok=True)
        except OSError as exc:
            raise IoError(f"cannot create output directory {out_dir}: {exc}") from exc
    start = time.perf_counter()
    traces = execute(cfg, jobs)
    wall = time.perf_counter() - start
    seeds = [t.seed for t in traces]
    manifest = {
        "config": _config.public(cfg),
        "seeds": seeds,
        "runs": len(traces),
        "failures": sum(not t.completed for t in traces),
        "statuses": [
            {"run": r, "seed": t.seed, "status": t.status, "failed_at": t.failed_at, "records": len(t.records)}
            for r, t in enumerate(traces)
        ],
        "wall_time_s": wall,
        "backend": kernels.BACKEND,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    if out_dir is not None:
        write_results(os.path.join(out_dir, "results.csv"), traces)
        path = os.path.join(out_dir, "manifest.json")
        try:
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(manifest, fh, indent=2)
                fh.write("\n")
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc}") from exc
    return ExperimentResult(traces, manifest, out_dir)
