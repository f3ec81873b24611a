"""Command line entry point: ``ngvi validate|run|aggregate|sweep``.

Exit codes: 0 success, 1 invalid configuration, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import os
import re
import sys
from typing import List, Optional, Sequence

from ..errors import NGVIError, ParseError
from . import config as _config
from .aggregate import aggregate_dir
from .runner import run_experiment

log = logging.getLogger("ngvi")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ngvi", description="Projected stochastic NGVI experiments")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a config and list every problem")
    p.add_argument("config", help="config file, or the name of a bundled config")

    p = sub.add_parser("run", help="run all seeds of a config")
    p.add_argument("config")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override base_seed")
    p.add_argument("--runs", type=int, help="override runs")
    p.add_argument("--iters", type=int, help="override iterations")
    p.add_argument("--jobs", type=int, help="worker processes (NGVI_JOBS overrides)")

    p = sub.add_parser("aggregate", help="summarise a results directory")
    p.add_argument("dir")
    p.add_argument("--stat", choices=("mean", "median-iqr"), default="mean")
    p.add_argument("--x", choices=("iteration", "budget"), default="iteration")
    p.add_argument("--metric", choices=("bregman_to_opt", "elbo_mc"), help="default: first metric present")
    p.add_argument("--out", required=True, help="aggregate CSV path")

    p = sub.add_parser("sweep", help="run a config once per point of a parameter grid")
    p.add_argument("config")
    p.add_argument("--grid", required=True, help='JSON object mapping dotted keys to value lists, e.g. {"schedule.batch.gamma": [0.5, 1]}')
    p.add_argument("--out", help="parent directory (default: the config's output or ./sweep)")
    p.add_argument("--jobs", type=int)

    sub.add_parser("configs", help="list bundled example configs")
    return parser


def _slug(value) -> str:
    text = json.dumps(value, sort_keys=True) if isinstance(value, (dict, list)) else str(value)
    return re.sub(r"[^A-Za-z0-9.+-]+", "_", text).strip("_")


def expand_grid(cfg: dict, grid: dict):
    """Yield ``(name, child_config)`` for every point of the Cartesian grid."""
    if not isinstance(grid, dict) or not grid:
        raise ParseError("grid must be a non-empty JSON object of dotted keys to value lists")
    keys = sorted(grid)
    for key in keys:
        if not isinstance(grid[key], list) or not grid[key]:
            raise ParseError(f"grid entry {key!r} must be a non-empty list")
    for i, combo in enumerate(itertools.product(*(grid[k] for k in keys))):
        child = cfg
        parts = []
        for key, value in zip(keys, combo):
            child = _config.set_path(child, key, value)
            parts.append(f"{key.split('.')[-1]}={_slug(value)}")
        yield f"{i:03d}_" + "_".join(parts), child


def _report(errors: List[str], stream) -> None:
    for err in errors:
        print(f"error: {err}", file=stream)


def _cmd_validate(args) -> int:
    cfg = _config.load_config(args.config)
    errors = _config.validate(cfg)
    if errors:
        _report(errors, sys.stderr)
        return EXIT_INVALID
    print("ok")
    return EXIT_OK


def _cmd_run(args) -> int:
    cfg = _config.load_config(args.config)
    cfg = _config.with_overrides(cfg, base_seed=args.seed, runs=args.runs, iterations=args.iters)
    errors = _config.validate(cfg)
    if errors:
        _report(errors, sys.stderr)
        return EXIT_INVALID
    result = run_experiment(cfg, args.out, jobs=args.jobs)
    m = result.manifest
    print(f"{m['runs']} runs, {m['failures']} failed, {m['wall_time_s']:.2f}s -> {args.out}")
    return EXIT_OK


def _cmd_aggregate(args) -> int:
    series = aggregate_dir(args.dir, args.x, args.stat, args.metric)
    series.to_csv(args.out)
    print(f"{len(series.x)} rows of {series.metric} -> {args.out}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = _config.load_config(args.config)
    try:
        with open(args.grid, encoding="utf-8") as fh:
            grid = json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read grid {args.grid}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed grid: {exc.msg}") from None
    children = list(expand_grid(cfg, grid))
    bad = False
    for name, child in children:
        errors = _config.validate(child)
        if errors:
            bad = True
            _report([f"{name}: {e}" for e in errors], sys.stderr)
    if bad:
        return EXIT_INVALID
    parent = args.out or cfg.get("output") or "sweep"
    for name, child in children:
        out = os.path.join(parent, name)
        result = run_experiment(child, out, jobs=args.jobs)
        print(f"{name}: {result.manifest['runs']} runs, {result.manifest['failures']} failed")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse usage error
        return int(exc.code) if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "configs":
        for name in _config.bundled_configs():
            print(name)
        return EXIT_OK
    handler = {"validate": _cmd_validate, "run": _cmd_run, "aggregate": _cmd_aggregate, "sweep": _cmd_sweep}[args.command]
    try:
        return handler(args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NGVIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
