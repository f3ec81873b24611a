"""Cross-run aggregation of traces: mean, or median with interquartile band."""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from ..errors import EmptyInput, IoError, MisalignedTraces, ParseError, SchemaError
from ..optimizer import COMPLETED, RunTrace, TraceRecord
from .runner import METRICS, RESULTS_HEADER

ABSCISSAE = ("iteration", "budget")
STATISTICS = ("mean", "median_iqr")


@dataclass(frozen=True)
class AggregateSeries:
    abscissa: str
    statistic: str
    metric: str
    x: np.ndarray
    center: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    count: np.ndarray

    def rows(self):
        return zip(self.x, self.center, self.lo, self.hi)

    def to_csv(self, path: str) -> None:
        try:
            with open(path, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(("x", "center", "lo", "hi"))
                for x, c, lo, hi in self.rows():
                    writer.writerow((int(x), repr(float(c)), repr(float(lo)), repr(float(hi))))
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc}") from exc


def _normalise_statistic(statistic: str) -> str:
    s = statistic.replace("-", "_")
    if s not in STATISTICS:
        raise ValueError(f"statistic must be one of {STATISTICS}, got {statistic!r}")
    return s


def aggregate(
    traces: Sequence[RunTrace],
    abscissa: str = "iteration",
    statistic: str = "mean",
    metric: str = "bregman_to_opt",
) -> AggregateSeries:
    """Pointwise statistic of ``metric`` across runs.

    Truncated runs contribute the records they have.  Runs must agree on
    the batch (for ``iteration``) or the budget (for ``budget``) at every
    shared iteration, otherwise :class:`MisalignedTraces` is raised.
    """
    statistic = _normalise_statistic(statistic)
    if abscissa not in ABSCISSAE:
        raise ValueError(f"abscissa must be one of {ABSCISSAE}, got {abscissa!r}")
    if not traces or not any(t.completed for t in traces):
        raise EmptyInput("no completed trace to aggregate")

    reference: Dict[int, TraceRecord] = {}
    values: Dict[int, List[float]] = {}
    for trace in traces:
        for rec in trace.records:
            ref = reference.setdefault(rec.t, rec)
            if ref.batch != rec.batch or ref.budget != rec.budget:
                raise MisalignedTraces(f"runs disagree on the schedule at iteration {rec.t}")
            v = getattr(rec, metric)
            if v is not None and np.isfinite(v):
                values.setdefault(rec.t, []).append(float(v))
    if not values:
        raise EmptyInput(f"no recorded values of {metric!r}")

    ts = sorted(values)
    x = np.array([ts_ if abscissa == "iteration" else reference[ts_].budget for ts_ in ts], dtype=float)
    if np.any(np.diff(x) <= 0):
        raise MisalignedTraces("abscissa is not strictly increasing")
    center = np.empty(len(ts))
    lo = np.empty(len(ts))
    hi = np.empty(len(ts))
    count = np.empty(len(ts), dtype=int)
    for i, t in enumerate(ts):
        v = np.asarray(values[t])
        count[i] = v.size
        if statistic == "mean":
            center[i] = lo[i] = hi[i] = v.mean()
        else:
            lo[i], center[i], hi[i] = np.quantile(v, [0.25, 0.5, 0.75], method="linear")
    return AggregateSeries(abscissa, statistic, metric, x, center, lo, hi, count)


def load_traces(result_dir: str) -> List[RunTrace]:
    """Rebuild per-run traces from ``results.csv`` (statuses from ``manifest.json`` when present)."""
    path = os.path.join(result_dir, "results.csv")
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot open {path}: {exc}") from exc
    per_run: Dict[int, Dict[int, dict]] = {}
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != RESULTS_HEADER:
            raise SchemaError(f"{path}: header must be {','.join(RESULTS_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                run, it, eta, batch, budget, metric, value = row
                key = (int(run), int(it))
                rec = per_run.setdefault(key[0], {}).setdefault(
                    key[1], {"t": key[1], "eta": float(eta), "batch": int(batch), "budget": int(budget)}
                )
                if metric not in METRICS:
                    raise ValueError(metric)
                rec[metric] = float(value)
            except ValueError:
                raise ParseError(f"{path}: malformed row {lineno}", row=lineno) from None
    statuses = _manifest_statuses(result_dir)
    traces = []
    for run in sorted(per_run):
        recs = [
            TraceRecord(r["t"], r["eta"], r["batch"], r["budget"], r.get("bregman_to_opt"), r.get("elbo_mc"))
            for _, r in sorted(per_run[run].items())
        ]
        st = statuses.get(run, {})
        traces.append(RunTrace(recs, st.get("status", COMPLETED), st.get("failed_at"), st.get("seed")))
    # runs that failed before recording anything still count as failures
    for run, st in statuses.items():
        if run not in per_run:
            traces.append(RunTrace([], st.get("status", COMPLETED), st.get("failed_at"), st.get("seed")))
    return traces


def _manifest_statuses(result_dir: str) -> Dict[int, dict]:
    path = os.path.join(result_dir, "manifest.json")
    if not os.path.exists(path):
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read {path}: {exc}") from None
    return {int(s["run"]): s for s in manifest.get("statuses", [])}


def available_metrics(traces: Iterable[RunTrace]) -> List[str]:
    found = []
    for name in METRICS:
        if any(getattr(r, name) is not None for t in traces for r in t.records):
            found.append(name)
    return found


def aggregate_dir(
    result_dir: str,
    abscissa: str = "iteration",
    statistic: str = "mean",
    metric: Optional[str] = None,
) -> AggregateSeries:
    traces = load_traces(result_dir)
    if metric is None:
        names = available_metrics(traces)
        if not names:
            raise EmptyInput(f"{result_dir} holds no metric values")
        metric = names[0]
    return aggregate(traces, abscissa, statistic, metric)
