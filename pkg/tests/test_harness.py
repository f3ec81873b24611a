import csv
import json
import os

import numpy as np
import pytest

from ngvi import expfam, optimizer as op
from ngvi.errors import EmptyInput, MisalignedTraces, ParseError
from ngvi.harness import cli, config as _config, runner
from ngvi.harness.aggregate import aggregate, aggregate_dir, load_traces
from ngvi.optimizer import RunTrace, TraceRecord

from test_optimizer import Bumpy


def small_cfg(**over):
    cfg = {
        "family": "gaussian_full",
        "model": {"model": "gaussian", "dim": 3, "kappa": 10, "seed": 0},
        "estimator": "bonnet_price",
        "projection": {"projection": "none"},
        "schedule": {"step": {"type": "constant", "eta": 0.2}, "batch": {"type": "constant", "n": 5}},
        "iterations": 20,
        "runs": 4,
        "base_seed": 11,
        "metrics": {"bregman": True, "elbo": {"n_samples": 10}},
    }
    cfg.update(over)
    return cfg


@pytest.fixture(autouse=True)
def _serial(monkeypatch):
    monkeypatch.setenv("NGVI_JOBS", "1")


# ---------------------------------------------------------------- config


def test_bundled_configs_validate():
    names = _config.bundled_configs()
    assert {"gaussian", "blr", "logistic", "student"} <= set(names)
    for name in names:
        assert _config.validate(_config.load_config(name)) == []


def test_validate_reports_field_paths():
    assert _config.validate(small_cfg()) == []
    cfg = small_cfg(schedule={"step": {"type": "constant", "eta": 1.5}, "batch": {"type": "constant", "n": 5}})
    errors = _config.validate(cfg)
    assert any("step.eta must lie in (0,1]" in e for e in errors)
    errors = _config.validate(small_cfg(estimator="subsample"))
    assert any(e.startswith("estimator") for e in errors)
    errors = _config.validate(small_cfg(projection={"projection": "nonneg_mean"}))
    assert any("nonneg_mean" in e for e in errors)
    errors = _config.validate(small_cfg(iterations=0, runs=-1, family="triangle"))
    assert len(errors) >= 3


def test_validate_lists_every_problem():
    cfg = small_cfg(schedule={"step": {"type": "constant", "eta": 0}, "batch": {"type": "constant", "n": 0}})
    errors = _config.validate(cfg)
    assert any("eta" in e for e in errors) and any("batch" in e for e in errors)


def test_parse_errors(tmp_path):
    with pytest.raises(ParseError):
        _config.parse_config("{not json")
    with pytest.raises(ParseError):
        _config.parse_config("[1, 2]")
    with pytest.raises(ParseError):
        _config.load_config(str(tmp_path / "missing.json"))


def test_set_path_copies():
    cfg = small_cfg()
    child = _config.set_path(cfg, "schedule.batch.gamma", 0.5)
    assert child["schedule"]["batch"]["gamma"] == 0.5
    assert "gamma" not in cfg["schedule"]["batch"]


# ---------------------------------------------------------------- runner


def test_run_experiment_seeds_and_files(tmp_path):
    res = runner.run_experiment(small_cfg(), str(tmp_path / "a"))
    assert res.manifest["seeds"] == [11, 12, 13, 14]
    assert res.manifest["failures"] == 0
    assert len({tuple(t.column("bregman_to_opt")) for t in res.traces}) == 4
    with open(tmp_path / "a" / "results.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == runner.RESULTS_HEADER
    assert len(rows) == 1 + 4 * 21 * 2
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["config"]["runs"] == 4 and manifest["backend"] in ("python", "cython")


def test_rerun_is_byte_identical(tmp_path):
    runner.run_experiment(small_cfg(), str(tmp_path / "a"))
    runner.run_experiment(small_cfg(), str(tmp_path / "b"))
    assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()


def test_pool_matches_serial(tmp_path, monkeypatch):
    monkeypatch.setenv("NGVI_JOBS", "2")
    assert runner.default_jobs(7) == 2
    runner.run_experiment(small_cfg(), str(tmp_path / "p"))
    monkeypatch.setenv("NGVI_JOBS", "1")
    runner.run_experiment(small_cfg(), str(tmp_path / "s"))
    assert (tmp_path / "p" / "results.csv").read_bytes() == (tmp_path / "s" / "results.csv").read_bytes()


def test_single_failure_is_isolated(tmp_path, monkeypatch):
    cfg = small_cfg(model={"model": "gaussian", "dim": 1, "kappa": 1, "seed": 0},
                    schedule={"step": {"type": "constant", "eta": 1.0}, "batch": {"type": "constant", "n": 1}},
                    metrics={"elbo": {"n_samples": 5}})
    reference = runner.run_experiment(cfg, str(tmp_path / "ref"))
    real_run = runner.run
    fam = expfam.full(1)

    def one_bad_target(model, family, *args, seed=0, **kw):
        if seed == 13:
            kw["omega0"] = expfam.ExpParam.from_moments(fam, [0.0], [[0.1]])
            return real_run(Bumpy(), family, *args, seed=seed, **kw)
        return real_run(model, family, *args, seed=seed, **kw)

    monkeypatch.setattr(runner, "run", one_bad_target)
    res = runner.run_experiment(cfg, str(tmp_path / "bad"))
    assert res.manifest["failures"] == 1
    status = res.manifest["statuses"][2]
    assert status["status"] == op.WELL_POSEDNESS_VIOLATED and status["failed_at"] == 0
    for r in (0, 1, 3):
        assert res.traces[r].records == reference.traces[r].records
    traces = load_traces(str(tmp_path / "bad"))
    assert [t.status for t in traces].count(op.WELL_POSEDNESS_VIOLATED) == 1
    series = aggregate(traces, metric="elbo_mc")
    assert series.count[0] == 4 and series.count[-1] == 3


# ---------------------------------------------------------------- aggregation


def _trace(values, batch=1):
    recs, budget = [], 0
    for t, v in enumerate(values):
        budget += batch
        recs.append(TraceRecord(t, 0.1, batch, budget, v, None))
    return RunTrace(recs)


def test_aggregate_single_run_is_identity():
    s = aggregate([_trace([3.0, 2.0, 1.0])], statistic="median-iqr")
    np.testing.assert_array_equal(s.center, [3.0, 2.0, 1.0])
    np.testing.assert_array_equal(s.lo, s.center)
    np.testing.assert_array_equal(s.hi, s.center)


def test_aggregate_median_iqr_linear_quantiles():
    s = aggregate([_trace([v]) for v in (1.0, 2.0, 3.0, 4.0)], statistic="median_iqr")
    assert s.center[0] == 2.5 and s.lo[0] == 1.75 and s.hi[0] == 3.25


def test_aggregate_mean_and_budget_axis():
    eps = 0.125
    s = aggregate([_trace([1 + eps, 5.0], batch=3), _trace([1 - eps, 7.0], batch=3)], abscissa="budget")
    np.testing.assert_allclose(s.center, [1.0, 6.0])
    np.testing.assert_array_equal(s.x, [3, 6])


def test_aggregate_errors():
    with pytest.raises(EmptyInput):
        aggregate([])
    failed = _trace([1.0])
    failed.status = op.WELL_POSEDNESS_VIOLATED
    with pytest.raises(EmptyInput):
        aggregate([failed])
    with pytest.raises(MisalignedTraces):
        aggregate([_trace([1.0, 2.0], batch=1), _trace([1.0, 2.0], batch=2)])
    with pytest.raises(ValueError):
        aggregate([_trace([1.0])], statistic="mode")


def test_load_traces_rejects_bad_files(tmp_path):
    (tmp_path / "results.csv").write_text("a,b\n")
    with pytest.raises(Exception) as info:
        load_traces(str(tmp_path))
    assert type(info.value).__name__ == "SchemaError"
    (tmp_path / "results.csv").write_text(",".join(runner.RESULTS_HEADER) + "\n0,x,0.1,1,1,elbo_mc,1.0\n")
    with pytest.raises(ParseError):
        load_traces(str(tmp_path))


# ---------------------------------------------------------------- command line


def _write(path, cfg):
    path.write_text(json.dumps(cfg))
    return str(path)


def test_cli_validate(tmp_path, capsys):
    assert cli.main(["validate", "gaussian"]) == 0
    bad = small_cfg(schedule={"step": {"type": "constant", "eta": 1.5}, "batch": {"type": "constant", "n": 5}})
    assert cli.main(["validate", _write(tmp_path / "bad.json", bad)]) == 1
    assert "step.eta must lie in (0,1]" in capsys.readouterr().err
    (tmp_path / "broken.json").write_text("{")
    assert cli.main(["validate", str(tmp_path / "broken.json")]) == 1
    assert cli.main(["configs"]) == 0


def test_cli_run_and_aggregate(tmp_path):
    cfg = _write(tmp_path / "c.json", small_cfg())
    out = str(tmp_path / "out")
    assert cli.main(["run", cfg, "--out", out, "--runs", "2", "--iters", "5"]) == 0
    agg = str(tmp_path / "agg.csv")
    assert cli.main(["aggregate", out, "--stat", "median-iqr", "--x", "budget", "--out", agg]) == 0
    with open(agg) as fh:
        lines = fh.read().splitlines()
    assert lines[0] == "x,center,lo,hi" and len(lines) == 7
    assert lines[1].startswith("5,")
    assert cli.main(["aggregate", str(tmp_path / "nowhere"), "--out", agg]) == 2


def test_cli_sweep(tmp_path):
    cfg = small_cfg(schedule={"step": {"type": "constant", "eta": 0.2}, "batch": {"type": "poly", "gamma": 1}},
                    runs=1, iterations=4)
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({"schedule.batch.gamma": [0.5, 1]}))
    out = tmp_path / "sweep"
    assert cli.main(["sweep", _write(tmp_path / "c.json", cfg), "--grid", str(grid), "--out", str(out)]) == 0
    children = sorted(os.listdir(out))
    assert children == ["000_gamma=0.5", "001_gamma=1"]
    for child in children:
        assert (out / child / "results.csv").exists()
    grid.write_text(json.dumps({"schedule.step.eta": [2.0]}))
    assert cli.main(["sweep", _write(tmp_path / "c.json", cfg), "--grid", str(grid), "--out", str(out)]) == 1
