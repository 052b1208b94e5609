import json

import numpy as np
import pytest

from _instances import crandn
from momentfp import ConfigurationError, NetworkConfig, NumericalError
from momentfp.harness import (CSV_HEADER, ExperimentConfig, emit_report, load_config,
                              read_report_json, run_experiment, wmmse_static)
from momentfp.harness import experiment as experiment_mod
from momentfp.harness.cli import main
from momentfp.harness.report import ReportIOError
from test_fp import water_filling_capacity


def small_cfg(**kw):
    base = dict(n_blocks=200, sweep={"param": "sigma2_dbm", "values": [-90.0]})
    base.update(kw)
    return ExperimentConfig.from_dict(base)


def test_config_defaults_and_scales():
    cfg = ExperimentConfig()
    assert cfg.dims == (1, 8, 16, 2)
    assert ExperimentConfig(scenario="multi-cell").dims == (7, 4, 8, 2)
    assert ExperimentConfig(paper_scale=True).dims == (1, 32, 64, 2)
    assert ExperimentConfig(scenario="multi-cell", paper_scale=True).dims == (7, 16, 32, 2)
    net = cfg.network()
    assert net.P == pytest.approx(1.0, rel=1e-15)
    assert net.sigma2 == pytest.approx(1e-12, rel=1e-15)
    assert np.all(net.weights == 1.0)


def test_config_rejects_bad_input(tmp_path):
    with pytest.raises(ConfigurationError, match="unknown"):
        ExperimentConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigurationError, match="unknown"):
        ExperimentConfig.from_dict({"sweep": {"param": "rho", "values": [0.5], "x": 1}})
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict({"sweep": {"param": "rho", "values": []}})
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict({"sweep": {"param": "power", "values": [1]}})
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict({"algorithms": ["magic"]})
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict({"scenario": "multi-cell", "L": 3})
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "missing.yaml")


def test_config_yaml_round_trip(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("scenario: multi-cell\nfamily: nakagami\nsweep:\n  param: rho\n"
                 "  values: [0.3, 0.6]\nalgorithms: [fp]\nseed: 4\n")
    cfg = load_config(p)
    assert cfg.sweep.values == [0.3, 0.6] and cfg.seed == 4 and cfg.family == "nakagami"
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.digest() == ExperimentConfig.from_dict(cfg.to_dict()).digest()


def test_wmmse_static_single_user_water_filling():
    rng = np.random.default_rng(0)
    Hc = crandn(rng, 2, 3)
    cfg = NetworkConfig(1, 1, 3, 2, P=4.0, sigma2=1.0)
    V, tr = wmmse_static(Hc.reshape(1, 1, 1, 2, 3), cfg, tol=1e-7, max_iters=500)
    assert tr.final == pytest.approx(water_filling_capacity(Hc, 4.0, 1.0), rel=1e-3)
    V2, _ = wmmse_static(Hc.reshape(1, 1, 1, 2, 3), cfg, tol=1e-7, max_iters=500)
    np.testing.assert_array_equal(V, V2)


def test_sigma2_sweep_rows_monotone_and_common_blocks():
    cfg = small_cfg(rho=0.9, n_blocks=300,
                    sweep={"param": "sigma2_dbm", "values": [-100.0, -90.0, -80.0]})
    rep = run_experiment(cfg)
    assert len(rep.rows) == 9
    assert [r.algorithm for r in rep.rows[:3]] == ["fast-fp", "fp", "wmmse-static"]
    assert rep.crn_consistent()
    assert not rep.bound_violations()
    for name in ("fast-fp", "fp", "wmmse-static"):
        m = [r.mc_rate_nats for r in rep.rows if r.algorithm == name]
        assert m[0] >= m[1] >= m[2]


def test_rho_and_mt_sweeps():
    rep = run_experiment(small_cfg(algorithms=["fp"], sweep={"param": "rho", "values": [0.3, 0.8]}))
    assert [r.sweep_value for r in rep.rows] == [0.3, 0.8]
    assert all(r.fhat_nats <= r.mc_rate_nats + r.mc_ci99_nats for r in rep.rows)
    rep = run_experiment(small_cfg(algorithms=["fast-fp"], sweep={"param": "mt", "values": [4, 8]}))
    assert [r.sweep_param for r in rep.rows] == ["mt", "mt"]


def test_failed_rows_are_flagged(monkeypatch):
    def boom(*a, **k):
        raise NumericalError("factorization failed", iteration=2)
    monkeypatch.setattr(experiment_mod, "run_algorithm2", boom)
    rep = run_experiment(small_cfg(algorithms=["fp", "fast-fp"]))
    bad = [r for r in rep.rows if r.failed]
    assert len(bad) == 1 and bad[0].algorithm == "fast-fp" and "iteration 2" in bad[0].error
    assert bad[0].fhat_nats is None
    good = [r for r in rep.rows if not r.failed]
    assert good[0].mc_rate_nats > 0


def test_emit_report_schema_and_json_round_trip(tmp_path):
    rep = run_experiment(small_cfg(sweep={"param": "sigma2_dbm", "values": [-95.0, -85.0]},
                                   timing=True))
    csv_path, json_path = emit_report(rep, tmp_path)
    lines = open(csv_path).read().splitlines()
    assert lines[0] == CSV_HEADER
    assert CSV_HEADER == ("sweep_param,sweep_value,algorithm,fhat_nats,mc_rate_nats,"
                          "mc_ci99_nats,iters,iter_time_ms,seed")
    assert len(lines) - 1 == 2 * 3
    assert read_report_json(json_path) == rep
    meta = json.load(open(json_path))
    assert meta["config_digest"] == rep.config_digest and meta["version"]
    assert all(r.iter_time_ms is not None and r.iter_time_ms >= 0 for r in rep.rows)


def test_emit_report_io_error_names_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    rep = run_experiment(small_cfg(algorithms=["fp"], n_blocks=10))
    with pytest.raises(ReportIOError, match=str(blocker)):
        emit_report(rep, blocker / "sub")


def _write_cfg(tmp_path, text):
    p = tmp_path / "cfg.yaml"
    p.write_text(text)
    return str(p)


def test_cli_run_is_byte_identical(tmp_path):
    cfg = _write_cfg(tmp_path, "n_blocks: 100\nsweep:\n  param: sigma2_dbm\n  values: [-90, -80]\n")
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a/report.csv").read_bytes() == (tmp_path / "b/report.csv").read_bytes()


def test_cli_overrides_and_errors(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, "n_blocks: 100\n")
    out = tmp_path / "o"
    assert main(["run", "--config", cfg, "--algorithm", "fp", "--seed", "3", "--blocks", "50",
                 "--max-iters", "5", "--out", str(out)]) == 0
    rows = (out / "report.csv").read_text().splitlines()[1:]
    assert len(rows) == 1 and rows[0].endswith(",3") and ",fp," in rows[0]
    bad = _write_cfg(tmp_path, "nonsense_key: 1\n")
    assert main(["run", "--config", bad, "--out", str(out)]) == 2
    assert "unknown" in capsys.readouterr().err


def test_cli_bound_check(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, "n_blocks: 200\n")
    assert main(["bound-check", "--config", cfg, "--out", str(tmp_path / "bc")]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "rho,fhat_nats,mc_rate_nats,mc_ci99_nats,bound_ok"
    assert len(out) == 6 and all(line.endswith("True") for line in out[1:])


def test_cli_bench(tmp_path):
    assert main(["bench", "--mt-list", "4,8", "--k", "2", "--iters", "20",
                 "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "bench.csv").read_text().splitlines()
    assert lines[0] == "mt,fp_ms,fast_fp_ms,ratio" and len(lines) == 3
