import csv
import json
from collections import defaultdict

import numpy as np
import pytest

from humanai_ese import cli, io
from humanai_ese.core import ConfigError, EffectSeries, Panel
from humanai_ese.harness import (
    ALG1,
    ESTIMATORS,
    BenchmarkConfig,
    metrics_row,
    run_benchmark,
)

SMALL = {"engine": "synthetic", "seeds": [0, 1, 2],
         "experiment": {"population": {"n_units": 600}}}


def test_fmt_round_trips_floats():
    for x in (0.1, 1 / 3, -2.5e-17, 12345.678901234567):
        assert float(io.fmt(x)) == x
    assert io.fmt(np.int64(3)) == "3" and io.fmt(float("nan")) == "nan"


def test_panel_csv_round_trip(tmp_path, rng):
    w = (rng.random((5, 4)) < 0.5).astype(int)
    w[:, :2] = 0
    w[0, 2] = 1
    p = Panel(rng.standard_normal((5, 5)), w, rng.random(5), "experiment", 7, 2)
    io.write_panels({"experiment": p}, tmp_path / "p.csv")
    back = io.read_panel(tmp_path / "p.csv")
    np.testing.assert_array_equal(back.y, p.y)
    np.testing.assert_array_equal(back.w, p.w)
    np.testing.assert_array_equal(back.q, p.q)
    assert back.t_warmup == 2 and back.seed == 7
    with pytest.raises(ConfigError):
        io.read_panel(tmp_path / "p.csv", scenario="control")


def test_effects_round_trip(tmp_path):
    io.write_effects({"a": EffectSeries(np.array([0.0, 0.5, 1 / 3])), "b": np.zeros(3)}, tmp_path / "e.csv")
    back = io.read_effects(tmp_path / "e.csv")
    assert back["a"][2] == 1 / 3 and list(back) == ["a", "b"]


def test_metrics_row_by_hand():
    truth = np.array([0, 0, 1.0, 2.0])
    est = np.array([0, 5, 1.5, 1.0])
    m = metrics_row("x", est, truth, t_warmup=1)
    assert m.mae == pytest.approx(0.75)
    assert m.final_err == pytest.approx(-1.0)
    assert m.est_tte == pytest.approx(1.25)


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        BenchmarkConfig.from_dict({"engin": "x"})
    with pytest.raises(ConfigError):
        BenchmarkConfig(engine="nope")
    with pytest.raises(ConfigError):
        BenchmarkConfig.from_dict({"estimator": {"bogus": 1}})
    cfg = BenchmarkConfig.from_dict(SMALL)
    assert BenchmarkConfig.from_dict(cfg.to_dict()) == cfg


def test_synthetic_benchmark_metrics_recompute_from_csv(tmp_path):
    cfg = BenchmarkConfig.from_dict({**SMALL, "out_dir": str(tmp_path)})
    res = run_benchmark(cfg)
    assert not res.failures and len(res.seeds) == 3
    for name in ("metrics.csv", "summary.csv", "trajectories.csv", "effects.svg", "run_summary.json"):
        assert (tmp_path / name).exists()
    run = tmp_path / "runs" / "synthetic_seed0"
    assert {"panels.csv", "effects.csv", "batches.json", "fit.json", "manifest.json"} <= {p.name for p in run.iterdir()}

    series = defaultdict(dict)
    with open(tmp_path / "trajectories.csv") as fh:
        for r in csv.DictReader(fh):
            series[(int(r["seed"]), r["series"])][int(r["t"])] = float(r["value"])
    with open(tmp_path / "metrics.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert {r["estimator"] for r in rows} == set(ESTIMATORS)
    tw, T = 4, 16
    for r in rows:
        s = int(r["seed"])
        est, truth = series[(s, r["estimator"])], series[(s, "ground_truth_h")]
        errs = [abs(est[t] - truth[t]) for t in range(tw + 1, T + 1)]
        total = 0.0
        for e in errs:
            total += e
        assert float(r["mae"]) == total / len(errs)
    wins = json.loads((tmp_path / "run_summary.json").read_text())["alg1_wins"]
    assert wins == res.alg1_wins
    assert res.summary()[0]["estimator"] == ALG1


def test_estimator_failure_is_isolated(monkeypatch):
    import humanai_ese.harness as h

    def boom(*a, **k):
        raise np.linalg.LinAlgError("synthetic failure")

    monkeypatch.setattr(h, "cmp_full", boom)
    res = run_benchmark(BenchmarkConfig.from_dict({**SMALL, "seeds": [0]}))
    s = res.seeds[0]
    assert np.all(np.isnan(s.effects["CMP"]))
    assert "CMP" in s.notes


def test_cli_simulate_estimate_diag(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"experiment": {"population": {"n_units": 400}}}))
    assert cli.main(["simulate", "--config", str(cfg), "--engine", "synthetic", "--seed", "3",
                     "--out", str(tmp_path / "sim")]) == 0
    panel = tmp_path / "sim" / "synthetic_seed3" / "panels.csv"
    assert cli.main(["estimate", "--panel", str(panel), "--out", str(tmp_path / "est"), "--baselines"]) == 0
    eff = io.read_effects(tmp_path / "est" / "effects.csv")
    assert {"tte_hat", "DIM", "HT-q"} <= set(eff) and len(eff["tte_hat"]) == 17
    assert cli.main(["estimate", "--panel", str(panel), "--out", str(tmp_path / "est2"),
                     "--batches", str(tmp_path / "est" / "batches.json")]) == 0
    assert io.read_effects(tmp_path / "est2" / "effects.csv")["tte_hat"].tolist() == eff["tte_hat"].tolist()
    assert cli.main(["diag", "--panel", str(panel), "--strict"]) == 0
    assert '"passed": true' in capsys.readouterr().out


def test_cli_exit_codes(tmp_path):
    assert cli.parse_seeds(["0-2", "5,7"]) == [0, 1, 2, 5, 7]
    with pytest.raises(SystemExit) as exc:
        cli.main(["benchmark", "--engine", "bogus", "--seed", "0", "--out", str(tmp_path)])
    assert exc.value.code == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"unknown_key": 1}')
    assert cli.main(["benchmark", "--config", str(bad), "--engine", "synthetic", "--seed", "0",
                     "--out", str(tmp_path / "o")]) == 2
    assert cli.main(["estimate", "--panel", str(tmp_path / "missing.csv"), "--out", str(tmp_path)]) == 2


def test_cli_strict_identifiability_failure(tmp_path):
    # every unit carries the same prior, so the composition columns collapse
    n, T = 300, 8
    rng = np.random.default_rng(0)
    w = (rng.random((n, T)) < np.r_[0, 0, [0.3] * 3, [0.7] * 3]).astype(int)
    p = Panel(rng.standard_normal((n, T + 1)), w, np.full(n, 0.5), "experiment", 0, 2)
    io.write_panels([p], tmp_path / "p.csv")
    args = ["--panel", str(tmp_path / "p.csv"), "--strict"]
    assert cli.main(["diag", *args]) == 3
    assert cli.main(["estimate", *args, "--out", str(tmp_path / "e")]) == 3
