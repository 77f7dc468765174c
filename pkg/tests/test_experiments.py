import csv
import io
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from uplinkgame.experiments import ExperimentConfig, load_config, run_experiment
from uplinkgame.experiments.cli import default_config, main
from uplinkgame.experiments.config import KINDS
from uplinkgame.experiments.runner import (
    CSV_COLUMNS,
    ReplicateError,
    aggregate,
    mean_stderr,
    run_replicate,
    trend_checks,
)


def small(kind, **kw):
    base = dict(kind=kind, n_users=[3], n_channels=[4, 8], replicates=3, output=kind)
    if kind == "convergence":
        base.update(n_channels=[4], replicates=1, max_iters=60, divergence_guard=200)
    if kind in ("efficiency_vs_Bc", "table1"):
        base.update(coherence_bandwidths=[None, 0.5, 1.0])
    base.update(kw)
    return ExperimentConfig.from_dict(base)


def read_csv(text):
    return list(csv.DictReader(io.StringIO(text)))


# -- config ---------------------------------------------------------------------

def test_config_round_trip(tmp_path):
    cfg = small("table1", base_seed=17, noise=0.05)
    path = tmp_path / "c.json"
    cfg.save(path)
    again = load_config(path)
    assert again == cfg
    assert json.loads(path.read_text())["coherence_bandwidths"] == [None, 0.5, 1.0]


@pytest.mark.parametrize("bad", [
    {"kind": "nope"},
    {"kind": "table1", "replicates": 0},
    {"kind": "table1", "coherence_bandwidths": [0.0]},
    {"kind": "table1", "coherence_bandwidths": [1.5]},
    {"kind": "convergence", "algorithms": ["newton"]},
    {"kind": "table1", "equilibrium_algorithm": "pgd"},
    {"kind": "table1", "n_channels": [0]},
    {"kind": "table1", "base_seed": -1},
    {"kind": "table1", "typo_field": 3},
])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict(bad)


def test_overrides_and_seeds():
    cfg = small("collision_vs_K").with_overrides(replicates=4, seed=10)
    assert cfg.seeds() == [10, 11, 12, 13]
    assert small("collision_vs_K").with_overrides() == small("collision_vs_K")


@pytest.mark.parametrize("kind", KINDS)
def test_shipped_configs_load(kind):
    cfg = default_config(kind)
    assert cfg.kind == kind
    assert cfg.noise == 0.01


def test_shipped_desk_sizes():
    c = default_config("collision_vs_K")
    assert (c.n_users, c.n_channels, c.replicates) == ((10,), (32, 64, 128, 256), 50)
    t = default_config("table1")
    assert (t.n_users, t.n_channels, t.replicates) == ((20,), (128, 256), 50)
    assert t.coherence_bandwidths == (None, 0.1, 0.2, 0.5, 1.0)
    full = default_config("table1", "full")
    assert (full.n_channels, full.replicates) == ((300, 600), 100)


# -- harness ---------------------------------------------------------------------

def test_convergence_rows():
    res = run_experiment(small("convergence"))
    rows = res.rows
    algs = {r[2] for r in rows}
    assert algs == {"aiwf", "siwf", "pgd", "simultaneous_iwf"}
    metrics = {r[7] for r in rows}
    assert {"potential_gap", "sum_rate", "residual_inf"} <= metrics
    flags = {s["algorithm"]: s["mean"] for s in res.summary if s["metric"] == "converged"}
    assert flags["siwf"] == 1.0
    rec = res.replicates[0]["instances"][0]
    assert rec["certificate"]["gap_bound"] <= 1e-10
    assert rec["runs"]["siwf"]["final_residual_inf"] <= 1e-10


def test_equilibrium_rows_and_summary():
    cfg = small("collision_vs_K")
    res = run_experiment(cfg)
    metrics = {r[7] for r in res.rows}
    assert metrics == {"collided_channels", "total_collisions", "sum_rate", "potential",
                       "efficiency", "potential_gap"}
    for rec in res.replicates:
        for inst in rec["instances"]:
            assert inst["equilibrium"]["is_ne"]
            assert inst["equilibrium"]["consistent"]
    eff = [s for s in res.summary if s["metric"] == "efficiency"]
    assert len(eff) == 2 and all(s["n"] == 3 for s in eff)
    assert all(0 < s["mean"] <= 1 + 1e-9 for s in eff)
    assert [c["name"] for c in res.checks] == ["collided channels decrease in K (N=3)",
                                                "efficiency non-decreasing in K (N=3)"]


def test_aiwf_equilibrium_option():
    res = run_experiment(small("efficiency_vs_K", replicates=1, max_iters=50,
                               equilibrium_algorithm="aiwf"))
    assert {r[2] for r in res.rows} == {"aiwf"}
    assert all(r[6] == 50 for r in res.rows)


def test_uncertified_table1_has_no_efficiency():
    res = run_experiment(small("table1", certify=False, replicates=2))
    assert "efficiency" not in {r[7] for r in res.rows}
    assert len(res.checks) == 2 + 3


def test_mean_stderr():
    m, se = mean_stderr([1.0, 2.0, 3.0])
    assert m == 2.0
    assert se == pytest.approx(1 / math.sqrt(3))
    assert math.isnan(mean_stderr([5.0])[1])


def test_aggregate_groups_by_setting():
    finals = [[("siwf", 4, 3, None, "x", 1.0), ("siwf", 8, 3, None, "x", 3.0)],
              [("siwf", 4, 3, None, "x", 2.0), ("siwf", 8, 3, None, "x", 5.0)]]
    out = {(s["K"], s["metric"]): s for s in aggregate(finals)}
    assert out[(4, "x")]["mean"] == 1.5 and out[(8, "x")]["mean"] == 4.0
    assert out[(8, "x")]["stderr"] == pytest.approx(1.0)


def _summary(means, ses, key="K"):
    return [{"algorithm": "siwf", "K": k, "N": 3, "B_c": None, "metric": "collided_channels",
             "mean": m, "stderr": s, "n": 50} for k, m, s in zip((4, 8, 16), means, ses)]


def test_trend_check_allows_one_standard_error():
    cfg = small("collision_vs_K", n_channels=[4, 8, 16], certify=False)
    ok = trend_checks(cfg, _summary([5.0, 5.05, 4.0], [0.1, 0.1, 0.1]))
    assert ok[0]["passed"]
    bad = trend_checks(cfg, _summary([5.0, 5.3, 4.0], [0.1, 0.1, 0.1]))
    assert not bad[0]["passed"]


def test_replicate_error_reports_seed(monkeypatch):
    import uplinkgame.experiments.runner as runner

    def boom(*a, **k):
        raise FloatingPointError("bad")

    monkeypatch.setattr(runner, "solve_max_potential", boom)
    with pytest.raises(ReplicateError, match=r"replicate 1 \(seed 8\)"):
        run_replicate(small("collision_vs_K", base_seed=7), 1)


# -- output and determinism --------------------------------------------------------

def test_csv_schema(tmp_path):
    res = run_experiment(small("efficiency_vs_Bc", replicates=2), out_dir=tmp_path)
    text = (tmp_path / "efficiency_vs_Bc.csv").read_text()
    assert text.splitlines()[0] == ",".join(CSV_COLUMNS)
    rows = read_csv(text)
    assert {r["B_c"] for r in rows} == {"independent", "0.5", "1.0"}
    assert {r["experiment"] for r in rows} == {"efficiency_vs_Bc"}
    for r in rows:
        float(r["value"])
    doc = json.loads((tmp_path / "efficiency_vs_Bc.json").read_text())
    assert doc["experiment"] == "efficiency_vs_Bc"
    assert doc["config"] == res.config.to_dict()
    assert len(doc["replicates"]) == 2


def test_threads_do_not_change_output():
    cfg = small("collision_vs_K", replicates=4)
    one = run_experiment(cfg, threads=1).csv_text()
    two = run_experiment(cfg, threads=2).csv_text()
    assert one == two


def test_csv_values_round_trip():
    res = run_experiment(small("collision_vs_K", replicates=1))
    rows = read_csv(res.csv_text())
    for parsed, raw in zip(rows, res.rows):
        assert float(parsed["value"]) == float(raw[8])


# -- CLI -------------------------------------------------------------------------

def write_config(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    cfg.save(path)
    return str(path)


def test_cli_run_writes_results(tmp_path, capsys):
    path = write_config(tmp_path, small("collision_vs_K"))
    out = tmp_path / "out"
    code = main(["collision_vs_K", "--config", path, "--out", str(out)])
    assert code == 0
    assert (out / "collision_vs_K.csv").exists()
    assert "collided channels decrease in K" in capsys.readouterr().out


def test_cli_overrides(tmp_path):
    path = write_config(tmp_path, small("collision_vs_K"))
    out = tmp_path / "out"
    assert main(["run", "--config", path, "--out", str(out), "--replicates", "2",
                 "--seed", "40"]) == 0
    doc = json.loads((out / "collision_vs_K.json").read_text())
    assert [r["seed"] for r in doc["replicates"]] == [40, 41]


def test_cli_check_mode_exit_codes(tmp_path, monkeypatch):
    path = write_config(tmp_path, small("collision_vs_K"))
    import uplinkgame.experiments.runner as runner

    monkeypatch.setattr(runner, "trend_checks",
                        lambda c, s: [{"name": "forced", "passed": False, "detail": ""}])
    assert main(["run", "--config", path, "--out", str(tmp_path), "--check"]) == 1
    assert main(["run", "--config", path, "--out", str(tmp_path)]) == 0


def test_cli_bad_inputs(tmp_path, capsys):
    assert main(["run", "--out", str(tmp_path)]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"kind": "table1", "replicates": 0}')
    assert main(["run", "--config", str(bad)]) == 2
    path = write_config(tmp_path, small("table1"))
    assert main(["collision_vs_K", "--config", path]) == 2
    assert main(["run", "--config", path, "--threads", "0"]) == 2
    assert "error" in capsys.readouterr().err


def test_cli_unwritable_output(tmp_path):
    path = write_config(tmp_path, small("collision_vs_K", replicates=1))
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["run", "--config", path, "--out", str(blocker / "sub")]) == 1


def test_cli_replicate_failure_exit_code(tmp_path, monkeypatch, capsys):
    import uplinkgame.experiments.runner as runner

    def boom(*a, **k):
        raise FloatingPointError("bad")

    monkeypatch.setattr(runner, "solve_max_potential", boom)
    path = write_config(tmp_path, small("collision_vs_K", replicates=1, base_seed=5))
    assert main(["run", "--config", path, "--out", str(tmp_path)]) == 1
    assert "seed 5" in capsys.readouterr().err


def test_console_entry_point_byte_identical(tmp_path):
    path = write_config(tmp_path, small("efficiency_vs_Bc", replicates=2))
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        proc = subprocess.run([sys.executable, "-m", "uplinkgame.experiments", "run",
                               "--config", path, "--out", str(out)],
                              capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        outs.append((out / "efficiency_vs_Bc.csv").read_bytes())
    assert outs[0] == outs[1]
    assert np.isfinite([float(r["value"]) for r in read_csv(outs[0].decode())]).all()
