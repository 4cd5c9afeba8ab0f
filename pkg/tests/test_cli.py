import json
import math
import pathlib
import subprocess
import sys

import pytest

from qflowctl.cli import main

ROOT = pathlib.Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "demos" / "configs"
GOLDEN = ROOT / "tests" / "golden"


def run(kind, cfg, out, tmp_path):
    p = tmp_path / f"{kind}.json"
    p.write_text(json.dumps(cfg) if isinstance(cfg, dict) else pathlib.Path(cfg).read_text())
    return main([kind, "--config", str(p), "--out", str(out)])


def load(path):
    return json.loads(pathlib.Path(path).read_text())


def test_derive_golden(tmp_path):
    out = tmp_path / "o"
    assert run("derive", CONFIGS / "derive.json", out, tmp_path) == 0
    got = load(out / "derive.json")
    want = load(GOLDEN / "flow_generator_boson.json")
    fg = got["flow_generator"]
    assert fg["exact"]
    for k in ("dt", "dA", "dAdag"):
        assert fg[k] == want[k]
    assert all(v["zero"] for v in got["theorem1"].values())
    man = load(out / "manifest.json")
    assert man["kind"] == "derive" and man["status"] == 0 and "wall_time_s" in man


def test_riccati_tanh_csv(tmp_path):
    out = tmp_path / "o"
    assert run("riccati", CONFIGS / "riccati_tanh.json", out, tmp_path) == 0
    lines = (out / "riccati.csv").read_text().split("\n")
    assert lines[0] == "t,i,j,pi_re,pi_im,r_re,r_im"
    t, i, j, re, im, *_ = lines[1].split(",")
    assert float(t) == 0 and abs(float(re) - math.tanh(1.0)) < 1e-10
    diag = load(out / "riccati_diagnostics.json")
    assert {"noise_residual_dA", "noise_residual_dAdag"} <= set(diag)
    assert diag["picard_distance_to_ode"] < 1e-6


def test_malformed_literal_exit_1(tmp_path, capsys):
    out = tmp_path / "o"
    cfg = {"model": {"F": [[[0, 0], [1]]]}, "cost": {"X": [[[1, 0]]]}}
    assert run("riccati", cfg, out, tmp_path) == 1
    err = capsys.readouterr().err.strip()
    assert err.startswith("error: config:") and "\n" not in err
    assert not out.exists()


@pytest.mark.parametrize("cfg", [
    {"kind": "lemma1"},
    {"seed": -1, "matrices": {}},
    {"seed": 2 ** 64, "matrices": {}},
])
def test_validation_failures(tmp_path, cfg):
    assert run("classical-lqr", cfg, tmp_path / "o", tmp_path) == 1
    assert not (tmp_path / "o").exists()


def test_numerical_failure_exit_2(tmp_path, capsys):
    out = tmp_path / "o"
    cfg = {"model": {"F": [[[3, 0]]], "G": [[[0, 0]]], "T": 5.0},
           "cost": {"Q": [[[1, 0]]], "R": [[[1, 0]]]}, "grid": 100}
    assert run("riccati", cfg, out, tmp_path) == 2
    diag = load(out / "diagnostics.json")
    assert "time" in diag and diag["norm"] > diag["bound"]
    assert load(out / "manifest.json")["status"] == 2
    assert capsys.readouterr().err.startswith("error: numerical:")


def test_care_and_flow_are(tmp_path):
    assert run("solve-are", CONFIGS / "care_scalar.json", tmp_path / "a", tmp_path) == 0
    r = load(tmp_path / "a" / "are.json")
    assert abs(r["Pi"][0][0][0] - 1.0) < 1e-10
    assert run("solve-are", CONFIGS / "flow_cost_are.json", tmp_path / "b", tmp_path) == 0
    r = load(tmp_path / "b" / "are.json")
    assert not r["feasible"] and r["trace_obstruction"] == pytest.approx(2.0)
    assert r["trace_identity"] <= 1e-12


def test_simulate_and_lemma1(tmp_path):
    assert run("simulate", CONFIGS / "simulate_qubit_decay.json", tmp_path / "s", tmp_path) == 0
    assert (tmp_path / "s" / "trajectory.csv").read_text().startswith(
        "t,observable_index,value_re,value_im\n")
    assert load(tmp_path / "s" / "simulate.json")["max_deviation"] < 5e-3
    assert run("lemma1", CONFIGS / "lemma1_qubit_decay.json", tmp_path / "l", tmp_path) == 0
    assert load(tmp_path / "l" / "lemma1.json")["max_deviation"] <= 1e-6


def test_probe_and_lqr(tmp_path):
    assert run("probe-optimality", CONFIGS / "probe_qubit.json", tmp_path / "p", tmp_path) == 0
    rep = load(tmp_path / "p" / "cost_report.json")
    assert set(rep) >= {"j_hat", "j", "j_tilde", "min_value_prediction", "gap_slope"}
    assert (tmp_path / "p" / "probe.csv").read_text().startswith("trial,epsilon,gap\n")
    assert run("classical-lqr", CONFIGS / "classical_lqr_scalar.json", tmp_path / "q", tmp_path) == 0
    assert load(tmp_path / "q" / "lqr.json")["relative_gap"] < 1e-4


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "qflowctl.cli", "derive", "--config",
                          str(CONFIGS / "derive.json"), "--out", str(tmp_path / "o")],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "o" / "manifest.json").exists()
