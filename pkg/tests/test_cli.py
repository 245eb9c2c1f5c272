"""Command-line front end: configuration, reports, exit codes, sweeps.

Group 1: configuration
  1. arithmetic expressions in coefficient fields; anything else is rejected
  2. field-level diagnostics for malformed configs
Group 2: predict
  3. schema-valid report, printed comparisons, exit code 2 on errata
  4. determinism: identical input gives identical report text
  5. --tol-scale widens every tolerance
Group 3: locate
  6. Example 3 fixed point is attracting; orbit file written
  7. Example 1 multiplier moduli straddle 1 across the volume-preserving gamma1
  8. eps = 0 fails with a stage tag
Group 4: sweep
  9. gamma1 sweep through d beta1 flips the averaged-trace sign
 10. beta2 sweep with locate flips the modulus across 1; workers do not change the table
 11. empty range gives an empty table; per-point failures are recorded
"""
import json

import numpy as np
import pytest
import yaml

from hopfzero import cli
from hopfzero.bifurcation import divergence_free_parameter

from conftest import EX2


def preset_dict(n):
    return yaml.safe_load(cli.preset(n))


def write_cfg(tmp_path, d, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(d))
    return str(p)


# ── Group 1: configuration ──────────────────────────────────────────────────

@pytest.mark.parametrize("text,value", [("128*sqrt(2)", 128 * np.sqrt(2)), ("-10725*pi/8", -10725 * np.pi / 8),
                                        ("2**-3", 0.125), (3, 3.0), ("1/5000", 2e-4)])
def test_evaluate_expr(text, value):
    assert cli.evaluate_expr(text) == pytest.approx(value, rel=1e-15)


@pytest.mark.parametrize("text", ["__import__('os')", "exp(1)", "x + 1", True, "1 +"])
def test_evaluate_expr_rejects(text):
    with pytest.raises(cli.ConfigError):
        cli.evaluate_expr(text)


@pytest.mark.parametrize("mutate,match", [
    (lambda d: d.pop("coeffs"), "coeffs: required"),
    (lambda d: d["coeffs"].pop("w"), "coeffs.w"),
    (lambda d: d.update(family="C"), "family"),
    (lambda d: d["coeffs"].update(delta=1), "unknown Family B"),
    (lambda d: d["coeffs"].update(alpha=3), "coeffs.alpha"),
    (lambda d: d["coeffs"].update(w=-1), "w > 0"),
    (lambda d: d.update(ns_parameter="beta9"), "ns_parameter"),
    (lambda d: d.update(guess=[1, 2, 3]), "guess"),
])
def test_config_errors(mutate, match):
    d = preset_dict(2)
    mutate(d)
    with pytest.raises(cli.ConfigError, match=match):
        cli.load_config(d)


def test_config_not_mapping():
    with pytest.raises(cli.ConfigError, match="mapping"):
        cli.load_config("- 1\n- 2\n")


def test_preset_range():
    with pytest.raises(cli.ConfigError):
        cli.preset(4)


def test_config_error_exit_code(tmp_path):
    code, d = cli.run(["predict", "--config", write_cfg(tmp_path, {"family": "B"})])
    assert code == 1 and d["status"] == "failure" and d["stage"] == "config"


# ── Group 2: predict ────────────────────────────────────────────────────────

def _comparison(d, name):
    return next(c for c in d["comparisons"] if c["name"] == name)


def test_predict_example3():
    code, d = cli.run(["predict", "--example", "3"])
    cli.validate_report(d)
    assert code == 2 and d["status"] == "errata"
    l1 = _comparison(d, "lambda1 (closed form vs printed)")
    assert l1["within"] and l1["predicted"] == pytest.approx(-20808 * np.pi / 3773, rel=1e-12)
    assert not _comparison(d, "lambda2 (closed form vs printed)")["within"]


def test_predict_example2_torus_side():
    _, d = cli.run(["predict", "--example", "2"])
    ns = d["predictions"]["ns"]
    # formula l13 > 0 with d0 < 0 puts the torus at mu > mu(eps)
    assert ns["torus_side"] == "mu - mu(eps) > 0"
    assert ns["mu_volume"] == pytest.approx(divergence_free_parameter(EX2, "beta2"), rel=1e-14)
    assert any(f.startswith("d0 erratum") for f in d["flags"])


def test_predict_example1_l12():
    _, d = cli.run(["predict", "--example", "1"])
    assert _comparison(d, "l12 (closed form vs printed)")["within"]


def test_predict_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    cli.run(["predict", "--example", "2", "--out", str(a)])
    cli.run(["predict", "--example", "2", "--out", str(b)])
    assert (a / "report.json").read_text() == (b / "report.json").read_text()
    assert json.loads((a / "timings.json").read_text())


def test_tol_scale_clears_comparisons():
    code, d = cli.run(["predict", "--example", "3", "--tol-scale", "1e12"])
    assert all(c["within"] for c in d["comparisons"])
    assert code == 0 and d["status"] == "ok"


def test_requires_one_source():
    code, d = cli.run(["predict"])
    assert code == 1 and "exactly one" in d["error"]


# ── Group 3: locate ─────────────────────────────────────────────────────────

def test_locate_example3(tmp_path):
    code, d = cli.run(["locate", "--example", "3", "--out", str(tmp_path)])
    assert code in (0, 2)
    v = {x["name"]: x["value"] for x in d["verdicts"]}
    assert v["floquet_stability"] == "attracting"
    assert _comparison(d, "det DPi = exp((c - b d) T)")["within"]
    assert "orbit.dat" in d["data_files"]
    tab = np.loadtxt(tmp_path / "orbit.dat")
    assert tab.shape[1] == 7
    assert d["findings"]["orbit_closure_error"] < 1e-9


def test_locate_example1_straddles(tmp_path):
    moduli = []
    for g in (-1e-3, 1e-3):
        d = preset_dict(1)
        d["coeffs"]["gamma1"] = g
        _, rep = cli.run(["locate", "--config", write_cfg(tmp_path, d)])
        moduli.append(max(rep["findings"]["moduli"]))
    assert moduli[0] < 1 < moduli[1]


def test_locate_rejects_eps_zero(tmp_path):
    d = preset_dict(3)
    d["coeffs"]["eps"] = 0
    code, rep = cli.run(["locate", "--config", write_cfg(tmp_path, d)])
    assert code == 1 and rep["stage"] == "config" and "eps = 0" in rep["error"]


# ── Group 4: sweep ──────────────────────────────────────────────────────────

def test_sweep_trace_sign_flip(tmp_path):
    d = preset_dict(1)
    d["sweep"] = {"parameter": "gamma1", "values": [-0.5, 0.5]}
    _, rep = cli.run(["sweep", "--config", write_cfg(tmp_path, d)])
    tr = [row["trace_coeff"] for row in rep["table"]]
    # gamma* = d beta1 = 0 for Example 1
    assert tr[0] > 0 > tr[1]


def test_sweep_modulus_flip(tmp_path, monkeypatch):
    mu = divergence_free_parameter(EX2, "beta2")
    d = preset_dict(2)
    d["sweep"] = {"parameter": "beta2", "values": [mu - 1e-3, mu + 1e-3], "locate": True}
    path = write_cfg(tmp_path, d)
    _, one = cli.run(["sweep", "--config", path])
    mods = [max(row["moduli"]) for row in one["table"]]
    assert (mods[0] - 1) * (mods[1] - 1) < 0
    monkeypatch.setenv("HOPFZERO_MAX_WORKERS", "2")
    _, two = cli.run(["sweep", "--config", path, "--workers", "4"])
    assert json.dumps(one["table"], sort_keys=True) == json.dumps(two["table"], sort_keys=True)


def test_sweep_empty_and_failures(tmp_path):
    d = preset_dict(2)
    d["sweep"] = {"parameter": "beta2", "start": 0, "stop": 1, "num": 0}
    _, rep = cli.run(["sweep", "--config", write_cfg(tmp_path, d)])
    assert rep["table"] == [] and rep["findings"]["points"] == 0
    d["sweep"] = {"parameter": "beta2", "values": [-1.0], "locate": True}
    d["guess"] = [1e6, 1e6]
    _, rep = cli.run(["sweep", "--config", write_cfg(tmp_path, d)])
    assert rep["findings"]["failures"] == 1 and "error" in rep["table"][0]


def test_workers_cap(monkeypatch):
    monkeypatch.setenv("HOPFZERO_MAX_WORKERS", "3")
    assert cli._workers(8) == 3
    monkeypatch.delenv("HOPFZERO_MAX_WORKERS")
    assert cli._workers(0) == 1
