import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from qest import cli

LN2 = math.log(2)
PD = {"kind": "phase_damping", "params": {"rates": [[0, 1], [1, 0]]}}
UNITARY = {"kind": "unitary", "params": {"hamiltonian": [[[0.5, 0], [0, 0]], [[0, 0], [-0.5, 0]]],
                                         "period": 2 * math.pi}}


def run(tmp_path, command, cfg, *extra, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    out = tmp_path / f"{command}.{'csv' if '--format' in extra else 'json'}"
    rc = cli.main([command, "--config", str(path), "--out", str(out), *extra])
    return rc, out


def load(out):
    return json.loads(out.read_text())


def test_choi_phase_damping(tmp_path):
    rc, out = run(tmp_path, "choi", {"schema": 1, "family": PD, "theta": LN2})
    assert rc == 0
    rep = load(out)
    assert rep["values"]["condition_c"] is True
    point = rep["values"]["points"][0]
    assert max(point["residuals"].values()) < 1e-9
    assert rep["config"]["family"] == PD
    assert "condition_c" in rep["provenance"]


def test_choi_unitary_fails_condition_c(tmp_path):
    rc, out = run(tmp_path, "choi", {"schema": 1, "family": UNITARY, "theta": 0.3})
    assert rc == 0
    assert load(out)["values"]["condition_c"] is False


@pytest.mark.parametrize("cfg", [
    {"family": PD, "theta": 1.0},
    {"schema": 2, "family": PD, "theta": 1.0},
    {"schema": 1, "family": PD, "theta": 1.0, "bogus": 1},
    {"schema": 1, "family": {"kind": "nope"}, "theta": 1.0},
    {"schema": 1, "family": PD, "theta": {"lo": 0, "hi": 1}},
])
def test_malformed_config_exit_1(tmp_path, capsys, cfg):
    rc, _ = run(tmp_path, "choi", cfg)
    assert rc == cli.EXIT_CONFIG
    assert "schema error" in capsys.readouterr().err


def test_unreadable_config(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["choi", "--config", str(bad)]) == cli.EXIT_CONFIG
    assert cli.main(["choi", "--config", str(tmp_path / "missing.json")]) == cli.EXIT_CONFIG


def test_validation_failure_exit_2(tmp_path):
    cfg = {"schema": 1, "family": {"kind": "depolarizing", "params": {"dim": 2}}, "theta": 1.5}
    rc, _ = run(tmp_path, "choi", cfg)
    assert rc == cli.EXIT_VALIDATION


def test_fisher_phase_damping(tmp_path):
    cfg = {"schema": 1, "family": PD, "theta": LN2,
           "fisher": {"restarts": 4, "steps": 100, "tensor_power": 2}}
    rc, out = run(tmp_path, "fisher", cfg)
    assert rc == 0
    p = load(out)["values"]["points"][0]
    assert abs(p["j_rld_max"] - 1 / 3) < 1e-7
    assert p["j_sld_opt"] <= p["j_rld_max"] + 1e-9
    assert p["additivity_residual"] < 1e-7


def test_fisher_unitary_infinite(tmp_path):
    cfg = {"schema": 1, "family": UNITARY, "theta": 0.4, "fisher": {"restarts": 4, "steps": 150}}
    rc, out = run(tmp_path, "fisher", cfg)
    assert rc == 0
    p = load(out)["values"]["points"][0]
    assert p["j_rld_max"] == "infinite"
    assert p["j_sld_opt"] >= 0.999
    assert p["condition_c"] is False


def test_fisher_explicit_inputs(tmp_path):
    a = [[[1 / math.sqrt(2), 0], [0, 0]], [[0, 0], [1 / math.sqrt(2), 0]]]
    cfg = {"schema": 1, "family": PD, "theta": LN2, "fisher": {"optimize": False, "inputs": [a]}}
    rc, out = run(tmp_path, "fisher", cfg)
    assert rc == 0
    entry = load(out)["values"]["points"][0]["inputs"][0]
    assert entry["j_rld"] <= 1 / 3 + 1e-9
    assert entry["j_sld"] <= entry["j_rld"] + 1e-9


def test_phase_n0(tmp_path):
    rc, out = run(tmp_path, "phase", {"schema": 1, "phase": {"n": 0}})
    assert rc == 0
    assert abs(load(out)["values"]["covariant"] - math.pi**2 / 3) < 1e-12


def test_phase_curve_and_sweep(tmp_path):
    sweep = [10, 20, 50, 100, 200, 500, 1000]
    cfg = {"schema": 1, "phase": {"n": 20, "sweep": sweep, "curve_n": 20, "curve_points": 4000}}
    rc, out = run(tmp_path, "phase", cfg)
    assert rc == 0
    v = load(out)["values"]
    scaled = [r["scaled_value"] for r in v["table"]]
    assert all(b > a for a, b in zip(scaled, scaled[1:]))
    assert all(s < math.pi**2 for s in scaled)
    y = np.array(v["curve"]["y"])
    # 20 full oscillations: one maximum per period of 2 pi / 20
    peaks = np.sum((y > np.roll(y, 1)) & (y >= np.roll(y, -1)))
    assert peaks == 20
    assert v["cramer_rao"] == pytest.approx(1 / 400)


def test_phase_csv(tmp_path):
    cfg = {"schema": 1, "phase": {"n": 5, "sweep": [1, 2, 3], "curve_n": 3, "curve_points": 10}}
    rc, out = run(tmp_path, "phase", cfg, "--format", "csv")
    assert rc == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["n", "value", "scaled_value"]
    assert [int(r[0]) for r in rows[1:]] == [1, 2, 3]
    curve = list(csv.reader((tmp_path / "phase_curve.csv").open()))
    assert curve[0] == ["x", "y"] and len(curve) == 11


def test_choi_csv_rejected(tmp_path):
    rc, _ = run(tmp_path, "choi", {"schema": 1, "family": PD, "theta": LN2}, "--format", "csv")
    assert rc == cli.EXIT_CONFIG


def test_simulate_requires_seed(tmp_path):
    cfg = {"schema": 1, "theta": 1.0, "simulate": {"strategy": "noon"}}
    rc, _ = run(tmp_path, "simulate", cfg)
    assert rc == cli.EXIT_CONFIG


def test_simulate_deterministic(tmp_path):
    cfg = {"schema": 1, "theta": 1.0,
           "simulate": {"seed": 3, "strategy": ["noon", "covariant"], "n": 4, "trials": 500}}
    _, a = run(tmp_path, "simulate", cfg, name="a.json")
    first = a.read_bytes()
    _, b = run(tmp_path, "simulate", cfg, name="b.json")
    assert first == b.read_bytes()
    rep = json.loads(first)
    assert rep["values"]["noon"][0]["mse"]["trials"] == 500


def test_simulate_local_noon_exceeds_covariant(tmp_path):
    local = {"theta0": 1.0, "eps": 0.2, "grid_points": 5}
    cfg = {"schema": 1, "theta": 1.0,
           "simulate": {"seed": 0, "strategy": ["noon", "covariant"], "n": 8, "trials": 4000, "local": local}}
    rc, out = run(tmp_path, "simulate", cfg)
    assert rc == 0
    v = load(out)["values"]
    assert v["noon_local"]["value"] > v["covariant_local"]["value"]


def test_simulate_two_step_small(tmp_path):
    cfg = {"schema": 1, "family": PD, "theta": LN2,
           "simulate": {"seed": 1, "strategy": "two_step", "n": 256, "replicas": 50}}
    rc, out = run(tmp_path, "simulate", cfg, "--format", "csv")
    assert rc == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["x", "y", "stderr"] and len(rows) == 2


def test_timing_flag(tmp_path):
    rc, out = run(tmp_path, "phase", {"schema": 1, "phase": {"n": 3}}, "--timing")
    assert rc == 0
    assert load(out)["values"]["wall_time_s"] >= 0


def test_module_entry_point(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"schema": 1, "phase": {"n": 0}}))
    res = subprocess.run([sys.executable, "-m", "qest", "phase", "--config", str(path)],
                         capture_output=True, text=True, check=True)
    assert json.loads(res.stdout)["command"] == "phase"
