"""CLI surface: exit codes, CSV/report outputs, determinism, reproduce harness."""

import json
import math
import os

import numpy as np
import pytest

from oulevy.cli import main

GAUSS_CFG = {
    "model": {"m": 1, "k": 1, "d": 1, "A": [[1.0]], "B": [[1.0]], "D": [[1.0]]},
    "measure": {"dimension": 1, "components": []},
    "run": {"t": 1.0, "seed": 7},
}

EX2_CFG = {
    "model": {"A": [[1.0]], "D": [[1.0]]},
    "measure": {"components": [
        {"kind": "factorial_radial", "direction": [1.0], "weight_rule": "linear"}]},
    "run": {"t": 1.0, "seed": 3},
}

EX3_CFG = {
    "model": {"A": [[1.0]], "D": [[1.0]]},
    "measure": {"components": [
        {"kind": "factorial_radial", "direction": [1.0], "weight_rule": "constant"}]},
    "run": {"t": 1.0, "seed": 3},
}

MOD_CFG = {
    "model": {"m": 2, "d": 1, "A": [[0.0, 1.0], [1.0, 0.0]], "D": [[1.0], [0.0]]},
    "measure": {"components": [
        {"kind": "factorial_radial", "direction": [1.0], "weight_rule": "constant"}]},
    "run": {"t": 1.0, "seed": 3},
}


def _write_cfg(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def _read_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    return header, rows


def test_analyze_report_roundtrip(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, MOD_CFG)
    rc = main(["analyze", "--config", cfg, "--out", str(tmp_path)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "density_exists" in out and "yes" in out
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["criteria"]["H2"]["verdict"] == "holds"
    assert doc["conclusions"]["density_exists"]["verdict"] == "yes"
    assert doc["schema_version"] == 1
    manifest = json.loads((tmp_path / "run_manifest.json").read_text())
    assert manifest["command"] == "analyze"
    assert str(tmp_path / "report.json") in manifest["outputs"]


def test_analyze_example2_smooth(tmp_path):
    cfg = _write_cfg(tmp_path, EX2_CFG)
    assert main(["analyze", "--config", cfg, "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["conclusions"]["density_smooth"]["verdict"] == "yes"


def test_analyze_malformed_config(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, {"model": {"A": [[1.0, 0.0]]}})
    rc = main(["analyze", "--config", cfg, "--out", str(tmp_path)])
    assert rc == 2
    assert "model.A" in capsys.readouterr().err


def test_charfn_csv_values(tmp_path):
    cfg = _write_cfg(tmp_path, GAUSS_CFG)
    rc = main(["charfn", "--config", cfg, "--out", str(tmp_path),
               "--z-min", "0", "--z-max", "2", "--z-count", "3"])
    assert rc == 0
    header, rows = _read_csv(tmp_path / "charfn.csv")
    assert header == ["z_0", "re_phi", "im_phi", "abs_phi"]
    assert float(rows[0][3]) == pytest.approx(1.0)
    assert float(rows[1][3]) == pytest.approx(0.20245, abs=1e-5)


def test_charfn_bound_column_dominates(tmp_path):
    cfg = _write_cfg(tmp_path, EX2_CFG)
    rc = main(["charfn", "--config", cfg, "--out", str(tmp_path),
               "--z-min", "1", "--z-max", "200", "--z-count", "40", "--bounds"])
    assert rc == 0
    header, rows = _read_csv(tmp_path / "charfn.csv")
    assert header[-1] == "decay_bound"
    checked = 0
    for row in rows:
        if row[-1]:
            assert float(row[3]) <= float(row[-1]) + 1e-12
            checked += 1
    assert checked > 30


def test_density_csv_and_sidecar(tmp_path):
    cfg = _write_cfg(tmp_path, GAUSS_CFG)
    sigma = math.sqrt((math.e ** 2 - 1) / 2)
    rc = main(["density", "--config", cfg, "--out", str(tmp_path),
               "--x-min", str(-6 * sigma), "--x-max", str(6 * sigma),
               "--points", "512"])
    assert rc == 0
    header, rows = _read_csv(tmp_path / "density.csv")
    x = np.array([float(r[0]) for r in rows])
    p = np.array([float(r[1]) for r in rows])
    i0 = int(np.argmin(np.abs(x)))
    assert p[i0] == pytest.approx(0.22320, abs=1e-4)
    side = json.loads((tmp_path / "density_meta.json").read_text())
    assert abs(side["normalization_residual"]) <= 1e-3


def test_density_refused_without_force(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, EX3_CFG)
    rc = main(["density", "--config", cfg, "--out", str(tmp_path),
               "--x-min", "-2", "--x-max", "2", "--points", "128"])
    assert rc == 3
    assert "refused" in capsys.readouterr().err


def test_simulate_deterministic_csv(tmp_path):
    cfg = _write_cfg(tmp_path, EX3_CFG)
    rc = main(["simulate", "--config", cfg, "--out", str(tmp_path / "a"),
               "-n", "200", "--seed", "5"])
    assert rc == 0
    rc = main(["simulate", "--config", cfg, "--out", str(tmp_path / "b"),
               "-n", "200", "--seed", "5"])
    assert rc == 0
    a = (tmp_path / "a" / "samples.csv").read_bytes()
    b = (tmp_path / "b" / "samples.csv").read_bytes()
    assert a == b
    manifest = json.loads((tmp_path / "a" / "run_manifest.json").read_text())
    assert manifest["parameters"]["n"] == 200


def test_probe_csv(tmp_path):
    cfg = _write_cfg(tmp_path, EX3_CFG)
    eps = [str(1.0 / math.factorial(N)) for N in (7, 8, 9)]
    rc = main(["probe", "--config", cfg, "--out", str(tmp_path),
               "--t", "0.4", "--p", "2.0", "--eps", *eps])
    assert rc == 0
    header, rows = _read_csv(tmp_path / "probe.csv")
    ratios = [float(r[header.index("bound_ratio")]) for r in rows]
    assert all(b > a for a, b in zip(ratios, ratios[1:]))


def test_reproduce_all_ids(tmp_path, capsys):
    for ex in ("example2", "example3", "example4-first", "example4-modified",
               "curve-measure"):
        rc = main(["reproduce", ex, "--out", str(tmp_path / ex)])
        out = capsys.readouterr().out
        assert rc == 0, f"{ex} failed:\n{out}"
        assert "FAIL" not in out
        doc = json.loads((tmp_path / ex / "reproduce.json").read_text())
        assert doc["all_pass"]


def test_reproduce_unknown_id(tmp_path, capsys):
    rc = main(["reproduce", "nope", "--out", str(tmp_path)])
    assert rc == 2
    assert "unknown example" in capsys.readouterr().err


def test_missing_config_is_exit_2(tmp_path, capsys):
    rc = main(["analyze", "--config", str(tmp_path / "missing.json"),
               "--out", str(tmp_path)])
    assert rc == 2
