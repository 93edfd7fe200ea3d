import json
import subprocess
import sys

import pytest

from calib6.cli import main
from calib6.report import SCHEMA, validate_report


def _run(tmp_path, *argv, name="r.json"):
    out = tmp_path / name
    code = main([*argv, "--out", str(out), "--quiet"])
    return code, json.loads(out.read_text()) if out.exists() else None


def test_kappa_report_schema_and_exit(tmp_path):
    code, rep = _run(tmp_path, "kappa", "--nmax", "12")
    assert validate_report(rep) == []
    assert rep["schema"] == SCHEMA and rep["command"] == "kappa"
    # the literal statement also covers n = 1, where it does not hold
    assert rep["status"] == "fail" and code == 1
    checks = {c["name"]: c for c in rep["checks"]}
    assert checks["kappa_trichotomy_2<=n<=12"]["status"] == "pass"
    assert checks["kappa_k2_positive"]["status"] == "pass"


def test_verify_orbit(tmp_path):
    code, rep = _run(tmp_path, "verify-orbit")
    checks = {c["name"]: c for c in rep["checks"]}
    assert checks["orbit_rank"]["value"] == 20 and checks["stabilizer_dimension"]["value"] == 16
    assert checks["kernel_contains_sl3c"]["status"] == "pass"
    assert code == (0 if rep["status"] == "pass" else 1)


def test_verify_rays_small(tmp_path):
    code, rep = _run(tmp_path, "verify-rays", "--seeds", "20000", "--no-resolution-check")
    assert validate_report(rep) == []
    assert rep["data"]["counts"] == [1, 1, 1, 1, 2, 2, 4]
    assert code == 0


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"nmax": 5}))
    _, rep = _run(tmp_path, "kappa", "--config", str(cfg))
    assert rep["config"]["nmax"] == 5
    _, rep = _run(tmp_path, "kappa", "--config", str(cfg), "--nmax", "4", name="s.json")
    assert rep["config"]["nmax"] == 4


def test_usage_errors(tmp_path, capsys):
    assert main(["glue-segment"]) == 2
    assert main(["verify-rays", "--seeds", "5"]) == 2
    assert main(["no-such-command"]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"unknown_key": 1}))
    assert main(["kappa", "--config", str(bad)]) == 2
    assert main(["embed-graph", "--graph", str(tmp_path / "missing.json")]) == 2
    assert main(["glue-segment", "--mode", "reflected", "--p3", "-1"]) == 2


def test_coarse_gluing_fails_honestly(tmp_path):
    mesh = tmp_path / "m.obj"
    code, rep = _run(tmp_path, "glue-segment", "--mode", "tangent", "--grid", "9", "--comass-points", "1",
                     "--mesh", str(mesh))
    assert validate_report(rep) == []
    failed = [c["name"] for c in rep["checks"] if c["status"] == "fail"]
    assert failed == ["closedness"] and code == 1
    assert mesh.exists() and str(mesh) in rep["files"]


def test_embed_graph_outputs_and_determinism(tmp_path):
    g = tmp_path / "g.json"
    g.write_text(json.dumps({"vertices": [0, 1, 2], "edges": [[0, 1], [1, 2]]}))
    reps = []
    for d in ("a", "b"):
        code = main(["embed-graph", "--graph", str(g), "--glue-edges", "none", "--samples", "300",
                     "--out", str(tmp_path / d), "--quiet"])
        assert code == 0
        reps.append(json.loads((tmp_path / d / "report.json").read_text()))
        assert (tmp_path / d / "plan.json").exists() and (tmp_path / d / "edges.obj").exists()
    assert reps[0]["config_hash"] == reps[1]["config_hash"]
    assert [c["value"] for c in reps[0]["checks"]] == [c["value"] for c in reps[1]["checks"]]
    assert (tmp_path / "a" / "plan.json").read_bytes() == (tmp_path / "b" / "plan.json").read_bytes()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "calib6", "kappa", "--nmax", "3", "--quiet"],
                          capture_output=True, text=True)
    assert proc.returncode == 1 and proc.stdout.startswith("kappa: FAIL")
    proc = subprocess.run([sys.executable, "-m", "calib6", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "embed-graph" in proc.stdout
