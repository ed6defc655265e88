import json
import subprocess
import sys

import pytest

from dtnlab.cli import load_config, main

SMALL_SCAN = """
[scan]
thetas = [1e-2, 1e-3]
kappa2s = [0.1, 0.3, 0.6, 1.0, 3.0, 6.0, 10.0, 30.0]
n_bumps = 2
M = 8
trunc_extra = 4

[solver]
M_trunc = 12
N_rad = 12
"""


def test_load_config_formats(tmp_path):
    (tmp_path / "a.toml").write_text('[problem]\nkappa2 = 2.0\n')
    (tmp_path / "a.json").write_text('{"problem": {"kappa2": 2.0}}')
    assert load_config(tmp_path / "a.toml") == load_config(tmp_path / "a.json")
    assert load_config(None) == {}


def test_solve(tmp_path):
    assert main(["solve", "--out-dir", str(tmp_path)]) == 0
    lines = (tmp_path / "solution.csv").read_text().splitlines()
    assert lines[0] == "r,phi,re_u,im_u" and len(lines) == 1 + 33 * 64
    doc = json.loads((tmp_path / "solution.json").read_text())
    assert doc["trace_error"] < 1e-8


def test_dtn_with_gamma(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[problem]\nkappa2 = 1.0\nM = 8\nq_ref_shift = 1.0\ncheck_volume = true\n")
    assert main(["dtn", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 0
    for name in ("dtn.csv", "dtn.json", "gamma.csv", "gamma.json"):
        assert (tmp_path / name).exists()


def test_dtn_resonance_fails(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"potential": {"kind": "constant", "constant": 0.0}, "problem": {"kappa2": 5.783185962946784}}))
    assert main(["dtn", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 1


def test_verify_selected_suites(tmp_path, capsys):
    cfg = tmp_path / "v.toml"
    cfg.write_text('[verify]\nsuites = ["free_space", "kappa1", "theta_delta"]\n')
    assert main(["verify", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out.count("[PASS]") == 3
    assert len(json.loads((tmp_path / "verify.json").read_text())) == 3


def test_net_small_family(tmp_path):
    cfg = tmp_path / "n.toml"
    cfg.write_text('[net]\ntheta = 0.01\nn_bumps = 3\nM = 12\nregimes = ["low"]\n')
    assert main(["net", "--config", str(cfg), "--out-dir", str(tmp_path), "--seed", "1"]) == 0
    doc = json.loads((tmp_path / "net.json").read_text())
    assert doc["low"]["pigeonhole"]["n_members"] == 8


def test_net_truncation_gate(tmp_path, capsys):
    # the high-frequency level l* = 27 does not fit in M = 12
    cfg = tmp_path / "n.toml"
    cfg.write_text("[net]\ntheta = 0.01\nn_bumps = 3\nM = 12\n")
    assert main(["net", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 1
    assert "[FAIL] high_truncation" in capsys.readouterr().out


def test_scan_then_fit(tmp_path):
    cfg = tmp_path / "s.toml"
    cfg.write_text(SMALL_SCAN)
    out = tmp_path / "scan"
    code = main(["scan", "--config", str(cfg), "--out-dir", str(out)])
    names = {p.name for p in out.iterdir()}
    assert {"scan.csv", "scan.json", "scan_kappa.svg", "scan_theta.svg"} <= names
    assert "records.partial.jsonl" not in names
    doc = json.loads((out / "scan.json").read_text())
    assert code == (0 if all(doc["gates"].values()) else 1)
    assert main(["fit", str(out / "scan.csv"), "--out-dir", str(tmp_path / "fit")]) == 0
    fit = json.loads((tmp_path / "fit" / "fit.json").read_text())
    assert fit["C_R"] == doc["fit"]["C_R"] and fit["c0"] == doc["fit"]["c0"]


def test_fit_needs_enough_records(tmp_path):
    csv = tmp_path / "one.csv"
    from dtnlab.instability_lab import ExperimentRecord, write_csv

    write_csv([ExperimentRecord(0, "low", 1.0, 1e-2, 0.1, 0.0, 8, 4, min_svd_distance=1e-5)], csv)
    assert main(["fit", str(csv), "--out-dir", str(tmp_path)]) == 1
    assert main(["fit", "--out-dir", str(tmp_path)]) == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "dtnlab", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("solve", "dtn", "verify", "net", "scan", "fit"):
        assert cmd in res.stdout


def test_unknown_command_exits():
    with pytest.raises(SystemExit):
        main(["bogus"])


def test_shipped_default_scan_config_matches_builtin():
    from pathlib import Path

    from dtnlab.instability_lab import ScanConfig

    path = Path(__file__).resolve().parents[1] / "configs" / "scan_default.toml"
    assert ScanConfig.from_mapping(load_config(path)).digest() == ScanConfig().digest()


def test_shipped_quick_scan_config(tmp_path):
    from pathlib import Path

    path = Path(__file__).resolve().parents[1] / "configs" / "scan_quick.toml"
    assert main(["scan", "--config", str(path), "--out-dir", str(tmp_path)]) == 0
