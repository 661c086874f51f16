import csv
import json
import subprocess
import sys

import pytest

from artifact.cli import clip_window, main
from artifact.propagator import HamiltonianSpec


@pytest.fixture
def run_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("ARTIFACT_RUN_DIR", str(tmp_path / "run"))
    return tmp_path / "run"


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_unknown_subcommand_exits_2(capsys):
    assert main(["frobnicate"]) == 2
    err = capsys.readouterr().err
    assert "usage:" in err and "artifact-error: kind=usage" in err


def test_unknown_flag_exits_2(capsys):
    assert main(["scan", "--nope", "free"]) == 2


def test_missing_subcommand_exits_2():
    assert main([]) == 2


def test_missing_scenario_exits_3(run_dir, capsys):
    assert main(["scan", "does-not-exist.scn"]) == 3
    line = capsys.readouterr().err.strip().splitlines()[-1]
    assert line.startswith("artifact-error: kind=scenario message=")


def test_invalid_scenario_exits_3(run_dir, tmp_path):
    bad = tmp_path / "bad.scn"
    bad.write_text("[grid]\nn = 32\nL = 16\n[hamiltonian]\nkind = matrix\n")
    assert main(["scan", str(bad)]) == 3


def test_window_straddling_branch_point_is_usage_error(run_dir):
    assert main(["scan", "--window", "-1:1", "--resolution", "4", "free"]) == 2


def test_window_clipping():
    h = HamiltonianSpec()
    (a, b), notes = clip_window((-3.0, 0.0), h)
    assert (a, b) == (-3.0, -1e-3) and len(notes) == 1
    assert clip_window((-3.0, -0.5), h) == ((-3.0, -0.5), [])
    (a, b), _ = clip_window((-0.9995, 0.5), HamiltonianSpec("matrix", 1.0))
    assert a == pytest.approx(-1 + 1e-3)


def test_scan_example_row_count(run_dir):
    assert main(["scan", "--window", "-3:0", "--resolution", "200", "well_c4.scn"]) == 0
    rows = read_csv(run_dir / "scan.csv")
    assert rows[0] == ["lam_re", "lam_im", "sigma_min"]
    assert len(rows) == 201
    man = json.loads((run_dir / "manifest.json").read_text())
    assert man["command"] == "scan" and man["artifacts"] == ["scan.csv"]
    assert man["overrides"]["window"] == [-3.0, -0.001]


def test_complex_scan_of_matrix_scenario(run_dir):
    assert main(["scan", "--window", "-2:2:-0.5:0.5", "--resolution", "4x3", "matrix"]) == 0
    assert len(read_csv(run_dir / "scan.csv")) == 13


def test_decompose_and_wiener_outputs(run_dir):
    assert main(["decompose", "--p", "6/5", "--n", "16", "--L", "4"]) == 0
    rows = read_csv(run_dir / "decompose.csv")
    assert rows[0] == ["l", "alpha", "support_measure", "height"] and len(rows) > 2
    assert main(["wiener-demo"]) == 0
    demo = json.loads((run_dir / "wiener.json").read_text())
    assert demo["counterexample"]["inverse_causal"] is False
    assert demo["two_point"]["inverse_blocks"] == pytest.approx([1 / 3, -2 / 3], abs=1e-12)


def test_propagate_columns(run_dir):
    assert main(["propagate", "free", "--T", "1/4", "--record-every", "4"]) == 0
    rows = read_csv(run_dir / "propagate.csv")
    assert rows[0] == ["t", "L2", "Linf", "L6inf", "boundary_mass"]
    assert len(rows) == 1 + 5


def test_projections_json(run_dir):
    assert main(["projections", "matrix", "--resolution", "40"]) == 0
    rep = json.loads((run_dir / "projections.json").read_text())
    assert rep["ranks"] == [1, 1]
    assert rep["eigenvalues"][0][0] == pytest.approx(-rep["eigenvalues"][1][0], rel=1e-8)
    assert max(rep["idempotency"]) < 1e-6


def test_manifest_replay_is_byte_identical(run_dir, tmp_path):
    assert main(["decompose", "--gaussian", "0.7", "--n", "16", "--L", "4"]) == 0
    first = (run_dir / "decompose.csv").read_bytes()
    other = tmp_path / "replay"
    assert main(["--run-dir", str(other), "--manifest", str(run_dir / "manifest.json")]) == 0
    assert (other / "decompose.csv").read_bytes() == first


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "artifact.cli", "--run-dir", str(tmp_path), "wiener-demo"],
                         capture_output=True)
    assert out.returncode == 0
    assert (tmp_path / "wiener.json").exists()
