import json
import subprocess
import sys

import numpy as np
import pytest

from localsieve import Ball, BallFamily, Grid, builtin_b, family_constant, make_approx_h1b_atom, save_gfn
from localsieve.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_OK, main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def files(tmp_path):
    g = Grid(1, 8.0, 1024)
    b = builtin_b("log", g)
    ball = Ball((g.axis[512],), 0.125)
    cb = family_constant(b, BallFamily(g), [ball])
    a = make_approx_h1b_atom(g, ball, b, seed=2, c_b=cb)
    save_gfn(b, tmp_path / "b.gfn")
    save_gfn(a.values, tmp_path / "a.gfn")
    save_gfn(builtin_b("log", Grid(1, 8.0, 512)), tmp_path / "b512.gfn")
    return tmp_path, ball


def test_certify_kernel_pass_and_fail(capsys):
    code, out, _ = run(capsys, "certify-kernel", "hilbert")
    doc = json.loads(out)
    assert code == EXIT_OK and doc["kernel"] == "hilbert"
    assert doc["observed"]["size"] == pytest.approx(1 / np.pi)
    code, out, _ = run(capsys, "certify-kernel", "power")
    assert code == EXIT_FAIL and json.loads(out)["passed"]["cancellation"] is False


def test_certify_kernel_config_errors(capsys):
    assert run(capsys, "certify-kernel", "nope")[0] == EXIT_CONFIG
    assert run(capsys, "certify-kernel", "hilbert", "--budget", "10")[0] == EXIT_CONFIG
    assert run(capsys, "certify-kernel", "missing.gfn")[0] == EXIT_CONFIG


def test_bad_arguments_exit_two(capsys):
    assert run(capsys)[0] == EXIT_CONFIG
    assert run(capsys, "norms")[0] == EXIT_CONFIG
    assert run(capsys, "commutator-suite", "--check", "nothing")[0] == EXIT_CONFIG


def test_norms_json_and_csv(capsys, files):
    d, _ = files
    code, out, _ = run(capsys, "norms", "--input", str(d / "b.gfn"), "--p", "2")
    doc = json.loads(out)
    assert code == EXIT_OK and doc["p"] == 2 and doc["value"] == doc["bmo_p"]["2"]
    code, out, _ = run(capsys, "norms", "--input", str(d / "b.gfn"), "--report", "csv", "--radii", "2^-3..1")
    lines = out.strip().splitlines()
    assert lines[0] == "radius,rule,balls,sup_oscillation"
    assert [ln.split(",")[1] for ln in lines[1:]] == ["mean", "mean", "mean", "zero"]
    assert run(capsys, "norms", "--input", str(d / "b.gfn"), "--radii", "x")[0] == EXIT_CONFIG


def test_atom_decompose(capsys, files):
    d, ball = files
    spec = f"{ball.center[0]},{ball.radius}"
    code, out, _ = run(capsys, "atom-decompose", "--input", str(d / "a.gfn"), "--ball", spec,
                       "--b", str(d / "b.gfn"))
    doc = json.loads(out)
    assert code == EXIT_OK
    assert doc["ell_one"]["bound"] == pytest.approx(6.640956906507349)
    assert doc["ell_one"]["sum"] <= doc["ell_one"]["bound"]
    assert doc["reconstruction_error"] < 1e-12
    assert all(c["ok"] for c in doc["certificates"])
    assert len(doc["coefficients"]) == len(doc["balls"]) == len(doc["b_residuals"])


def test_atom_decompose_errors(capsys, files):
    d, ball = files
    spec = f"{ball.center[0]},{ball.radius}"
    base = ["atom-decompose", "--input", str(d / "a.gfn")]
    assert run(capsys, *base, "--ball", spec, "--b", str(d / "b512.gfn"))[0] == EXIT_CONFIG
    assert run(capsys, *base, "--ball", "0.0", "--b", str(d / "b.gfn"))[0] == EXIT_CONFIG
    assert run(capsys, *base, "--ball", "3.0,0.125", "--b", str(d / "b.gfn"))[0] == EXIT_CONFIG


def test_commutator_suite_writes_outputs(capsys, tmp_path):
    out = tmp_path / "out"
    code, text, _ = run(capsys, "commutator-suite", "--check", "thm51", "--trials", "4", "--N", "512", "1024",
                        "--radii", "2^-4..2^-2", "--out", str(out), "--plot")
    doc = json.loads(text)
    assert code == EXIT_OK and doc["passed"] is True
    names = sorted(p.name for p in out.iterdir())
    assert names == ["thm51-ratio_vs_N.csv", "thm51-ratio_vs_radius.csv", "thm51.csv", "thm51.json"]


def test_commutator_suite_too_fine_radius(capsys, tmp_path):
    code, _, err = run(capsys, "commutator-suite", "--check", "thm51", "--trials", "2", "--N", "256",
                       "--radii", "2^-6..2^-5", "--out", str(tmp_path))
    assert code == EXIT_CONFIG and "error" in err


def test_localize_compare(capsys, tmp_path):
    code, text, _ = run(capsys, "localize-compare", "--N", "512", "--trials", "3", "--shell-L", "16",
                        "--out", str(tmp_path))
    assert code == EXIT_OK and json.loads(text)["passed"] is True
    assert (tmp_path / "localize-compare-shells.csv").exists()
    code, _, _ = run(capsys, "localize-compare", "--N", "512", "--trials", "2", "--eta", "one",
                     "--out", str(tmp_path))
    assert code == EXIT_CONFIG


def test_reproduce_single(capsys, tmp_path):
    code, text, _ = run(capsys, "reproduce", "1", "--out", str(tmp_path))
    assert code == EXIT_OK and "criterion-01 PASS" in text
    assert (tmp_path / "criterion-01.csv").exists()
    assert run(capsys, "reproduce", "99")[0] == EXIT_CONFIG


def test_console_script_module_entry():
    proc = subprocess.run([sys.executable, "-m", "localsieve.cli", "certify-kernel", "riesz1", "--dim", "2",
                           "--budget", "1000"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["dim"] == 2
