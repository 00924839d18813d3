import numpy as np
import pytest

from mnlqr.cli import main
from mnlqr.instances import scalar_canonical_system
from mnlqr.io import save_system, write_matrix


@pytest.fixture
def sysdir(tmp_path):
    save_system(tmp_path / "sys", scalar_canonical_system())
    return tmp_path / "sys"


def parse_row(text):
    lines = [l for l in text.splitlines() if l and not l.startswith("#")]
    return dict(zip(lines[0].split(","), lines[1].split(",")))


def test_synth(sysdir, capsys):
    assert main(["synth", str(sysdir)]) == 0
    out = capsys.readouterr().out
    row = parse_row(out)
    assert float(row["mss_radius"]) == pytest.approx(0.0643411, abs=1e-7)
    assert "# P" in out and "1.14489" in out


def test_synth_writes_matrices(sysdir, tmp_path):
    assert main(["synth", str(sysdir), "--out", str(tmp_path / "o")]) == 0
    assert float((tmp_path / "o" / "P.csv").read_text()) == pytest.approx(1.144893, abs=1e-6)
    assert float((tmp_path / "o" / "K.csv").read_text()) == pytest.approx(-0.266893, abs=1e-5)


def test_synth_text(sysdir, capsys):
    assert main(["synth", str(sysdir), "--format", "text"]) == 0
    assert "P =" in capsys.readouterr().out


def test_constants(sysdir, capsys):
    assert main(["constants", str(sysdir)]) == 0
    row = parse_row(capsys.readouterr().out)
    assert float(row["kappa_A"]) == pytest.approx(0.26)


def test_bounds(sysdir, capsys):
    assert main(["bounds", str(sysdir), "--sigma-m", "0.1", "--x0", "1"]) == 0
    row = parse_row(capsys.readouterr().out)
    assert row["valid"] == "true"
    assert float(row["subopt_bound"]) > 0


def test_bounds_invalid_band(sysdir, capsys):
    assert main(["bounds", str(sysdir), "--sigma-m", "5"]) == 0
    row = parse_row(capsys.readouterr().out)
    assert row["valid"] == "false" and row["eps_P"] == ""


def test_estimate(tmp_path, capsys):
    W = np.random.default_rng(0).standard_normal((1000, 2))
    write_matrix(tmp_path / "w.csv", W)
    write_matrix(tmp_path / "S.csv", np.eye(2))
    assert main(["estimate", str(tmp_path / "w.csv"), "--sigma", str(tmp_path / "S.csv")]) == 0
    row = parse_row(capsys.readouterr().out)
    assert float(row["t_sig"]) == pytest.approx(0.9679462, abs=1e-7)
    assert row["covered"] == "true"


def test_simulate_monte_carlo(sysdir, capsys):
    assert main(["simulate", str(sysdir), "--x0", "1", "--trajectories", "20000", "--seed", "1"]) == 0
    row = parse_row(capsys.readouterr().out)
    assert abs(float(row["cost"]) - float(row["exact_cost"])) <= 3 * float(row["stderr"])


def test_simulate_single_needs_horizon(sysdir):
    assert main(["simulate", str(sysdir), "--x0", "1"]) == 1


def test_simulate_unstable_gain(sysdir, tmp_path, capsys):
    write_matrix(tmp_path / "K.csv", [[5.0]])
    assert main(["simulate", str(sysdir), "--gain", str(tmp_path / "K.csv"), "--x0", "1",
                 "--horizon", "400", "--seed", "0"]) == 0
    row = parse_row(capsys.readouterr().out)
    assert row["diverged"] == "true" and row["exact_cost"] == "inf"


def test_sweep_deterministic(sysdir, tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(f"system = {sysdir}\nn_grid = 100, 1000\ntrials = 3\nseed = 5\n")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["sweep", str(cfg), "--out", str(a)]) == 0
    assert main(["sweep", str(cfg), "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert (tmp_path / "a_summary.csv").read_bytes() == (tmp_path / "b_summary.csv").read_bytes()


def test_sweep_needs_output(sysdir, tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(f"system = {sysdir}\n")
    assert main(["sweep", str(cfg)]) == 1


def test_check(sysdir, capsys):
    assert main(["check", str(sysdir), "--seed", "1"]) == 0
    out = capsys.readouterr().out
    assert "false" not in out and "matrix_identities" in out


def test_exit_code_invalid_input(tmp_path):
    assert main(["synth", str(tmp_path / "nope")]) == 1


def test_exit_code_argparse(capsys):
    with pytest.raises(SystemExit) as info:
        main(["bounds"])
    assert info.value.code == 1


def test_exit_code_not_converged(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("A0 = [1.2]\nA1 = [0]\nB0 = [0]\nB1 = [0]\nQ = [1]\nR = [1]\nSigma = [1]\n")
    assert main(["synth", str(bad), "--max-iter", "200"]) == 2


def test_module_entry_point(sysdir):
    import subprocess
    import sys
    res = subprocess.run([sys.executable, "-m", "mnlqr", "synth", str(sysdir)], capture_output=True, text=True)
    assert res.returncode == 0 and "mss_radius" in res.stdout
