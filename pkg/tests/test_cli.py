import os
import struct
import subprocess
import sys

import numpy as np
import pytest

import qseig as q
from qseig import cli, runio


def small_config(tmp_path, **overrides):
    cfg = runio.RunConfig(
        lower=(-5.5, -5.5), upper=(5.5, 5.5), points=(16, 16),
        potential="harmonic", harmonic_coeff=0.5, c_lap=0.5,
        tau=0.2, eps=1e-6, max_steps=3000, seed=42, n_eig=3,
        history_csv=str(tmp_path / "hist.csv"),
        report=str(tmp_path / "report.txt"),
        sweep_csv=str(tmp_path / "sweep.csv"),
        reference_csv=str(tmp_path / "ref.csv"),
        reference_state=str(tmp_path / "ref.state"),
        reference_tol=1e-10,
    )
    for key, val in overrides.items():
        setattr(cfg, key, val)
    path = tmp_path / "run.cfg"
    runio.save_config(cfg, str(path))
    return cfg, str(path)


def test_config_roundtrip_identity(tmp_path):
    cfg, path = small_config(tmp_path)
    again = runio.load_config(path)
    assert again == cfg
    assert runio.parse_config_text(runio.serialize_config(again)) == again


def test_config_unknown_key_rejected():
    with pytest.raises(q.ConfigError, match="unknown key"):
        runio.parse_config_text("problem.coeff = 1.0\n")
    with pytest.raises(q.ConfigError, match="duplicate"):
        runio.parse_config_text("n_eig = 2\nn_eig = 3\n")
    with pytest.raises(q.ConfigError):
        runio.parse_config_text("n_eig = banana\n")


def test_config_comments_and_blanks():
    cfg = runio.parse_config_text("# comment\n\nn_eig = 5\n")
    assert cfg.n_eig == 5


def test_state_file_format(tmp_path):
    path = str(tmp_path / "x.state")
    U = np.arange(12.0).reshape(4, 3)
    runio.write_state(path, U)
    blob = open(path, "rb").read()
    assert blob[:5] == b"QSEV1"
    ng, n = struct.unpack("<QQ", blob[5:21])
    assert (ng, n) == (4, 3)
    col_major = np.frombuffer(blob[21:], dtype="<f8")
    np.testing.assert_array_equal(col_major[:4], U[:, 0])
    back = runio.read_state(path)
    np.testing.assert_array_equal(back, U)


def test_state_file_bad_magic(tmp_path):
    path = str(tmp_path / "bad.state")
    with open(path, "wb") as fh:
        fh.write(b"NOPE!" + b"\x00" * 16)
    with pytest.raises(q.ConfigError):
        runio.read_state(path)


def test_solve_exit_zero_and_outputs(tmp_path, capsys):
    cfg, path = small_config(tmp_path)
    code = cli.cmd_solve(path)
    assert code == 0
    lines = open(cfg.history_csv).read().splitlines()
    assert lines[0] == runio.CSV_HEADER
    assert len(lines) >= 3
    first = lines[1].split(",")
    assert first[0] == "0"
    assert len(first) == 8
    # 17 significant digits on numeric fields
    assert len(first[1].replace("-", "").replace(".", "").lstrip("0")) >= 16
    report = open(cfg.report).read()
    assert "terminated_by: ToleranceMet" in report
    assert "err_i" in report
    out = capsys.readouterr().out
    assert "step-size safeguards" in out


def test_solve_err_u_column_decays(tmp_path):
    cfg, path = small_config(tmp_path)
    assert cli.cmd_solve(path) == 0
    rows = [r.split(",") for r in open(cfg.history_csv).read().splitlines()[1:]]
    err_u = np.array([float(r[5]) for r in rows])
    assert err_u[0] > err_u[-1]
    assert err_u[-1] <= 1e-4


def test_solve_missing_config_no_outputs(tmp_path):
    code = cli.cmd_solve(str(tmp_path / "nope.cfg"))
    assert code == 1
    assert list(tmp_path.iterdir()) == []


def test_solve_invalid_output_dir(tmp_path):
    cfg, path = small_config(tmp_path, history_csv=str(tmp_path / "no" / "dir.csv"))
    assert cli.cmd_solve(path) == 1


def test_solve_max_steps_one(tmp_path):
    cfg, path = small_config(tmp_path, max_steps=1)
    code = cli.cmd_solve(path)
    assert code == 2
    lines = open(cfg.history_csv).read().splitlines()
    assert len(lines) == 2  # header + exactly one data row


def test_solve_deterministic_bytes(tmp_path):
    cfg, path = small_config(tmp_path, max_steps=40, eps=1e-30)
    assert cli.cmd_solve(path) == 2
    first = open(cfg.history_csv, "rb").read()
    assert cli.cmd_solve(path) == 2
    assert open(cfg.history_csv, "rb").read() == first


def test_solve_seed_override_changes_run(tmp_path):
    cfg, path = small_config(tmp_path, max_steps=25, eps=1e-30)
    cli.cmd_solve(path)
    base = open(cfg.history_csv, "rb").read()
    cli.cmd_solve(path, seed=7)
    assert open(cfg.history_csv, "rb").read() != base


def test_solve_reject_mode(tmp_path):
    _, path = small_config(tmp_path, tau=5.0, enforce_bounds="reject")
    assert cli.cmd_solve(path) == 1


def test_solve_coulomb_sigma_too_small(tmp_path):
    _, path = small_config(
        tmp_path, potential="soft_coulomb", coulomb_charge=2.0,
        coulomb_softening=1.0, sigma=0.0,
        lower=(-20.0, -20.0, -20.0), upper=(20.0, 20.0, 20.0), points=(9, 9, 9))
    assert cli.cmd_solve(path) == 1


def test_tau_sweep_requires_two_values(tmp_path):
    _, path = small_config(tmp_path)
    assert cli.cmd_tau_sweep(path, [0.1]) == 1
    assert cli.cmd_tau_sweep(path, None) == 1


def test_tau_sweep_small_problem(tmp_path, capsys):
    cfg, path = small_config(tmp_path, eps=1e-7, max_steps=20000)
    code = cli.cmd_tau_sweep(path, [0.1, 0.3, 0.6])
    assert code == 0
    lines = open(cfg.sweep_csv).read().splitlines()
    assert lines[0] == "index,tau=0.1,tau=0.3,tau=0.6"
    assert len(lines) == 1 + cfg.n_eig + 1
    steps = [int(s) for s in lines[-1].split(",")[1:]]
    assert steps[0] > steps[1] > steps[2]
    out = capsys.readouterr().out
    assert "stable" in out


def test_tau_sweep_identical_taus_bitwise(tmp_path):
    cfg, path = small_config(tmp_path, eps=1e-7, max_steps=20000)
    assert cli.cmd_tau_sweep(path, [0.3, 0.3]) == 0
    lines = open(cfg.sweep_csv).read().splitlines()
    for line in lines[1:1 + cfg.n_eig]:
        _, a, b = line.split(",")
        assert a == b


def test_verify_small_config_passes(tmp_path, capsys):
    _, path = small_config(tmp_path, n_eig=3)
    assert cli.cmd_verify(path) == 0
    out = capsys.readouterr().out
    assert "checks passed" in out
    assert "FAIL" not in out


def test_verify_sigma_hint(tmp_path, capsys):
    _, path = small_config(
        tmp_path, potential="soft_coulomb", coulomb_charge=2.0,
        coulomb_softening=1.0, sigma=0.0,
        lower=(-20.0, -20.0, -20.0), upper=(20.0, 20.0, 20.0), points=(9, 9, 9))
    assert cli.cmd_verify(path) == 4
    err = capsys.readouterr().err
    assert "sigma" in err


def test_reference_outputs_and_roundtrip(tmp_path):
    cfg, path = small_config(tmp_path)
    assert cli.cmd_reference(path) == 0
    lines = open(cfg.reference_csv).read().splitlines()
    assert lines[0] == "i,eigenvalue,residual_norm"
    assert len(lines) == cfg.n_eig + 2  # rows + energy line
    vals = [float(line.split(",")[1]) for line in lines[1:1 + cfg.n_eig]]
    np.testing.assert_allclose(vals, [1, 2, 2], atol=0.2)
    block = runio.read_state(cfg.reference_state)
    assert block.shape == (16 * 16, 3)
    runio.write_state(str(tmp_path / "again.state"), block)
    assert open(cfg.reference_state, "rb").read() == \
        open(str(tmp_path / "again.state"), "rb").read()


def test_reference_residual_scales_with_tol(tmp_path):
    cfg, path = small_config(tmp_path, reference_tol=1e-6)
    cli.cmd_reference(path)
    loose = max(float(l.split(",")[2]) for l in
                open(cfg.reference_csv).read().splitlines()[1:1 + cfg.n_eig])
    cfg2, path2 = small_config(tmp_path, reference_tol=1e-11)
    cli.cmd_reference(path2)
    tight = max(float(l.split(",")[2]) for l in
                open(cfg2.reference_csv).read().splitlines()[1:1 + cfg2.n_eig])
    assert loose < 1e-6 and tight < 1e-11


def test_reference_no_convergence_exit_code(tmp_path, monkeypatch):
    _, path = small_config(tmp_path)

    def bail(*args, **kwargs):
        raise q.NoConvergence("stalled")

    monkeypatch.setattr(cli.analysis, "reference_subspace_iteration", bail)
    assert cli.cmd_reference(path) == 5


def test_solve_reference_file_kind(tmp_path):
    cfg, path = small_config(tmp_path)
    assert cli.cmd_reference(path) == 0
    cfg2, path2 = small_config(tmp_path, reference_kind="file",
                               reference_path=cfg.reference_state)
    assert cli.cmd_solve(path2) == 0
    report = open(cfg2.report).read()
    assert "err_i" in report


def test_solve_reference_none(tmp_path):
    cfg, path = small_config(tmp_path, reference_kind="none")
    assert cli.cmd_solve(path) == 0
    assert "err_i" not in open(cfg.report).read()


def test_solve_bad_reference_path_fails_before_running(tmp_path):
    cfg, path = small_config(tmp_path, reference_kind="file",
                             reference_path=str(tmp_path / "missing.state"))
    assert cli.cmd_solve(path) == 1
    assert not (tmp_path / "hist.csv").exists()


def test_main_subprocess_entry(tmp_path):
    _, path = small_config(tmp_path, max_steps=5, eps=1e-30)
    env = dict(os.environ, QSEIG_THREADS="1")
    proc = subprocess.run(
        [sys.executable, "-m", "qseig.cli", "solve", "--config", path, "--serial"],
        capture_output=True, text=True, env=env, timeout=300)
    assert proc.returncode == 2
    assert "step-size safeguards" in proc.stdout


def test_main_bad_tau_list(tmp_path):
    _, path = small_config(tmp_path)
    assert cli.main(["tau-sweep", "--config", path, "--tau", "0.1,zebra"]) == 1


def test_from_state_init(tmp_path):
    cfg, path = small_config(tmp_path)
    assert cli.cmd_reference(path) == 0
    cfg2, path2 = small_config(tmp_path, init="from_state",
                               init_state_path=cfg.reference_state,
                               max_steps=10)
    assert cli.cmd_solve(path2) == 0  # oracle start converges immediately
