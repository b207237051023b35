import pathlib

import numpy as np

from cuelab.cli import EX_DATAERR, EX_OK, EX_TRANSFER_FAIL, EX_USAGE, main
from cuelab.sessionlog import Record, SessionHeader, SessionLog, load_session_log

GOLDEN_TABLE = pathlib.Path(__file__).parent / "golden" / "audit_table.txt"


def run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr()


def test_unknown_flag_is_usage_error(capsys, tmp_path):
    code, out = run(capsys, "--out", str(tmp_path), "audit", "--bogus")
    assert code == EX_USAGE
    assert "bogus" in out.err


def test_missing_subcommand(capsys):
    assert main([]) == EX_USAGE
    assert main(["--help"]) == EX_OK


def test_bad_config_is_usage_error(capsys, tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("nonsense: 1\n")
    code, out = run(capsys, "--config", str(cfg), "--out", str(tmp_path), "audit")
    assert code == EX_USAGE and "unknown section" in out.err


def test_audit_prints_table(capsys, tmp_path):
    code, out = run(capsys, "--out", str(tmp_path), "audit")
    assert code == EX_OK
    assert out.out == GOLDEN_TABLE.read_text()
    assert (tmp_path / "audit.txt").read_text() == out.out
    assert "misrepresentation" in (tmp_path / "audit_warnings.txt").read_text()


def probe_log(sid, phase, bucket, n=3):
    recs = []
    for k in range(n):
        recs.append(Record(200_000 * k + 100_000, "probe", {"response": "settled"}))
        recs.append(Record(200_000 * k + 200_000, "probe",
                           {"response": "wandering", "bucket": bucket}))
    return SessionLog(SessionHeader(sid, phase, False, 0), recs)


def write_study(d, a_bucket, c_bucket, n_sessions):
    d.mkdir()
    for k in range(n_sessions):
        probe_log(f"a{k}", "A", a_bucket).write(d / f"a{k}.log")
        probe_log(f"c{k}", "C", c_bucket).write(d / f"c{k}.log")


def test_transfer_pass_exit_zero(capsys, tmp_path):
    write_study(tmp_path / "st", ">60s", "<10s", 4)
    code, out = run(capsys, "--out", str(tmp_path / "o"), "evaluate-transfer",
                    "--study", str(tmp_path / "st"))
    assert code == EX_OK
    assert "verdict: PASS" in out.out
    assert (tmp_path / "o" / "report.txt").read_text() == out.out


def test_transfer_fail_exit_two(capsys, tmp_path):
    write_study(tmp_path / "st", "10-60s", "10-60s", 4)
    code, out = run(capsys, "--out", str(tmp_path / "o"), "evaluate-transfer",
                    "--study", str(tmp_path / "st"))
    assert code == EX_TRANSFER_FAIL and "verdict: FAIL" in out.out


def test_too_few_sessions_is_data_error(capsys, tmp_path):
    write_study(tmp_path / "st", ">60s", "<10s", 2)
    code, out = run(capsys, "--out", str(tmp_path / "o"), "evaluate-transfer",
                    "--study", str(tmp_path / "st"))
    assert code == EX_DATAERR and out.err


def test_corrupt_log_is_data_error(capsys, tmp_path):
    d = tmp_path / "st"
    d.mkdir()
    (d / "x.log").write_text("garbage\n")
    code, _ = run(capsys, "--out", str(tmp_path), "evaluate-transfer", "--study", str(d))
    assert code == EX_DATAERR


def test_run_session_cueing_needs_model(capsys, tmp_path):
    code, out = run(capsys, "--out", str(tmp_path), "run-session", "--phase", "B")
    assert code == EX_USAGE and "--model" in out.err


def test_train_then_run_session(capsys, tmp_path):
    code, out = run(capsys, "--seed", "0", "--out", str(tmp_path), "train",
                    "--sim-sessions", "4", "--trees", "10")
    assert code == EX_OK and "CV accuracy" in out.out
    model = tmp_path / "model.cuelab"
    code, out = run(capsys, "--seed", "2", "--out", str(tmp_path), "run-session",
                    "--phase", "B", "--duration-s", "180", "--model", str(model),
                    "--session-id", "b1", "--amplitude", "1.5")
    assert code == EX_OK
    lg = load_session_log(tmp_path / "b1.log")
    assert lg.header.stim_enabled and lg.header.amplitude_ma == 1.5


def test_amplitude_over_ceiling(capsys, tmp_path):
    code, out = run(capsys, "--out", str(tmp_path), "run-session", "--phase", "C",
                    "--duration-s", "120", "--amplitude", "5")
    assert code == EX_USAGE and "--amplitude" in out.err


def test_features_from_csv(capsys, tmp_path):
    rng = np.random.default_rng(0)
    chans = ["Fp1", "Fp2", "Fz", "Cz", "TP9", "TP10"]
    lines = ["t_ms," + ",".join(chans)]
    for i in range(512):
        lines.append(f"{i * 1000 // 256}," + ",".join(f"{v:.5f}" for v in rng.standard_normal(6)))
    src = tmp_path / "eeg.csv"
    src.write_text("\n".join(lines) + "\n")
    code, out = run(capsys, "--out", str(tmp_path), "features", "--input", str(src))
    assert code == EX_OK
    rows = (tmp_path / "features.csv").read_text().splitlines()
    assert len(rows) == 1 + 7


def test_simulate_short_run(capsys, tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("sim:\n  episodes: 5\n  episode_ms: 3000\n  v_target_every: 0\n")
    code, out = run(capsys, "--seed", "1", "--config", str(cfg), "--out", str(tmp_path),
                    "simulate", "--device", "none")
    assert code == EX_OK and "terminal mode" in out.out
    assert (tmp_path / "trajectory.csv").exists()


def test_seed_option_placement(capsys, tmp_path):
    a = run(capsys, "--seed", "3", "--out", str(tmp_path / "a"), "audit")
    b = run(capsys, "audit", "--seed", "3", "--out", str(tmp_path / "b"))
    assert a == b
