import hashlib
import subprocess
import sys

import numpy as np
import pytest

from hfgpi.cli import main

FAST = ["--kg", "4", "--kp", "2", "--topk", "4", "--lr", "1e-3"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def tree_digest(root):
    return {p.relative_to(root).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def cohort_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli") / "cohort"
    assert main(["synth", "--out", str(root), "--patients", "32", "--seed", "7"]) == 0
    return root


@pytest.fixture(scope="module")
def checkpoint(cohort_dir):
    path = cohort_dir.parent / "model.ckpt"
    assert main(["train", "--manifest", str(cohort_dir), "--out", str(path), "--epochs", "3", *FAST]) == 0
    return path


def test_synth_is_deterministic(tmp_path, capsys, cohort_dir):
    code, out, _ = run(capsys, "synth", "--out", tmp_path / "again", "--patients", 32, "--seed", 7)
    assert code == 0 and "spec.seed=7" in out
    assert tree_digest(tmp_path / "again") == tree_digest(cohort_dir)


def test_synth_rejects_bad_censoring(tmp_path, capsys):
    code, _, err = run(capsys, "synth", "--out", tmp_path / "x", "--censor", 1.5)
    assert code == 1 and "censor" in err


def test_usage_errors_exit_1(capsys):
    assert run(capsys, "bogus")[0] == 1
    assert run(capsys, "train")[0] == 1
    assert run(capsys, "crossval", "--manifest", "m", "--kg", "0")[0] == 1


def test_train_log_and_config_echo(checkpoint, cohort_dir, tmp_path, capsys):
    code, out, _ = run(capsys, "train", "--manifest", cohort_dir, "--out", tmp_path / "l0.ckpt",
                       "--epochs", 2, "--lambda", 0, *FAST)
    assert code == 0
    assert "config.lam=0.0" in out and "config.epochs=2" in out
    rows = [line.split("\t") for line in out.splitlines() if line[:1].isdigit() and "\t" in line]
    assert len(rows) == 2 and all(r[2] == "0.0" for r in rows)


def test_train_resume_is_bitwise(cohort_dir, checkpoint, tmp_path, capsys):
    part = tmp_path / "part.ckpt"
    assert run(capsys, "train", "--manifest", cohort_dir, "--out", part, "--epochs", 3,
               "--stop-after", 1, *FAST)[0] == 0
    assert run(capsys, "train", "--manifest", cohort_dir, "--out", part, "--resume", part)[0] == 0
    assert part.read_bytes() == checkpoint.read_bytes()


def test_evaluate_report_format(cohort_dir, checkpoint, tmp_path, capsys):
    report = tmp_path / "eval.txt"
    assert run(capsys, "evaluate", "--manifest", cohort_dir, "--checkpoint", checkpoint,
               "--report", report)[0] == 0
    lines = report.read_text().splitlines()
    assert sum(line.startswith("c_index=") for line in lines) == 1
    assert sum(line.startswith("[km ") for line in lines) == 2
    assert lines.count("[log_rank]") == 1
    assert any(line.startswith("config.seed=") for line in lines)
    again = tmp_path / "eval2.txt"
    main(["evaluate", "--manifest", str(cohort_dir), "--checkpoint", str(checkpoint), "--report", str(again)])
    assert again.read_bytes() == report.read_bytes()


def test_evaluate_missing_checkpoint(cohort_dir, tmp_path, capsys):
    code, _, err = run(capsys, "evaluate", "--manifest", cohort_dir, "--checkpoint", tmp_path / "none")
    assert code == 2 and "not found" in err


def test_untrained_model_on_null_cohort_is_near_half(tmp_path, capsys):
    root = tmp_path / "null"
    assert main(["synth", "--out", str(root), "--beta", "0", "--patients", "200", "--seed", "11"]) == 0
    ckpt = tmp_path / "init.ckpt"
    assert main(["train", "--manifest", str(root), "--out", str(ckpt), "--stop-after", "0", *FAST]) == 0
    capsys.readouterr()
    code, out, _ = run(capsys, "evaluate", "--manifest", root, "--checkpoint", ckpt)
    cidx = float(next(line for line in out.splitlines() if line.startswith("c_index=")).split("=")[1])
    assert code == 0 and abs(cidx - 0.5) <= 0.1


def test_crossval_rows_and_mean(cohort_dir, capsys):
    code, out, _ = run(capsys, "crossval", "--manifest", cohort_dir, "--epochs", 1, *FAST)
    assert code == 0
    lines = out.splitlines()
    start = lines.index("fold\tn_train\tn_test\tc_index")
    rows = [line.split("\t") for line in lines[start + 1:start + 6]]
    assert [r[0] for r in rows] == ["1", "2", "3", "4", "5"]
    mean = float(next(line for line in lines if line.startswith("mean_c_index=")).split("=")[1])
    assert mean == pytest.approx(np.mean([float(r[3]) for r in rows]), abs=1e-15)


def test_gradcheck_command(capsys):
    code, out, _ = run(capsys, "gradcheck")
    assert code == 0 and "result=PASS" in out and "head.weight" in out and "config.n_g=6" in out
    code, out, _ = run(capsys, "gradcheck", "--tolerance", 1e-30)
    assert code == 3 and "result=FAIL" in out


def test_inspect(cohort_dir, checkpoint, capsys):
    code, out, _ = run(capsys, "inspect", "--manifest", cohort_dir, "--checkpoint", checkpoint,
                       "--protein", "P01", "--top", 10)
    assert code == 0 and "protein=P01" in out
    lines = out.splitlines()
    start = lines.index("rank\tgene\tmean_attention")
    weights = [float(line.split("\t")[2]) for line in lines[start + 1:start + 11]]
    assert weights == sorted(weights, reverse=True)
    members = lines[lines.index("sample_id\tpatch_ids") + 1:]
    assert len(members) == 32 and all(len(m.split("\t")[1].split(",")) == 4 for m in members)
    assert run(capsys, "inspect", "--manifest", cohort_dir, "--checkpoint", checkpoint,
               "--protein", "P01", "--top", 10)[1] == out


def test_inspect_unknown_protein(cohort_dir, checkpoint, capsys):
    code, _, err = run(capsys, "inspect", "--manifest", cohort_dir, "--checkpoint", checkpoint,
                       "--protein", "NOPE")
    assert code == 1 and "P00" in err and "P07" in err


def test_console_script_and_log_level(tmp_path):
    env = {"HFGPI_LOG_LEVEL": "INFO", "PATH": "/usr/bin:/bin:/usr/local/bin"}
    proc = subprocess.run([sys.executable, "-m", "hfgpi.cli", "synth", "--out", str(tmp_path / "c"),
                           "--patients", "10", "--report", str(tmp_path / "r.txt")],
                          capture_output=True, text=True, env=env)
    assert proc.returncode == 0
    assert "wrote" in proc.stderr and proc.stdout == ""
    assert "spec.n_patients=10" in (tmp_path / "r.txt").read_text()
