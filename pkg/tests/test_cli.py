import json
import subprocess
import sys

import numpy as np
import pytest

import kathleen.training as training
from kathleen.autodiff import Tensor
from kathleen.checkpoint import save_model
from kathleen.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_OK, main
from kathleen.config import ModelConfig
from kathleen.model import KathleenModel


@pytest.fixture()
def run_dir(tmp_path):
    rows = ["text,label"] + [f"{'az'[i % 2] * (8 + i % 13)},{i % 2}" for i in range(40)]
    (tmp_path / "train.csv").write_text("\n".join(rows) + "\n")
    (tmp_path / "test.csv").write_text("\n".join(rows[:21]) + "\n")
    (tmp_path / "run.cfg").write_text(
        "[model]\nd = 16\nl_max = 32\n\n[train]\nepochs = 2\nbatch_size = 8\nlr = 0.003\nmax_len = 32\n\n"
        "[data]\ntrain_path = train.csv\ntest_path = test.csv\n"
    )
    return tmp_path


def _json_lines(text):
    return [json.loads(s) for s in text.splitlines() if s.startswith("{")]


def test_train_then_evaluate_and_inspect(run_dir, capsys):
    out = run_dir / "out"
    assert main(["train", "--config", str(run_dir / "run.cfg"), "--seeds", "1,2", "--out", str(out)]) == EXIT_OK
    captured = capsys.readouterr()
    lines = _json_lines(captured.out)
    assert [d["type"] for d in lines] == ["epoch", "epoch", "summary"] * 2 + ["seeds"]
    assert "accuracy" in captured.err and "±" in captured.err
    report = (out / "report-seed1.jsonl").read_text().splitlines()
    assert len(report) == 3

    ckpt = str(out / "model-seed1.kath")
    assert main(["evaluate", "--checkpoint", ckpt, "--config", str(run_dir / "run.cfg")]) == EXIT_OK
    result = _json_lines(capsys.readouterr().out)[0]
    assert result["count"] == 20 and sum(map(sum, result["confusion"])) == 20

    # d = 16 breaks the per-byte encoder accounting, so inspect reports it.
    assert main(["inspect", ckpt, "--json"]) == EXIT_CHECK
    info = _json_lines(capsys.readouterr().out)[0]
    assert any("encoder" in v for v in info["violations"])


def test_inspect_default_model_is_clean(tmp_path, capsys):
    path = tmp_path / "m.kath"
    save_model(path, KathleenModel(ModelConfig(), seed=0))
    assert main(["inspect", str(path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "VIOLATION" not in out and "reverb.gamma" in out


def test_inspect_defaults(capsys):
    assert main(["inspect", "--defaults"]) == EXIT_OK
    assert "[model]" in capsys.readouterr().out


def test_config_errors_exit_2(run_dir, capsys):
    bad = run_dir / "bad.cfg"
    bad.write_text("[train]\nepoch = 3\n")
    assert main(["train", "--config", str(bad), "--out", str(run_dir / "o")]) == EXIT_CONFIG
    missing = run_dir / "missing.cfg"
    missing.write_text("[data]\ntrain_path = nowhere.csv\ntest_path = nowhere.csv\n")
    assert main(["train", "--config", str(missing), "--out", str(run_dir / "o")]) == EXIT_CONFIG
    assert "nowhere.csv" in capsys.readouterr().err


def test_corrupt_checkpoint_exit_2(tmp_path, capsys):
    path = tmp_path / "junk.kath"
    path.write_bytes(b"not a checkpoint")
    assert main(["inspect", str(path)]) == EXIT_CONFIG
    assert "magic" in capsys.readouterr().err


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_exit_3(run_dir, monkeypatch, capsys):
    real = training.cross_entropy
    monkeypatch.setattr(training, "cross_entropy", lambda x, y: real(x, y) * Tensor(np.float32(np.inf)))
    assert main(["train", "--config", str(run_dir / "run.cfg"), "--out", str(run_dir / "o")]) == EXIT_DIVERGED
    assert "head.query" in capsys.readouterr().err


def test_bench_single_length(capsys):
    assert main(["bench", "--lengths", "256", "--repeat", "1"]) == EXIT_OK
    rows = capsys.readouterr().out.strip().splitlines()
    assert rows[0] == "length,mean_ms,std_ms,peak_bytes"
    assert len(rows) == 2 and rows[1].startswith("256,")


def test_bench_too_short_is_config_error():
    assert main(["bench", "--lengths", "4"]) == EXIT_CONFIG


def test_usage_error_exits_2():
    with pytest.raises(SystemExit) as info:
        main(["train"])
    assert info.value.code == 2


def test_module_entry_point_gradcheck():
    proc = subprocess.run(
        [sys.executable, "-m", "kathleen", "gradcheck", "--json"], capture_output=True, text=True, timeout=300
    )
    assert proc.returncode == 0, proc.stderr
    rows = _json_lines(proc.stdout)
    assert rows and all(r["ok"] for r in rows)
