"""Command-line contract: exit codes, JSON errors, artifacts, precedence."""

import json
import os
import subprocess
import sys

import pytest

from promptrec.cli import dispatch

TINY_CFG = {
    "gen": {
        "num_users": 8,
        "num_items": 30,
        "num_genres": 4,
        "seq_len_range": [24, 28],
        "shift_period": 6,
    },
    "model": {
        "backbone": {"arch": "gru", "d": 8, "max_len": 16},
        "prompt_rows": 4,
        "prompt_width": 32,
        "projector_hidden": 8,
        "fusion_heads": 2,
    },
    "epochs": [1, 1, 1],
    "split_ratios": [0.7, 0.1, 0.2],
}


def run_cli(argv, capsys):
    """dispatch() plus captured stdout/stderr and a normalized exit code."""
    code = 0
    try:
        code = dispatch(argv)
    except SystemExit as exc:
        code = exc.code
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def stderr_error(err):
    lines = [line for line in err.strip().splitlines() if line]
    assert len(lines) == 1, f"expected one stderr line, got {err!r}"
    return json.loads(lines[0])


@pytest.fixture(scope="module")
def cfg_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "tiny.json"
    path.write_text(json.dumps(TINY_CFG))
    return str(path)


@pytest.fixture(scope="module")
def data_dir(cfg_path, tmp_path_factory):
    out = str(tmp_path_factory.mktemp("data"))
    code = dispatch(["gen-data", "--config", cfg_path, "--out", out, "--seed", "3"])
    assert code == 0
    return out


@pytest.fixture(scope="module")
def ckpt_dir(cfg_path, data_dir, tmp_path_factory):
    out = str(tmp_path_factory.mktemp("ckpt"))
    code = dispatch(
        ["train", "--config", cfg_path, "--data", data_dir, "--out", out, "--seed", "3"]
    )
    assert code == 0
    return out


class TestGenData:
    def test_writes_corpus_pair(self, cfg_path, tmp_path, capsys):
        out = str(tmp_path / "corpus")
        os.makedirs(out)
        code, stdout, _ = run_cli(
            ["gen-data", "--config", cfg_path, "--out", out, "--seed", "7"], capsys
        )
        assert code == 0
        blob = json.loads(stdout)
        assert os.path.isfile(blob["items"])
        assert os.path.isfile(blob["interactions"])
        assert blob["users"] == 8
        assert blob["catalog"] == 30

    def test_same_seed_same_bytes(self, cfg_path, tmp_path, capsys):
        paths = []
        for sub in ("a", "b"):
            out = str(tmp_path / sub)
            os.makedirs(out)
            code, stdout, _ = run_cli(
                ["gen-data", "--config", cfg_path, "--out", out, "--seed", "11"], capsys
            )
            assert code == 0
            paths.append(json.loads(stdout))
        for key in ("items", "interactions"):
            with open(paths[0][key], "rb") as a, open(paths[1][key], "rb") as b:
                assert a.read() == b.read()

    def test_missing_out_is_usage_error(self, capsys):
        code, _, err = run_cli(["gen-data"], capsys)
        assert code == 2
        assert stderr_error(err)["error"] == "usage"

    def test_unknown_command_is_usage_error(self, capsys):
        code, _, err = run_cli(["frobnicate"], capsys)
        assert code == 2
        assert stderr_error(err)["error"] == "usage"

    def test_bad_config_file(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{nope")
        code, _, err = run_cli(
            ["gen-data", "--config", str(bad), "--out", str(tmp_path)], capsys
        )
        assert code == 1
        assert stderr_error(err)["error"] == "configuration"


class TestTrain:
    def test_full_curriculum_writes_three_checkpoints(self, ckpt_dir):
        for stage in (1, 2, 3):
            assert os.path.isfile(os.path.join(ckpt_dir, f"checkpoint.stage{stage}.dpr"))

    def test_later_stage_without_earlier_fails(self, cfg_path, data_dir, tmp_path, capsys):
        out = str(tmp_path / "fresh")
        os.makedirs(out)
        code, _, err = run_cli(
            ["train", "--config", cfg_path, "--data", data_dir, "--out", out, "--stages", "2"],
            capsys,
        )
        assert code == 1
        assert stderr_error(err)["error"] == "state"

    def test_stage_resume_from_checkpoint(self, cfg_path, data_dir, ckpt_dir, tmp_path, capsys):
        out = str(tmp_path / "resume")
        os.makedirs(out)
        code, stdout, _ = run_cli(
            ["train", "--config", cfg_path, "--data", data_dir, "--out", out,
             "--seed", "3", "--stages", "1"],
            capsys,
        )
        assert code == 0
        code, stdout, _ = run_cli(
            ["train", "--config", cfg_path, "--data", data_dir, "--out", out,
             "--seed", "3", "--stages", "2,3"],
            capsys,
        )
        assert code == 0
        stages = [row["stage"] for row in json.loads(stdout)["stages"]]
        assert stages == [2, 3]

    def test_descending_stages_rejected(self, cfg_path, data_dir, tmp_path, capsys):
        code, _, err = run_cli(
            ["train", "--config", cfg_path, "--data", data_dir,
             "--out", str(tmp_path), "--stages", "3,1"],
            capsys,
        )
        assert code == 1
        assert stderr_error(err)["error"] == "invalid_argument"

    def test_missing_data_dir_flag_and_env(self, cfg_path, tmp_path, capsys, monkeypatch):
        monkeypatch.delenv("PROMPTREC_DATA", raising=False)
        code, _, err = run_cli(
            ["train", "--config", cfg_path, "--out", str(tmp_path)], capsys
        )
        assert code == 1
        assert stderr_error(err)["error"] == "configuration"

    def test_epochs_flag_overrides_config_file(
        self, cfg_path, data_dir, tmp_path, capsys
    ):
        slow_cfg = dict(TINY_CFG, epochs=[4, 1, 1])
        slow_path = tmp_path / "slow.json"
        slow_path.write_text(json.dumps(slow_cfg))
        out_flag = str(tmp_path / "flag")
        out_file = str(tmp_path / "file")
        for out in (out_flag, out_file):
            os.makedirs(out)
        code, _, _ = run_cli(
            ["train", "--config", str(slow_path), "--data", data_dir, "--out", out_flag,
             "--seed", "5", "--stages", "1", "--epochs", "1,1,1"],
            capsys,
        )
        assert code == 0
        code, _, _ = run_cli(
            ["train", "--config", cfg_path, "--data", data_dir, "--out", out_file,
             "--seed", "5", "--stages", "1"],
            capsys,
        )
        assert code == 0
        with open(os.path.join(out_flag, "checkpoint.stage1.dpr"), "rb") as a:
            flag_bytes = a.read()
        with open(os.path.join(out_file, "checkpoint.stage1.dpr"), "rb") as b:
            assert flag_bytes == b.read()

    def test_bad_epochs_flag(self, cfg_path, data_dir, tmp_path, capsys):
        code, _, err = run_cli(
            ["train", "--config", cfg_path, "--data", data_dir,
             "--out", str(tmp_path), "--epochs", "1,2"],
            capsys,
        )
        assert code == 1
        assert stderr_error(err)["error"] == "invalid_argument"


class TestEval:
    def test_report_file_with_config_echo(self, cfg_path, data_dir, ckpt_dir, tmp_path, capsys):
        report_path = str(tmp_path / "report.json")
        code, stdout, _ = run_cli(
            ["eval", "--config", cfg_path, "--data", data_dir,
             "--checkpoint", os.path.join(ckpt_dir, "checkpoint.stage3.dpr"),
             "--task", "pos,neg", "--n", "1,2", "--k", "5", "--seed", "2",
             "--out", report_path],
            capsys,
        )
        assert code == 0
        with open(report_path) as fh:
            blob = json.load(fh)
        assert blob["config_echo"]["eval"]["ns"] == [1, 2]
        assert blob["config_echo"]["model"]["backbone"]["d"] == 8
        # pos/neg tasks x three methods x two depths x one cutoff
        assert len(blob["cells"]) == 2 * 3 * 2 * 1

    def test_prints_table_without_out(self, cfg_path, data_dir, ckpt_dir, capsys):
        code, stdout, _ = run_cli(
            ["eval", "--config", cfg_path, "--data", data_dir,
             "--checkpoint", os.path.join(ckpt_dir, "checkpoint.stage3.dpr"),
             "--task", "seq", "--k", "5", "--method", "base,dpr"],
            capsys,
        )
        assert code == 0
        assert "SEQ" in stdout

    def test_stage_one_checkpoint_cannot_serve_dpr(self, cfg_path, data_dir, ckpt_dir, capsys):
        code, _, err = run_cli(
            ["eval", "--config", cfg_path, "--data", data_dir,
             "--checkpoint", os.path.join(ckpt_dir, "checkpoint.stage1.dpr"),
             "--task", "pos", "--n", "1", "--k", "5"],
            capsys,
        )
        assert code == 1
        assert stderr_error(err)["error"] == "state"

    def test_env_var_supplies_data_dir(self, cfg_path, data_dir, ckpt_dir, capsys, monkeypatch):
        monkeypatch.setenv("PROMPTREC_DATA", data_dir)
        code, _, _ = run_cli(
            ["eval", "--config", cfg_path,
             "--checkpoint", os.path.join(ckpt_dir, "checkpoint.stage1.dpr"),
             "--task", "seq", "--k", "5", "--method", "base"],
            capsys,
        )
        assert code == 0

    def test_bad_task_flag(self, cfg_path, data_dir, ckpt_dir, capsys):
        code, _, err = run_cli(
            ["eval", "--config", cfg_path, "--data", data_dir,
             "--checkpoint", os.path.join(ckpt_dir, "checkpoint.stage3.dpr"),
             "--task", "everything"],
            capsys,
        )
        assert code == 1
        assert stderr_error(err)["error"] == "invalid_argument"

    def test_missing_checkpoint_is_io_error(self, cfg_path, data_dir, tmp_path, capsys):
        code, _, err = run_cli(
            ["eval", "--config", cfg_path, "--data", data_dir,
             "--checkpoint", str(tmp_path / "nope.dpr")],
            capsys,
        )
        assert code == 1
        assert stderr_error(err)["error"] in ("io", "not_found")


class TestAblate:
    def test_towers_report(self, cfg_path, tmp_path, capsys):
        report_path = str(tmp_path / "towers.json")
        code, stdout, _ = run_cli(
            ["ablate", "--config", cfg_path, "--which", "towers", "--seeds", "0",
             "--out", report_path],
            capsys,
        )
        assert code == 0
        with open(report_path) as fh:
            blob = json.load(fh)
        assert set(blob["means"]) == {"full", "single-tower"}
        assert blob["config_echo"]["seeds"] == [0]

    def test_unknown_ablation(self, cfg_path, capsys):
        code, _, err = run_cli(
            ["ablate", "--config", cfg_path, "--which", "optimizer"], capsys
        )
        assert code == 1
        assert stderr_error(err)["error"] == "invalid_argument"


class TestServeCommand:
    def test_static_must_be_directory(self, cfg_path, data_dir, ckpt_dir, tmp_path, capsys):
        bogus = str(tmp_path / "not-there")
        code, _, err = run_cli(
            ["serve", "--config", cfg_path, "--data", data_dir,
             "--checkpoint", os.path.join(ckpt_dir, "checkpoint.stage3.dpr"),
             "--static", bogus],
            capsys,
        )
        assert code == 1
        assert stderr_error(err)["error"] == "configuration"


def test_console_script_emits_usage_json():
    proc = subprocess.run(
        [sys.executable, "-m", "promptrec.cli", "train"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 2
    assert json.loads(proc.stderr.strip())["error"] == "usage"
