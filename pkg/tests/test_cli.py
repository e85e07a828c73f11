import json

import pytest

from par_graph import cli
from par_graph.errors import NumericalError
from par_graph.schema import MetricsReport

SMALL = [
    "--set", "model.feature_dim=8",
    "--set", "model.hidden_dim=6",
    "--set", "synth.feature_dim=8",
    "--set", "synth.n_subjects=6",
    "--set", "synth.n_groups=2",
    "--set", "train.epochs=2",
    "--set", "train.learning_rate=1e-3",
]


@pytest.fixture(autouse=True)
def _isolated_cwd(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)


def _synth(path, seed=1, frames=6):
    return cli.main(SMALL + ["synth", "--out", str(path), "--seed", str(seed), "--frames", str(frames)])


def test_synth_is_seed_repeatable(tmp_path, capsys):
    assert _synth(tmp_path / "a.ndjson") == 0
    assert _synth(tmp_path / "b.ndjson") == 0
    assert (tmp_path / "a.ndjson").read_bytes() == (tmp_path / "b.ndjson").read_bytes()
    lines = (tmp_path / "a.ndjson").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 6
    assert "Wrote 6 frames" in capsys.readouterr().out


def test_synth_with_blob(tmp_path):
    assert cli.main(SMALL + ["synth", "--out", "d.ndjson", "--blob", "d.bin", "--seed", "2"]) == 0
    first = json.loads((tmp_path / "d.ndjson").read_text(encoding="utf-8").splitlines()[0])
    assert "feature_ref" in first["subjects"][0]
    assert (tmp_path / "d.bin").exists()


def test_train_eval_round(tmp_path, capsys):
    data = tmp_path / "data.ndjson"
    assert _synth(data) == 0
    stride = ["--key-stride", "1"]
    assert cli.main(SMALL + ["train", "--data", str(data), "--out", "ckpt", "--seed", "3"] + stride) == 0
    log = (tmp_path / "ckpt" / "train_log.jsonl").read_text(encoding="utf-8").splitlines()
    assert [json.loads(line)["epoch"] for line in log] == [1, 2]
    assert "global" in json.loads(log[0])

    assert cli.main(SMALL + ["eval", "--data", str(data), "--checkpoint", "ckpt", "--report", "r.json"] + stride) == 0
    report = MetricsReport.from_file(tmp_path / "r.json")
    assert report.frames == 6
    assert report.config_echo["model"]["feature_dim"] == 8
    assert "F_a" in capsys.readouterr().out


def test_eval_label_threshold_override(tmp_path):
    data = tmp_path / "data.ndjson"
    assert _synth(data) == 0
    stride = ["--key-stride", "1"]
    assert cli.main(SMALL + ["train", "--data", str(data), "--out", "ckpt", "--seed", "3"] + stride) == 0

    reports = {}
    for tau in ("0.01", "0.99"):
        override = ["--set", f"train.label_threshold={tau}"]
        args = ["eval", "--data", str(data), "--checkpoint", "ckpt", "--report", f"r{tau}.json"]
        assert cli.main(SMALL + override + args + stride) == 0
        reports[tau] = MetricsReport.from_file(tmp_path / f"r{tau}.json")
    assert reports["0.01"].r_i > reports["0.99"].r_i
    assert reports["0.01"].config_echo["train"]["label_threshold"] == 0.01
    assert reports["0.99"].config_echo["train"]["label_threshold"] == 0.99
    assert reports["0.01"].config_echo["train"]["epochs"] == 2


def test_training_is_byte_identical(tmp_path):
    data = tmp_path / "data.ndjson"
    _synth(data)
    for out in ("one", "two"):
        assert cli.main(SMALL + ["train", "--data", str(data), "--out", out, "--seed", "5", "--key-stride", "1"]) == 0
    for name in ("weights.json", "weights.bin", "adam.bin", "state.json", "train_log.jsonl"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes(), name


def test_resume_continues_epochs(tmp_path):
    data = tmp_path / "data.ndjson"
    _synth(data)
    base = SMALL + ["train", "--data", str(data), "--out", "ckpt", "--seed", "5", "--key-stride", "1"]
    assert cli.main(base) == 0
    resumed = SMALL + ["--set", "train.epochs=3"] + base[len(SMALL):] + ["--resume"]
    assert cli.main(resumed) == 0
    state = json.loads((tmp_path / "ckpt" / "state.json").read_text(encoding="utf-8"))
    assert state["epoch"] == 3
    log = (tmp_path / "ckpt" / "train_log.jsonl").read_text(encoding="utf-8").splitlines()
    assert [json.loads(line)["epoch"] for line in log] == [1, 2, 3]


def test_ablation_flag_reaches_checkpoint(tmp_path):
    data = tmp_path / "data.ndjson"
    _synth(data)
    args = SMALL + ["train", "--data", str(data), "--out", "ckpt", "--seed", "1", "--key-stride", "1", "--no-dbreve", "--maxpool-agg"]
    assert cli.main(args) == 0
    state = json.loads((tmp_path / "ckpt" / "state.json").read_text(encoding="utf-8"))
    assert state["model"]["ablations"]["no_dbreve"] is True
    assert state["model"]["ablations"]["maxpool_agg"] is True
    assert state["model"]["ablations"]["no_e"] is False


def test_gt_groups_eval_is_marked(tmp_path, capsys):
    data = tmp_path / "data.ndjson"
    _synth(data)
    cli.main(SMALL + ["train", "--data", str(data), "--out", "ckpt", "--seed", "1", "--key-stride", "1"])
    capsys.readouterr()
    assert cli.main(SMALL + ["eval", "--data", str(data), "--checkpoint", "ckpt", "--gt-groups", "--key-stride", "1", "--threads", "2"]) == 0
    out = capsys.readouterr().out
    assert "ours*" in out
    assert "ground-truth groups" in out


def test_missing_data_is_a_data_error(tmp_path, capsys):
    assert cli.main(SMALL + ["train", "--data", "absent.ndjson", "--out", "ckpt", "--seed", "1"]) == 2
    assert "DataError" in capsys.readouterr().err


def test_empty_eval_set(tmp_path):
    data = tmp_path / "data.ndjson"
    _synth(data)
    cli.main(SMALL + ["train", "--data", str(data), "--out", "ckpt", "--seed", "1", "--key-stride", "1"])
    (tmp_path / "empty.ndjson").write_text("", encoding="utf-8")
    assert cli.main(SMALL + ["eval", "--data", "empty.ndjson", "--checkpoint", "ckpt"]) == 2


def test_usage_errors_exit_one():
    with pytest.raises(SystemExit) as info:
        cli.main(["train", "--data", "x.ndjson"])
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        cli.main([])
    assert info.value.code == 1


def test_config_errors_exit_one(tmp_path):
    assert cli.main(["--set", "train.nope=1", "selftest"]) == 1
    assert cli.main(["--set", "model.relation_lambda=2", "selftest"]) == 1


def test_numerical_failure_exits_three(tmp_path, monkeypatch):
    data = tmp_path / "data.ndjson"
    _synth(data)

    def diverge(*args, **kwargs):
        raise NumericalError("non-finite loss on frame 0", frame_id=0)

    monkeypatch.setattr(cli, "train", diverge)
    assert cli.main(SMALL + ["train", "--data", str(data), "--out", "ckpt", "--seed", "1", "--key-stride", "1"]) == 3


def test_generate_config(tmp_path, capsys):
    assert cli.main(["--generate-config"]) == 0
    assert (tmp_path / "config.yaml").exists()
    assert cli.main(["--generate-config"]) == 1

    (tmp_path / "config.yaml").write_text("synth:\n  n_frames: 3\n  n_subjects: 4\n  n_groups: 1\n", encoding="utf-8")
    assert cli.main(["synth", "--out", "from_cwd.ndjson", "--seed", "0"]) == 0
    assert len((tmp_path / "from_cwd.ndjson").read_text(encoding="utf-8").splitlines()) == 3


def test_selftest_command(capsys):
    assert cli.main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert "checks passed" in out
    assert "[FAIL]" not in out
