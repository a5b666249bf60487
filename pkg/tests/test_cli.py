import hashlib
import json

import pytest

from dfkd_beam.cli import main
from dfkd_beam.scenario import read_dataset_header

TINY = ["--num-trajectories", "10", "--slots-per-trajectory", "14", "--feature-dim", "6"]
FAST = ["--epochs", "1", "--batch-size", "8", "--steps-per-epoch", "2", "--quiet"]


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture
def files(tmp_path):
    data = tmp_path / "d.bin"
    assert main(["gen-data", "--out", str(data), "--quiet", *TINY]) == 0
    teacher = tmp_path / "t.ckpt"
    assert main(["train-teacher", "--data", str(data), "--out", str(teacher), "--hidden-dim", "6", *FAST]) == 0
    return tmp_path, data, teacher


def test_gen_data_is_reproducible(tmp_path):
    a, b, c = tmp_path / "a.bin", tmp_path / "b.bin", tmp_path / "c.bin"
    for p in (a, b):
        assert main(["gen-data", "--seed", "4", "--out", str(p), "--quiet", *TINY]) == 0
    assert main(["gen-data", "--seed", "5", "--out", str(c), "--quiet", *TINY]) == 0
    assert sha(a) == sha(b) != sha(c)


def test_flag_beats_config_file(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"num_trajectories": 3, "feature_dim": 7, "slots_per_trajectory": 12}))
    out = tmp_path / "d.bin"
    assert main(["gen-data", "--config", str(cfg), "--feature-dim", "5", "--out", str(out), "--quiet"]) == 0
    c = read_dataset_header(out)["config"]
    assert (c["num_trajectories"], c["feature_dim"]) == (3, 5)


def test_full_command_chain(files, capsys):
    tmp, data, teacher = files
    gen, student = tmp / "g.ckpt", tmp / "s.ckpt"
    data.rename(tmp / "hidden.bin")
    assert main(["train-generator", "--teacher", str(teacher), "--out", str(gen), "--noise-dim", "12", *FAST]) == 0
    assert main(["distill-df", "--teacher", str(teacher), "--generator", str(gen), "--out", str(student),
                 "--hidden-dim", "4", *FAST]) == 0
    data = (tmp / "hidden.bin").rename(data)
    for extra in ([], ["--student-loss", "mse"]):
        assert main(["distill-kd", "--teacher", str(teacher), "--data", str(data), "--out", str(tmp / "k.ckpt"),
                     *extra, *FAST]) == 0
    assert main(["train-scratch", "--data", str(data), "--out", str(tmp / "sc.ckpt"), *FAST]) == 0
    capsys.readouterr()
    assert main(["eval", "--checkpoint", str(student), "--data", str(data)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert len(report["top1"]) == 4
    assert main(["inspect", str(data)]) == 0
    assert "config_hash" in capsys.readouterr().out
    assert main(["inspect", str(teacher)]) == 0
    assert '"kind": "teacher"' in capsys.readouterr().out
    assert (tmp / "s.ckpt.log.jsonl").exists()


def test_eval_reports_config_mismatch(files, tmp_path, capsys):
    _, _, teacher = files
    other = tmp_path / "o.bin"
    assert main(["gen-data", "--out", str(other), "--num-beams", "32", "--quiet", *TINY]) == 0
    capsys.readouterr()
    assert main(["eval", "--checkpoint", str(teacher), "--data", str(other)]) == 1
    err = capsys.readouterr().err.strip()
    assert err.startswith("dfkd-error: ConfigMismatchError:") and "\n" not in err


def test_missing_file_exit_one(tmp_path, capsys):
    assert main(["eval", "--checkpoint", str(tmp_path / "x"), "--data", str(tmp_path / "y")]) == 1
    assert capsys.readouterr().err.startswith("dfkd-error: FileNotFoundError")


def test_unknown_subcommand_and_flag_exit_two():
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        main(["gen-data", "--warp-speed", "9"])
    assert e.value.code == 2


def test_bad_config_keys_exit_one(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"warp": 1}))
    assert main(["gen-data", "--config", str(cfg), "--out", str(tmp_path / "d.bin"), "--quiet"]) == 1


def test_experiment_command(tmp_path):
    m = {"seed": 0, "scenario": {"num_trajectories": 8, "slots_per_trajectory": 12, "feature_dim": 5},
         "teacher": {"epochs": 1, "hidden_dim": 4},
         "arms": [{"name": "scratch", "pipeline": "scratch", "epochs": 1, "hidden_dim": 3},
                  {"name": "kd", "pipeline": "kd", "epochs": 1, "hidden_dim": 3}]}
    path = tmp_path / "m.json"
    path.write_text(json.dumps(m))
    assert main(["experiment", "--manifest", str(path), "--out", str(tmp_path / "o"), "--quiet"]) == 0
    assert (tmp_path / "o" / "comparison.csv").exists()
    m["arms"].append({"name": "kd", "pipeline": "kd"})
    path.write_text(json.dumps(m))
    assert main(["experiment", "--manifest", str(path), "--quiet"]) == 1
