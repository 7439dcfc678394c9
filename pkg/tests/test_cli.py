import json
import subprocess
import sys

import pytest

from ffinet.cli import main

TINY = ["--set", "model.hidden_dim=8", "--set", "train.epochs=1", "--set", "train.lr_drop_epoch=1",
        "--set", "train.batch_size=4"]


def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli") / "data"
    assert main(["gen-data", "--out", str(root), "--n", "24", "--seed", "4", "--split", "0.5,0.25,0.25"]) == 0
    assert all(any((root / s).iterdir()) for s in ("train", "val", "test"))
    return root


@pytest.fixture(scope="module")
def run(data, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "run"
    assert main(["train", "--data", str(data), "--out", str(out), "--set", "loss.gamma=0.2"] + TINY) == 0
    return out


class TestGenData:
    def test_idempotent(self, tmp_path):
        for name in ("a", "b"):
            assert main(["gen-data", "--out", str(tmp_path / name), "--n", "20", "--seed", "7"]) == 0
        a, b = _tree(tmp_path / "a"), _tree(tmp_path / "b")
        assert a == b and len(a) == 20
        assert {k.split("/")[0] for k in a} <= {"train", "val", "test"}

    def test_mix(self, tmp_path):
        assert main(["gen-data", "--out", str(tmp_path), "--n", "6", "--mix", "follow=1.0"]) == 0
        assert all(k.split("/")[1].startswith("follow-") for k in _tree(tmp_path))

    def test_zero_scenes_warns(self, tmp_path, capsys):
        with pytest.warns(UserWarning, match="empty splits"):
            assert main(["gen-data", "--out", str(tmp_path), "--n", "0"]) == 0
        assert json.loads(capsys.readouterr().out)["counts"] == {"train": 0, "val": 0, "test": 0}

    def test_refuses_non_empty_without_force(self, tmp_path, capsys):
        (tmp_path / "junk").write_text("x")
        assert main(["gen-data", "--out", str(tmp_path), "--n", "2"]) == 2
        assert "not empty" in capsys.readouterr().err
        assert main(["gen-data", "--out", str(tmp_path), "--n", "2", "--force"]) == 0

    def test_bad_mix_is_usage_error(self, tmp_path):
        assert main(["gen-data", "--out", str(tmp_path), "--mix", "flying=1.0"]) == 1

    def test_env_default_root(self, tmp_path, monkeypatch):
        monkeypatch.setenv("FFINET_DATA_DIR", str(tmp_path / "env"))
        assert main(["gen-data", "--n", "3"]) == 0
        assert len(_tree(tmp_path / "env")) == 3


class TestTrainEval:
    def test_manifest_records_override(self, run):
        manifest = json.loads((run / "final" / "manifest.json").read_text())
        assert manifest["config"]["loss.gamma"] == 0.2
        assert (run / "train_log.jsonl").read_text().count("\n") == 1

    def test_eval_writes_report(self, run, data, tmp_path):
        out = tmp_path / "report.json"
        assert main(["eval", "--checkpoint", str(run / "final"), "--data", str(data), "--out", str(out)]) == 0
        report = json.loads(out.read_text())
        assert report["n_scenes"] == len(list((data / "test").glob("*.json"))) and "brier_minFDE" in report

    def test_missing_checkpoint_names_path(self, data, tmp_path, capsys):
        missing = tmp_path / "nowhere"
        assert main(["eval", "--checkpoint", str(missing), "--data", str(data)]) == 2
        err = capsys.readouterr().err.strip()
        assert str(missing) in err and len(err.splitlines()) == 1

    def test_missing_dataset_names_path(self, run, tmp_path, capsys):
        missing = tmp_path / "nodata"
        assert main(["eval", "--checkpoint", str(run / "final"), "--data", str(missing)]) == 2
        assert str(missing) in capsys.readouterr().err

    def test_predict_then_plot(self, run, data, tmp_path):
        preds = tmp_path / "p.json"
        assert main(["predict", "--checkpoint", str(run / "final"), "--data", str(data), "--out", str(preds)]) == 0
        scene = sorted((data / "test").glob("*.json"))[0]
        png = tmp_path / "s.png"
        assert main(["plot", "--scene", str(scene), "--predictions", str(preds), "--out", str(png)]) == 0
        assert png.stat().st_size > 0
        assert main(["plot", "--scene", str(scene), "--predictions", str(preds), "--out",
                     str(tmp_path / "s.xyz")]) == 2

    def test_unknown_key_is_usage_error(self, data, tmp_path, capsys):
        assert main(["train", "--data", str(data), "--out", str(tmp_path), "--set", "loss.nope=1"]) == 1
        assert "unknown config key" in capsys.readouterr().err


class TestOther:
    def test_ablate_table5_shape(self, data, tmp_path):
        out = tmp_path / "t5.txt"
        assert main(["ablate", "--preset", "table5", "--data", str(data), "--out", str(out)] + TINY) == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 1 + 5 + 1 and lines[-1].startswith("direction check")
        assert len(json.loads(out.with_suffix(".json").read_text())["rows"]) == 5

    def test_model_info_json(self, capsys):
        assert main(["model-info", "--json", "--set", "model.hidden_dim=16"]) == 0
        info = json.loads(capsys.readouterr().out)
        assert info["total_params"] == sum(m["params"] for m in info["modules"].values())

    def test_usage_errors_exit_1(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 1
        with pytest.raises(SystemExit) as exc:
            main(["train"])
        assert exc.value.code == 1

    def test_module_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "ffinet", "model-info", "--set", "model.hidden_dim=8"],
                              capture_output=True, text=True)
        assert proc.returncode == 0 and "total" in proc.stdout
