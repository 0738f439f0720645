import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from heatlens.cli import UsageError, main, parse_classes, parse_taus
from heatlens.errors import DataError
from heatlens.netgraph import Dense, Flatten, Network, Sigmoid, save_model
from heatlens.segmentation import write_pgm


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Tiny dataset plus a two-epoch model, shared by the command tests."""
    root = tmp_path_factory.mktemp("cli")
    assert main(["gen-data", "--out", str(root / "data"), "--n", "12", "--size", "16", "--seed", "4", "--test-count", "4"]) == 0
    args = ["train", "--data", str(root / "data"), "--out", str(root / "model"), "--epochs", "2", "--channels", "2,2", "--seed", "1"]
    assert main(args) == 0
    return root


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def mask_fixture(root, gts, preds):
    """A hand-made data dir with one class, plus predicted masks for it."""
    data, pred = root / "data", root / "pred"
    for d in (data / "images", data / "masks", pred):
        d.mkdir(parents=True)
    ids = [f"m{i}" for i in range(len(gts))]
    for iid, gt, p in zip(ids, gts, preds):
        write_pgm(data / "images" / f"{iid}.pgm", np.zeros((2, 2), dtype=np.uint8))
        write_pgm(data / "masks" / f"{iid}_c0.pgm", np.array(gt, dtype=np.uint8) * 255)
        write_pgm(pred / f"{iid}_c0.pgm", np.array(p, dtype=np.uint8) * 255)
    (data / "labels.csv").write_text("instance_id,blob\n" + "".join(f"{i},1\n" for i in ids))
    (data / "manifest.csv").write_text("instance_id,split,image,mask\n" + "".join(f"{i},test,images/{i}.pgm,masks/{i}_c0.pgm\n" for i in ids))
    return data, pred


def evaluate(root, data, pred, *extra):
    return main(["evaluate", "--pred", str(pred), "--data", str(data), "--out", str(root / "eval"), *extra])


class TestParsing:
    def test_tau_grid_forms(self):
        assert parse_taus(0.5, None) == (0.5,)
        assert parse_taus(0.5, "0.1,0.9") == (0.1, 0.9)
        assert parse_taus(0.5, "0:1:0.25") == (0.0, 0.25, 0.5, 0.75, 1.0)

    def test_bad_tau(self):
        with pytest.raises(UsageError):
            parse_taus(0.5, "0.2,1.7")

    def test_classes(self):
        assert parse_classes("positive", 4) == "positive"
        assert parse_classes("0,2", 4) == [0, 2]
        with pytest.raises(DataError, match="out of range"):
            parse_classes("4", 4)


class TestExitCodes:
    def test_no_subcommand(self, capsys):
        assert main([]) == 1

    def test_unknown_flag(self, capsys):
        assert main(["gen-data", "--out", "x", "--bogus"]) == 1

    def test_missing_data_dir(self, tmp_path, capsys):
        assert main(["train", "--data", str(tmp_path / "nope"), "--out", str(tmp_path / "m")]) == 2
        assert "does not exist" in capsys.readouterr().err

    def test_unknown_method(self, workspace, tmp_path, capsys):
        args = ["explain", "--model", str(workspace / "model" / "model.json"), "--data", str(workspace / "data"), "--out", str(tmp_path), "--methods", "gradcam,saliency"]
        assert main(args) == 1
        assert "saliency" in capsys.readouterr().err

    def test_class_out_of_range(self, workspace, tmp_path, capsys):
        args = ["explain", "--model", str(workspace / "model" / "model.json"), "--data", str(workspace / "data"), "--out", str(tmp_path), "--classes", "7"]
        assert main(args) == 2
        assert "out of range" in capsys.readouterr().err

    def test_numeric_failure(self, workspace, tmp_path, capsys):
        # zero first layer: LRP meets z = 0 under a Sigmoid, which epsilon = 0 cannot divide by
        layers = (Flatten(), Dense(np.zeros((3, 256))), Sigmoid(), Dense(np.ones((4, 3))))
        save_model(Network(layers, (1, 16, 16), 4), tmp_path / "zero.json")
        args = ["explain", "--model", str(tmp_path / "zero.json"), "--data", str(workspace / "data"), "--out", str(tmp_path / "x"),
                "--methods", "lrp", "--epsilon", "0", "--classes", "0", "--instances", "1"]
        assert main(args) == 3
        index = read_csv(tmp_path / "x" / "index.csv")
        assert index[0]["status"] == "error:numeric"
        assert "epsilon > 0" in (tmp_path / "x" / index[0]["instance_id"] / "lrp_c0.error.txt").read_text()

    def test_console_script_version(self):
        out = subprocess.run([sys.executable, "-m", "heatlens.cli", "--version"], capture_output=True, text=True)
        assert out.returncode == 0 and "heatlens" in out.stdout


class TestGenDataAndTrain:
    def test_layout(self, workspace):
        data = workspace / "data"
        rows = read_csv(data / "manifest.csv")
        assert len(rows) == 12 and sum(r["split"] == "test" for r in rows) == 4
        assert len(list((data / "images").glob("*.pgm"))) == 12
        labels = read_csv(data / "labels.csv")
        assert list(labels[0]) == ["instance_id", "top_left", "top_right", "bottom_left", "bottom_right"]
        assert (data / "provenance.json").is_file()

    def test_gen_data_deterministic(self, workspace, tmp_path):
        assert main(["gen-data", "--out", str(tmp_path / "d"), "--n", "12", "--size", "16", "--seed", "4", "--test-count", "4"]) == 0
        for rel in ("labels.csv", "manifest.csv", "images/img00003.pgm", "masks/img00007_c1.pgm"):
            assert (tmp_path / "d" / rel).read_bytes() == (workspace / "data" / rel).read_bytes()

    def test_train_sidecar_and_rerun(self, workspace, tmp_path):
        side = json.loads((workspace / "model" / "train.json").read_text())
        assert side["seed"] == 1 and side["epochs"] == 2 and len(side["loss_history"]) == 2
        assert np.isfinite(side["final_loss"])
        args = ["train", "--data", str(workspace / "data"), "--out", str(tmp_path), "--epochs", "2", "--channels", "2,2", "--seed", "1"]
        assert main(args) == 0
        for name in ("model.json", "train.json"):
            assert (tmp_path / name).read_bytes() == (workspace / "model" / name).read_bytes()

    def test_predict(self, workspace, tmp_path):
        args = ["predict", "--model", str(workspace / "model" / "model.json"), "--data", str(workspace / "data"), "--out", str(tmp_path)]
        assert main(args) == 0
        assert len(read_csv(tmp_path / "predictions.csv")) == 4
        assert "per_class" in json.loads((tmp_path / "metrics.json").read_text())


class TestExplain:
    def test_two_instances_one_class(self, workspace, tmp_path):
        args = ["explain", "--model", str(workspace / "model" / "model.json"), "--data", str(workspace / "data"), "--out", str(tmp_path),
                "--methods", "gradcam,lrp", "--instances", "2", "--classes", "0", "--tau-grid", "0.3,0.6"]
        assert main(args) == 0
        index = read_csv(tmp_path / "index.csv")
        assert len(index) == 4 and {r["method"] for r in index} == {"gradcam", "lrp"}
        for r in index:
            d = tmp_path / r["instance_id"]
            assert (d / r["heatmap"]).is_file()
            assert (d / "gradcam_c0_tau0.3.pgm").is_file() and (d / "lrp_c0_tau0.6.pgm").is_file()
            meta = json.loads((d / f"{r['method']}_c0.json").read_text())
            assert meta["class_index"] == 0
        prov = json.loads((tmp_path / "provenance.json").read_text())
        assert prov["seed"] == 0 and prov["package_version"] and prov["flags"]["methods"] == "gradcam,lrp"

    def test_explain_then_evaluate(self, workspace, tmp_path):
        model, data = str(workspace / "model" / "model.json"), str(workspace / "data")
        assert main(["explain", "--model", model, "--data", data, "--out", str(tmp_path / "x"), "--methods", "gradcam", "--classes", "all"]) == 0
        assert main(["evaluate", "--pred", str(tmp_path / "x"), "--data", data, "--out", str(tmp_path / "e"), "--model", model]) == 0
        summary = json.loads((tmp_path / "e" / "iou_summary.json").read_text())
        assert summary["tau"] == 0.5 and summary["per_method"]["gradcam"]["count"] + summary["per_method"]["gradcam"]["degenerate"] == 16
        assert "prediction" in summary or "auroc" in json.dumps(summary)


class TestEvaluate:
    top = [[1, 1], [0, 0]]

    def test_mean_of_one_third_and_zero(self, tmp_path):
        data, pred = mask_fixture(tmp_path, [self.top] * 3, [self.top, [[1, 0], [1, 0]], [[0, 0], [1, 1]]])
        assert evaluate(tmp_path, data, pred) == 0
        summary = json.loads((tmp_path / "eval" / "iou_summary.json").read_text())
        assert summary["per_method"]["mask"]["mean"] == pytest.approx(4 / 9)
        ious = sorted(float(r["iou"]) for r in read_csv(tmp_path / "eval" / "iou_records.csv"))
        assert ious == pytest.approx([0.0, 1 / 3, 1.0])

    def test_identical_masks(self, tmp_path):
        data, pred = mask_fixture(tmp_path, [self.top, [[0, 1], [1, 1]]], [self.top, [[0, 1], [1, 1]]])
        assert evaluate(tmp_path, data, pred) == 0
        assert json.loads((tmp_path / "eval" / "iou_summary.json").read_text())["per_method"]["mask"]["mean"] == 1.0

    def test_both_empty_is_zero_and_degenerate(self, tmp_path):
        data, pred = mask_fixture(tmp_path, [[[0, 0], [0, 0]]], [[[0, 0], [0, 0]]])
        assert evaluate(tmp_path, data, pred) == 0
        (rec,) = read_csv(tmp_path / "eval" / "iou_records.csv")
        assert float(rec["iou"]) == 0.0 and rec["degenerate"] in ("1", "true", "True")

    def test_unmatched_ids_listed(self, tmp_path, capsys):
        data, pred = mask_fixture(tmp_path, [self.top], [self.top])
        write_pgm(pred / "stranger_c0.pgm", np.zeros((2, 2), dtype=np.uint8))
        assert evaluate(tmp_path, data, pred) == 2
        assert "stranger" in capsys.readouterr().err

    def test_tau_grid_one_summary_each(self, tmp_path):
        data, pred = mask_fixture(tmp_path, [self.top] * 2, [self.top, [[1, 0], [1, 0]]])
        assert evaluate(tmp_path, data, pred, "--tau-grid", "0.25,0.75") == 0
        for t in ("0.25", "0.75"):
            summary = json.loads((tmp_path / "eval" / f"iou_tau{t}_summary.json").read_text())
            assert summary["tau"] == float(t)
