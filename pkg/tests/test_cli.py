import csv
import json
import os

import numpy as np
import pytest

from hansnet import cli
from hansnet.checkpoint import load_checkpoint
from hansnet.config import load_config
from hansnet.hvol import load_hvol
from hansnet.model import HansNet

TINY = """
phantom.size = 32
phantom.min_depth = 4
phantom.max_depth = 6
phantom.min_tumor_radius = 3.0
phantom.max_tumor_radius = 6.0
data.volumes = 2
data.eval_volumes = 2
data.train_slices = 16
data.val_slices = 8
data.test_slices = 4
train.epochs = 1
train.batch_size = 4
model.base_channels = 8
model.pe_levels = 3
model.inr_hidden = 16
model.mc_passes = 4
ablate.epochs = 1
"""


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """One tiny config, volume set, and trained checkpoint for the module."""
    root = tmp_path_factory.mktemp("cli")
    cfg_path = root / "tiny.cfg"
    cfg_path.write_text(TINY)
    args = ["--config", str(cfg_path)]
    assert cli.main(["phantom-gen", *args, "--out", str(root / "vols")]) == 0
    assert cli.main(["train", *args, "--out", str(root / "run")]) == 0
    return {"root": root, "cfg": str(cfg_path), "args": args}


class TestParser:
    def test_help_exits_zero(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["--help"])
        assert exc.value.code == 0

    @pytest.mark.parametrize(
        "command, flags",
        [
            ("phantom-gen", ["--config", "--set", "--out", "--seed"]),
            ("train", ["--config", "--set", "--out", "--seed"]),
            ("eval", ["--pred", "--gt", "--checkpoint"]),
            ("predict", ["--checkpoint", "--image"]),
            ("uncertainty", ["--checkpoint", "--image"]),
            ("ablate", ["--jobs"]),
        ],
    )
    def test_subcommand_help_documents_flags(self, command, flags, capsys):
        with pytest.raises(SystemExit):
            cli.main([command, "--help"])
        text = capsys.readouterr().out
        for flag in flags:
            assert flag in text

    def test_unknown_subcommand_is_config_error(self):
        assert cli.main(["frobnicate"]) == 1

    def test_unknown_flag_is_config_error(self):
        assert cli.main(["train", "--warp", "9"]) == 1

    def test_missing_required_flag_is_config_error(self):
        assert cli.main(["predict", "--image", "x.hvol"]) == 1


class TestExitCodes:
    def test_invalid_config_value(self, workdir):
        out = str(workdir["root"] / "x1")
        assert cli.main(["train", "--set", "train.lr=-1", "--out", out]) == 1

    def test_missing_input_file(self, workdir):
        out = str(workdir["root"] / "x2")
        code = cli.main(
            ["eval", "--pred", "no.hvol", "--gt", "no.hvol", "--out", out]
        )
        assert code == 3

    def test_bad_log_level(self, workdir, monkeypatch):
        monkeypatch.setenv("HANSNET_LOG", "chatty")
        assert cli.main(["phantom-gen", "--out", str(workdir["root"] / "x3")]) == 1

    def test_eval_needs_some_input(self, workdir):
        out = str(workdir["root"] / "x4")
        assert cli.main(["eval", *workdir["args"], "--out", out]) == 1

    def test_eval_rejects_half_a_pair(self, workdir):
        out = str(workdir["root"] / "x5")
        pred = str(workdir["root"] / "vols" / "vol_000_labels.hvol")
        assert cli.main(["eval", *workdir["args"], "--pred", pred, "--out", out]) == 1


class TestPhantomGen:
    def test_outputs_and_manifest(self, workdir):
        vols = workdir["root"] / "vols"
        manifest = json.loads((vols / "manifest.json").read_text())
        assert manifest["count"] == 2
        for entry in manifest["volumes"]:
            image, spacing = load_hvol(str(vols / entry["image"]))
            labels, sp2 = load_hvol(str(vols / entry["labels"]))
            assert image.shape == labels.shape == tuple(entry["shape"])
            assert list(spacing) == entry["spacing"] and spacing == sp2
            assert image.dtype == np.float32 and labels.dtype == np.uint8
            assert entry["lesion_voxels"] == int((labels == 2).sum())

    def test_seed_flag_changes_volumes(self, workdir):
        outdir = workdir["root"] / "vols_s7"
        assert cli.main(
            ["phantom-gen", *workdir["args"], "--seed", "7", "--out", str(outdir)]
        ) == 0
        a, _ = load_hvol(str(workdir["root"] / "vols" / "vol_000_labels.hvol"))
        b, _ = load_hvol(str(outdir / "vol_000_labels.hvol"))
        assert a.shape != b.shape or (a != b).any()

    def test_rerun_byte_identical(self, workdir):
        outdir = workdir["root"] / "vols_again"
        assert cli.main(["phantom-gen", *workdir["args"], "--out", str(outdir)]) == 0
        for name in ("vol_000_image.hvol", "vol_001_labels.hvol", "manifest.json"):
            first = (workdir["root"] / "vols" / name).read_bytes()
            again = (outdir / name).read_bytes()
            assert first == again


class TestTrain:
    def test_outputs(self, workdir):
        run = workdir["root"] / "run"
        lines = (run / "train_log.jsonl").read_text().splitlines()
        assert len(lines) == 1
        record = json.loads(lines[0])
        assert record["epoch"] == 1
        assert {"loss", "val_dice_liver", "val_dice_tumor"} <= set(record)
        assert (run / "model.hnsw").exists()

    def test_zero_epochs_saves_fresh_init(self, workdir):
        out = workdir["root"] / "fresh"
        code = cli.main(
            ["train", *workdir["args"], "--set", "train.epochs=0", "--out", str(out)]
        )
        assert code == 0
        assert (out / "train_log.jsonl").read_text() == ""
        saved = load_checkpoint(str(out / "model.hnsw"))
        cfg = load_config(workdir["cfg"])
        reference = HansNet(cfg.model, master_seed=cfg.train.seed).state()
        assert set(saved) == set(reference)
        for name, tensor in reference.items():
            np.testing.assert_array_equal(saved[name], tensor.data)

    def test_rerun_byte_identical(self, workdir):
        out = workdir["root"] / "run_again"
        assert cli.main(["train", *workdir["args"], "--out", str(out)]) == 0
        assert (out / "model.hnsw").read_bytes() == (
            workdir["root"] / "run" / "model.hnsw"
        ).read_bytes()
        assert (out / "train_log.jsonl").read_bytes() == (
            workdir["root"] / "run" / "train_log.jsonl"
        ).read_bytes()


class TestEval:
    def test_perfect_prediction_scores_one(self, workdir):
        out = workdir["root"] / "eval_self"
        gt = str(workdir["root"] / "vols" / "vol_001_labels.hvol")
        code = cli.main(
            ["eval", *workdir["args"], "--pred", gt, "--gt", gt, "--out", str(out)]
        )
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["cases"] == 1
        assert report["per_class"]["organ"]["dice"] == 1.0
        assert report["per_class"]["organ"]["voe"] == 0.0
        assert (out / "report.txt").read_text().startswith("cases: 1")

    def test_shape_mismatch_rejected(self, workdir):
        small = workdir["root"] / "vols" / "vol_000_labels.hvol"
        other = workdir["root"] / "vols" / "vol_001_labels.hvol"
        a, _ = load_hvol(str(small))
        b, _ = load_hvol(str(other))
        if a.shape == b.shape:
            pytest.skip("phantom depths happened to match")
        out = workdir["root"] / "eval_bad"
        code = cli.main(
            ["eval", *workdir["args"], "--pred", str(small), "--gt", str(other), "--out", str(out)]
        )
        assert code == 1

    def test_checkpoint_mode_writes_report(self, workdir):
        out = workdir["root"] / "eval_ck"
        ckpt = str(workdir["root"] / "run" / "model.hnsw")
        code = cli.main(
            ["eval", *workdir["args"], "--checkpoint", ckpt, "--out", str(out)]
        )
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["cases"] == 2
        assert set(report["volumes"]) == {"organ", "lesion"}
        assert len(report["volumes"]["organ"]["gt_ml"]) == 2


class TestPredictUncertainty:
    def test_predict_outputs(self, workdir):
        out = workdir["root"] / "pred"
        code = cli.main(
            [
                "predict", *workdir["args"],
                "--checkpoint", str(workdir["root"] / "run" / "model.hnsw"),
                "--image", str(workdir["root"] / "vols" / "vol_000_image.hvol"),
                "--out", str(out),
            ]
        )
        assert code == 0
        labels, _ = load_hvol(str(out / "labels.hvol"))
        image, _ = load_hvol(str(workdir["root"] / "vols" / "vol_000_image.hvol"))
        assert labels.shape == image.shape
        assert set(np.unique(labels)) <= {0, 1, 2}
        pngs = sorted(p for p in os.listdir(out) if p.endswith(".png"))
        assert len(pngs) == labels.shape[0]

    def test_uncertainty_outputs(self, workdir):
        out = workdir["root"] / "unc"
        code = cli.main(
            [
                "uncertainty", *workdir["args"],
                "--checkpoint", str(workdir["root"] / "run" / "model.hnsw"),
                "--image", str(workdir["root"] / "vols" / "vol_000_image.hvol"),
                "--out", str(out),
            ]
        )
        assert code == 0
        for name in ("mean_organ", "mean_lesion", "var_organ", "var_lesion"):
            vol, _ = load_hvol(str(out / f"{name}.hvol"))
            assert vol.dtype == np.float32
            assert (vol >= 0).all()
        var, _ = load_hvol(str(out / "var_organ.hvol"))
        assert float(var.max()) <= 0.25 + 1e-6
        summary = json.loads((out / "summary.json").read_text())
        assert set(summary["mean_foreground_std"]) == {"organ", "lesion"}


class TestAblate:
    def test_csv_schema_and_parallel_identity(self, workdir):
        out = workdir["root"] / "abl"
        assert cli.main(["ablate", *workdir["args"], "--out", str(out)]) == 0
        with open(out / "ablation.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert [r["row"] for r in rows] == ["A1", "A2", "A3", "A4", "A5", "A6", "A7"]
        toggles = ["hc", "wdm", "ata", "spm", "inr", "ue"]
        for i, row in enumerate(rows):
            flags = [int(row[t]) for t in toggles]
            assert flags == [1] * i + [0] * (6 - i)
            assert int(row["params"]) > 0
            for key in ("dice_train", "dice_val", "iou_train", "iou_val",
                        "voe_train", "voe_val"):
                assert 0.0 <= float(row[key]) <= 1.0
            for key in ("assd_train", "assd_val"):
                # surface distance is unbounded but never negative; the
                # cell is empty when no slice had both surfaces
                if row[key]:
                    assert float(row[key]) >= 0.0

        out2 = workdir["root"] / "abl_jobs"
        assert cli.main(["ablate", *workdir["args"], "--jobs", "3", "--out", str(out2)]) == 0
        assert (out / "ablation.csv").read_bytes() == (out2 / "ablation.csv").read_bytes()

    def test_bad_jobs_rejected(self, workdir):
        assert cli.main(["ablate", *workdir["args"], "--jobs", "0", "--out", "x"]) == 1
