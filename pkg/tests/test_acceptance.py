"""Ten release gates over the whole artifact, one line of output each.

Run as `python3 -m pytest tests/test_acceptance.py -s` to see the lines;
each prints [PASS] or fails its assertion. The convergence gate performs
the full reference training run (about six minutes on one CPU core) and
the ablation gate trains every toggle row briefly; everything else
finishes in seconds.
"""

import csv
import math
import time
from pathlib import Path

import numpy as np
import pytest

import gradsuite
from reference import assd_reference, random_blob_mask

from hansnet import cli
from hansnet.checkpoint import load_checkpoint, save_checkpoint
from hansnet.config import load_config
from hansnet.data import build_slice_splits
from hansnet.hvol import load_hvol, save_hvol
from hansnet.hyperbolic import exp_map
from hansnet.metrics import assd, dice, iou, voe, volume_stats
from hansnet.model import HansNet
from hansnet.preprocess import window_normalize
from hansnet.rng import generator
from hansnet.tensor import Tensor
from hansnet.train import train_loop
from hansnet.uncertainty import UncertaintyHead, mc_predict

ROOT = Path(__file__).resolve().parent.parent
DESK_CFG = str(ROOT / "configs" / "desk.cfg")


def gate(number, name, detail):
    print(f"[PASS] {number:>2}. {name}: {detail}", flush=True)


@pytest.fixture(scope="session")
def desk_run():
    """The reference training run shared by the convergence gates."""
    cfg = load_config(DESK_CFG)
    counts = (cfg.data.train_slices, cfg.data.val_slices, cfg.data.test_slices)
    t0 = time.monotonic()
    train, val, _ = build_slice_splits(cfg.train.seed, counts, cfg.phantom)
    model = HansNet(cfg.model, master_seed=cfg.train.seed)
    history = train_loop(model, train, val, cfg.train)
    return {"history": history, "wall": time.monotonic() - t0, "cfg": cfg}


class TestGates:
    def test_01_gradient_suite(self):
        cases = gradsuite.OP_CASES + gradsuite.MODULE_CASES
        t0 = time.monotonic()
        worst, worst_name = 0.0, ""
        for name, builder in cases:
            for seed in range(20):
                err = gradsuite.run_case(builder, seed)
                if err > worst:
                    worst, worst_name = err, f"{name}[seed {seed}]"
        elapsed = time.monotonic() - t0
        assert worst < 1e-4, f"{worst_name}: relative error {worst:.3e}"
        assert elapsed < 60.0, f"suite took {elapsed:.1f}s"
        gate(1, "gradient suite",
             f"{len(cases)} cases x 20 seeds, worst {worst:.1e} ({worst_name}), {elapsed:.1f}s")

    def test_02_hyperbolic_invariants(self):
        rng = np.random.default_rng(0)
        for kappa in (-0.25, -1.0, -4.0):
            radius = 1.0 / math.sqrt(-kappa)
            v = rng.normal(size=(64, 8)) * rng.uniform(0.1, 30.0, size=(64, 1))
            y = exp_map(Tensor(v), kappa=kappa).data
            norms = np.linalg.norm(y, axis=-1)
            assert (norms < radius).all(), f"kappa={kappa}: point escaped the ball"
            cos = np.sum(y * v, axis=-1) / (
                np.linalg.norm(v, axis=-1) * np.maximum(norms, 1e-300)
            )
            assert np.allclose(cos, 1.0, atol=1e-9), "direction not preserved"
        unit = np.zeros((1, 4))
        unit[0, 0] = 1.0
        got = float(np.linalg.norm(exp_map(Tensor(unit), kappa=-1.0).data))
        want = math.tanh(1.0)
        assert abs(got - want) < 1e-6
        gate(2, "hyperbolic map",
             f"containment + direction on 3 curvatures, |exp(e1)| = {got:.9f} vs tanh(1)")

    def test_03_metric_oracles(self):
        rng = np.random.default_rng(7)
        worst = 0.0
        checked = 0
        while checked < 100:
            shape = tuple(int(rng.integers(4, hi + 1)) for hi in (16, 16, 4))
            p = random_blob_mask(rng, shape)
            g = random_blob_mask(rng, shape)
            if not p.any() or not g.any():
                continue
            checked += 1
            ni, np_, ng = int((p & g).sum()), int(p.sum()), int(g.sum())
            nu = int((p | g).sum())
            d, j = dice(p, g), iou(p, g)
            worst = max(
                worst,
                abs(d - 2.0 * ni / (np_ + ng)),
                abs(j - ni / nu),
                abs(voe(p, g) - (1.0 - ni / nu)),
                abs(d - 2.0 * j / (1.0 + j)),
            )
            spacing = tuple(rng.uniform(0.5, 3.0, size=3))
            a, a_ref = assd(p, g, spacing), assd_reference(p, g, spacing)
            worst = max(worst, abs(a - a_ref))
        assert worst < 1e-9, f"metric mismatch {worst:.3e}"
        gate(3, "metric oracles", f"100 mask pairs, worst |diff| {worst:.1e}")

    def test_04_stochastic_head_contracts(self):
        x = Tensor(np.random.default_rng(1).normal(size=(2, 8, 6, 6)) * 0.3)

        head0 = UncertaintyHead(8, generator(3, 0), p=0.0)
        _, var = mc_predict(head0, x, passes=8, rng=generator(3, 1))
        assert (var == 0.0).all(), "no dropout must mean no variance"

        head = UncertaintyHead(8, generator(3, 2), p=0.3)
        _, var1 = mc_predict(head, x, passes=1, rng=generator(3, 3))
        assert (var1 == 0.0).all(), "a single pass has no spread"

        mean, var, samples = mc_predict(
            head, x, passes=16, rng=generator(3, 4), return_samples=True
        )
        assert var.max() <= 0.25, "sigmoid outputs bound variance by 1/4"
        m2, v2 = mc_predict(head, x, passes=16, rng=generator(3, 4))
        assert np.array_equal(mean, m2) and np.array_equal(var, v2)
        uncentered = (samples**2).mean(axis=0) - mean**2
        two_form = float(np.abs(var - uncentered).max())
        assert two_form <= 1e-12
        gate(4, "uncertainty contracts",
             f"p=0 and T=1 exact zeros, max var {var.max():.4f} <= 0.25, "
             f"formulations agree to {two_form:.1e}")

    def test_05_phantom_convergence(self, desk_run):
        history, wall = desk_run["history"], desk_run["wall"]
        losses = [h["loss"] for h in history]
        final = history[-1]
        assert all(losses[i + 1] < losses[i] for i in range(4)), (
            f"first five epoch losses not strictly decreasing: {losses[:5]}"
        )
        assert final["val_dice_liver"] >= 0.90, f"organ {final['val_dice_liver']:.4f}"
        assert final["val_dice_tumor"] >= 0.75, f"lesion {final['val_dice_tumor']:.4f}"
        assert wall <= 900.0, f"run took {wall:.0f}s"
        gate(5, "phantom convergence",
             f"organ {final['val_dice_liver']:.4f} lesion {final['val_dice_tumor']:.4f} "
             f"after {len(history)} epochs in {wall / 60:.1f} min")

    def test_06_learning_hierarchy(self, desk_run):
        history = desk_run["history"]
        for h in history:
            assert h["val_dice_liver"] >= h["val_dice_tumor"], (
                f"epoch {h['epoch']}: organ {h['val_dice_liver']:.4f} "
                f"< lesion {h['val_dice_tumor']:.4f}"
            )
        margins = [h["val_dice_liver"] - h["val_dice_tumor"] for h in history]
        gate(6, "learning hierarchy",
             f"organ >= lesion at all {len(history)} epochs "
             f"(min margin {min(margins):.4f})")

    def test_07_ablation_rows(self, tmp_path):
        out = tmp_path / "ablation"
        code = cli.main([
            "ablate",
            "--config", DESK_CFG,
            "--set", "data.train_slices=40",
            "--set", "data.val_slices=16",
            "--set", "data.test_slices=8",
            "--out", str(out),
        ])
        assert code == 0
        with open(out / "ablation.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert [r["row"] for r in rows] == ["A1", "A2", "A3", "A4", "A5", "A6", "A7"]
        required = {"row", "hc", "wdm", "ata", "spm", "inr", "ue", "params",
                    "dice_train", "dice_val", "iou_train", "iou_val",
                    "assd_train", "assd_val", "voe_train", "voe_val"}
        for row in rows:
            assert required <= set(row), f"missing columns in {row['row']}"
            assert row["dice_val"] and 0.0 <= float(row["dice_val"]) <= 1.0
        gate(7, "ablation rows", "7 toggle rows trained 3 epochs, schema-complete CSV")

    def test_08_volume_statistics(self):
        rng = np.random.default_rng(5)
        gt_ml = sorted(rng.uniform(50.0, 2000.0, size=20))
        exact = volume_stats(list(gt_ml), list(gt_ml))
        assert exact["pearson"] == 1.0 and exact["spearman"] == 1.0
        assert exact["mae_ml"] == 0.0 and exact["rvd_percent"] == 0.0
        scaled = volume_stats([v * 1.02 for v in gt_ml], list(gt_ml))
        assert abs(scaled["pearson"] - 1.0) <= 1e-12
        assert abs(scaled["rvd_percent"] - 2.0) <= 1e-9
        gate(8, "volume statistics",
             f"identity exact; +2% scale: pearson err "
             f"{abs(scaled['pearson'] - 1.0):.1e}, rvd {scaled['rvd_percent']:.10f}%")

    def test_09_window_anchors(self):
        got = window_normalize(np.array([-200.0, 100.0, 400.0]))
        assert got.tolist() == [0.0, 0.5, 1.0]
        clamped = window_normalize(np.array([-1000.0, 2000.0]))
        assert clamped.tolist() == [0.0, 1.0]
        gate(9, "window anchors", "-200 -> 0, 100 -> 0.5, 400 -> 1 exactly, clamped outside")

    def test_10_bit_exactness(self, tmp_path):
        rng = np.random.default_rng(9)
        vol = rng.normal(size=(3, 8, 8)).astype(np.float32)
        a, b = tmp_path / "a.hvol", tmp_path / "b.hvol"
        save_hvol(str(a), vol, (5.0, 1.0, 1.0))
        loaded, spacing = load_hvol(str(a))
        save_hvol(str(b), loaded, spacing)
        assert a.read_bytes() == b.read_bytes()

        model = HansNet(load_config(DESK_CFG).model, master_seed=3)
        ca, cb = tmp_path / "a.hnsw", tmp_path / "b.hnsw"
        save_checkpoint(str(ca), model.state())
        save_checkpoint(str(cb), load_checkpoint(str(ca)))
        assert ca.read_bytes() == cb.read_bytes()

        sets = ["--set", "phantom.size=32", "--set", "phantom.min_tumor_radius=3",
                "--set", "phantom.max_tumor_radius=6", "--set", "data.volumes=2",
                "--set", "data.train_slices=8", "--set", "data.val_slices=4",
                "--set", "data.test_slices=4", "--set", "train.epochs=1",
                "--set", "train.batch_size=4", "--set", "model.base_channels=8",
                "--set", "model.pe_levels=3", "--set", "model.inr_hidden=16",
                "--set", "model.mc_passes=4"]
        for i in (1, 2):
            assert cli.main(["phantom-gen", *sets, "--out", str(tmp_path / f"v{i}")]) == 0
            assert cli.main(["train", *sets, "--out", str(tmp_path / f"t{i}")]) == 0
        assert (tmp_path / "v1" / "vol_000_image.hvol").read_bytes() == (
            tmp_path / "v2" / "vol_000_image.hvol"
        ).read_bytes()
        assert (tmp_path / "t1" / "model.hnsw").read_bytes() == (
            tmp_path / "t2" / "model.hnsw"
        ).read_bytes()
        assert (tmp_path / "t1" / "train_log.jsonl").read_bytes() == (
            tmp_path / "t2" / "train_log.jsonl"
        ).read_bytes()
        gate(10, "bit exactness",
             "volume + checkpoint round-trips and seed-fixed runs byte-identical")
