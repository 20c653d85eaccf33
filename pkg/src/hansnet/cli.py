"""Command-line entry point.

One executable with subcommands covering the pipeline end to end:

    phantom-gen   synthetic volumes as HVOL pairs plus a manifest
    train         fit a model, writing a checkpoint and a metrics log
    eval          score a prediction against a reference, or a checkpoint
                  against freshly generated volumes
    predict       segment an image volume into a label HVOL plus PNGs
    uncertainty   per-voxel mean/variance maps plus PNG heatmaps
    ablate        train every component-toggle row and emit one CSV

Shared flags: --config FILE, repeatable --set key=value overrides,
--out DIR, --seed N (overrides train.seed). `ablate` adds --jobs N.
The HANSNET_LOG environment variable (error|info|debug) sets verbosity.
Exit codes: 0 success, 1 configuration or usage error, 2 numerical
failure, 3 I/O error. Fixed seed and inputs give byte-identical outputs.
"""

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np
from PIL import Image

from .checkpoint import load_checkpoint, save_checkpoint
from .config import load_config
from .data import batch_arrays, build_slice_splits, generate_volumes
from .errors import (
    ConfigError,
    ContractError,
    DimensionError,
    GenerationError,
    NumericalError,
)
from .hvol import load_hvol, save_hvol
from .metrics import assd, dice, iou, voe, volume_ml, volume_stats
from .model import HansNet, predicted_labels
from .preprocess import liver_mask, tumor_mask, window_normalize
from .rng import STREAM_SPLIT, derive_seed
from .tensor import Tensor
from .train import train_loop
from .uncertainty import foreground_uncertainty

log = logging.getLogger("hansnet.cli")

# cumulative component rows mirroring the ablation table
ABLATION_ROWS = [
    ("A1", ()),
    ("A2", ("use_hc",)),
    ("A3", ("use_hc", "use_wdm")),
    ("A4", ("use_hc", "use_wdm", "use_ata")),
    ("A5", ("use_hc", "use_wdm", "use_ata", "use_spm")),
    ("A6", ("use_hc", "use_wdm", "use_ata", "use_spm", "use_inr")),
    ("A7", ("use_hc", "use_wdm", "use_ata", "use_spm", "use_inr", "use_ue")),
]
_TOGGLES = ("use_hc", "use_wdm", "use_ata", "use_spm", "use_inr", "use_ue")


class _Parser(argparse.ArgumentParser):
    """Argument errors surface as ConfigError so they exit with code 1."""

    def error(self, message):
        raise ConfigError(message)


def _build_parser():
    top = _Parser(prog="hansnet", description=__doc__.splitlines()[0])
    sub = top.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def common(p, out=True):
        p.add_argument("--config", metavar="PATH", help="flat key = value config file")
        p.add_argument(
            "--set",
            metavar="KEY=VALUE",
            action="append",
            default=[],
            dest="sets",
            help="override one config key (repeatable)",
        )
        if out:
            p.add_argument("--out", metavar="DIR", default=".", help="output directory")
        p.add_argument("--seed", type=int, metavar="N", help="override train.seed")

    p = sub.add_parser("phantom-gen", help="generate synthetic volumes")
    common(p)
    p.set_defaults(func=cmd_phantom_gen)

    p = sub.add_parser("train", help="train a model on phantom slices")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score predictions or a checkpoint")
    common(p)
    p.add_argument("--pred", metavar="HVOL", help="predicted label volume")
    p.add_argument("--gt", metavar="HVOL", help="reference label volume")
    p.add_argument("--checkpoint", metavar="PATH", help="model to score on fresh volumes")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="segment an image volume")
    common(p)
    p.add_argument("--checkpoint", metavar="PATH", required=True)
    p.add_argument("--image", metavar="HVOL", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("uncertainty", help="export per-voxel uncertainty maps")
    common(p)
    p.add_argument("--checkpoint", metavar="PATH", required=True)
    p.add_argument("--image", metavar="HVOL", required=True)
    p.set_defaults(func=cmd_uncertainty)

    p = sub.add_parser("ablate", help="train every component-toggle row")
    common(p)
    p.add_argument("--jobs", type=int, metavar="N", default=1, help="parallel rows")
    p.set_defaults(func=cmd_ablate)

    return top


def _load(args):
    cfg = load_config(args.config, args.sets)
    if args.seed is not None:
        cfg.train = replace(cfg.train, seed=args.seed)
    return cfg


def _outdir(args):
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _save_png(path, array_u8):
    Image.fromarray(array_u8, mode="L").save(path)


# ---- phantom-gen ----------------------------------------------------------

def cmd_phantom_gen(args):
    cfg = _load(args)
    out = _outdir(args)
    vols = generate_volumes(cfg.train.seed, cfg.data.volumes, cfg.phantom)
    entries = []
    for i, (image, labels, spacing) in enumerate(vols):
        img_name = f"vol_{i:03d}_image.hvol"
        lab_name = f"vol_{i:03d}_labels.hvol"
        save_hvol(os.path.join(out, img_name), image, spacing)
        save_hvol(os.path.join(out, lab_name), labels, spacing)
        entries.append(
            {
                "index": i,
                "image": img_name,
                "labels": lab_name,
                "shape": list(labels.shape),
                "spacing": list(spacing),
                "lesion_voxels": int((labels == 2).sum()),
            }
        )
    manifest = {"seed": cfg.train.seed, "count": len(entries), "volumes": entries}
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    log.info("wrote %d volumes to %s", len(entries), out)
    return 0


# ---- train ----------------------------------------------------------------

def cmd_train(args):
    cfg = _load(args)
    out = _outdir(args)
    counts = (cfg.data.train_slices, cfg.data.val_slices, cfg.data.test_slices)
    train, val, _test = build_slice_splits(cfg.train.seed, counts, cfg.phantom)
    model = HansNet(cfg.model, master_seed=cfg.train.seed)
    train_loop(model, train, val, cfg.train, log_path=os.path.join(out, "train_log.jsonl"))
    save_checkpoint(os.path.join(out, "model.hnsw"), model.state())
    log.info("checkpoint written to %s", os.path.join(out, "model.hnsw"))
    return 0


# ---- eval -----------------------------------------------------------------

def _class_masks(labels):
    return {"organ": liver_mask(labels), "lesion": tumor_mask(labels)}


def _pair_scores(pred_labels_, gt_labels_, spacing):
    pm = _class_masks(pred_labels_)
    gm = _class_masks(gt_labels_)
    per_class = {}
    for name in ("organ", "lesion"):
        p, g = pm[name], gm[name]
        per_class[name] = {
            "dice": dice(p, g),
            "iou": iou(p, g),
            "voe": voe(p, g),
            "assd_mm": assd(p, g, spacing),
        }
    return per_class


def _mean_row(per_class):
    out = {}
    for key in ("dice", "iou", "voe", "assd_mm"):
        vals = [per_class[c][key] for c in per_class if per_class[c][key] is not None]
        out[key] = float(np.mean(vals)) if vals else None
    return out


def _report(pairs):
    """MetricsReport over (pred_labels, gt_labels, spacing) cases."""
    per_case = [_pair_scores(p, g, s) for p, g, s in pairs]
    per_class = {}
    for name in ("organ", "lesion"):
        per_class[name] = {}
        for key in ("dice", "iou", "voe", "assd_mm"):
            vals = [c[name][key] for c in per_case if c[name][key] is not None]
            per_class[name][key] = float(np.mean(vals)) if vals else None

    volumes = {}
    for name, mask_of in (("organ", liver_mask), ("lesion", tumor_mask)):
        gt_ml = [volume_ml(mask_of(g), s) for _, g, s in pairs]
        pred_ml = [volume_ml(mask_of(p), s) for p, _, s in pairs]
        stats = volume_stats(pred_ml, gt_ml)
        volumes[name] = {
            "gt_ml": gt_ml,
            "pred_ml": pred_ml,
            "mae_ml": stats["mae_ml"],
            "rvd_pct": stats["rvd_percent"],
            "pearson": stats["pearson"],
            "spearman": stats["spearman"],
        }
    return {"cases": len(per_case), "per_class": per_class, "mean": _mean_row(per_class), "volumes": volumes}


def _fmt(v, width=9):
    if v is None:
        return "-".rjust(width)
    return f"{v:.4f}".rjust(width)


def _report_text(report):
    lines = [f"cases: {report['cases']}"]
    lines.append(f"{'class':<8}{'dice':>9}{'iou':>9}{'voe':>9}{'assd_mm':>9}")
    for name in ("organ", "lesion"):
        row = report["per_class"][name]
        lines.append(
            f"{name:<8}{_fmt(row['dice'])}{_fmt(row['iou'])}"
            f"{_fmt(row['voe'])}{_fmt(row['assd_mm'])}"
        )
    m = report["mean"]
    lines.append(
        f"{'mean':<8}{_fmt(m['dice'])}{_fmt(m['iou'])}{_fmt(m['voe'])}{_fmt(m['assd_mm'])}"
    )
    lines.append("")
    lines.append(f"{'volumes':<8}{'mae_ml':>9}{'rvd_pct':>9}{'pearson':>9}{'spearman':>9}")
    for name in ("organ", "lesion"):
        v = report["volumes"][name]
        lines.append(
            f"{name:<8}{_fmt(v['mae_ml'])}{_fmt(v['rvd_pct'])}"
            f"{_fmt(v['pearson'])}{_fmt(v['spearman'])}"
        )
    return "\n".join(lines) + "\n"


def _predict_volume(model, image, mc_seed, batch=8):
    """Window, forward slice by slice, return (labels, mean, var) volumes."""
    if image.ndim != 3:
        raise DimensionError(f"expected a 3-D image volume, got shape {image.shape}")
    d, h, w = image.shape
    if h % 8 or w % 8:
        raise ConfigError(f"volume slices must have sides divisible by 8, got {h}x{w}")
    norm = window_normalize(image.astype(np.float64))
    means, vars_ = [], []
    for at in range(0, d, batch):
        x = Tensor(norm[at : at + batch, None, :, :])
        m, v = model.predict(x, master_seed=mc_seed)
        means.append(m)
        vars_.append(v)
    mean = np.concatenate(means)  # [D, 2, H, W]
    var = np.concatenate(vars_)
    labels = predicted_labels(mean)
    return labels, mean, var


def _load_model(cfg, checkpoint_path):
    model = HansNet(cfg.model, master_seed=cfg.train.seed)
    model.load_state(load_checkpoint(checkpoint_path))
    return model


def cmd_eval(args):
    cfg = _load(args)
    out = _outdir(args)
    if args.pred or args.gt:
        if not (args.pred and args.gt):
            raise ConfigError("eval needs both --pred and --gt, or --checkpoint")
        pred, sp_p = load_hvol(args.pred)
        gt, sp_g = load_hvol(args.gt)
        if pred.shape != gt.shape:
            raise ConfigError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
        if sp_p != sp_g:
            log.warning("spacing differs (%s vs %s); using reference", sp_p, sp_g)
        report = _report([(pred, gt, sp_g)])
    elif args.checkpoint:
        model = _load_model(cfg, args.checkpoint)
        eval_seed = derive_seed(cfg.train.seed, STREAM_SPLIT)
        vols = generate_volumes(eval_seed, cfg.data.eval_volumes, cfg.phantom)
        pairs = []
        for image, labels, spacing in vols:
            pred, _mean, _var = _predict_volume(model, image, cfg.train.seed)
            pairs.append((pred, labels, spacing))
        report = _report(pairs)
    else:
        raise ConfigError("eval needs --pred/--gt or --checkpoint")

    text = _report_text(report)
    with open(os.path.join(out, "report.json"), "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    with open(os.path.join(out, "report.txt"), "w") as fh:
        fh.write(text)
    sys.stdout.write(text)
    return 0


# ---- predict / uncertainty ------------------------------------------------

def cmd_predict(args):
    cfg = _load(args)
    out = _outdir(args)
    image, spacing = load_hvol(args.image)
    model = _load_model(cfg, args.checkpoint)
    labels, _mean, _var = _predict_volume(model, image, cfg.train.seed)
    save_hvol(os.path.join(out, "labels.hvol"), labels, spacing)
    shades = np.array([0, 128, 255], dtype=np.uint8)  # background, organ, lesion
    for z in range(labels.shape[0]):
        _save_png(os.path.join(out, f"mask_{z:03d}.png"), shades[labels[z]])
    log.info("wrote labels.hvol and %d mask PNGs to %s", labels.shape[0], out)
    return 0


def cmd_uncertainty(args):
    cfg = _load(args)
    out = _outdir(args)
    image, spacing = load_hvol(args.image)
    model = _load_model(cfg, args.checkpoint)
    _labels, mean, var = _predict_volume(model, image, cfg.train.seed)
    names = ("organ", "lesion")
    for c, name in enumerate(names):
        save_hvol(
            os.path.join(out, f"mean_{name}.hvol"), mean[:, c].astype(np.float32), spacing
        )
        save_hvol(
            os.path.join(out, f"var_{name}.hvol"), var[:, c].astype(np.float32), spacing
        )
    # heat: per-slice max variance over channels, scaled by the 0.25 bound
    heat = (var.max(axis=1) / 0.25 * 255.0).round().astype(np.uint8)
    for z in range(heat.shape[0]):
        _save_png(os.path.join(out, f"heat_{z:03d}.png"), heat[z])
    fg = foreground_uncertainty(
        mean.transpose(1, 0, 2, 3), var.transpose(1, 0, 2, 3)
    )
    summary = {"mean_foreground_std": dict(zip(names, fg))}
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    return 0


# ---- ablate ---------------------------------------------------------------

def _score_split(model, samples, batch=16):
    """Class-averaged overlap and surface scores over one slice split.

    Per-slice, per-class Dice/IoU/VOE plus in-plane surface distance,
    averaged together across both classes. Slices where either mask is
    empty carry no surface, so they are skipped for the distance mean;
    the result is None if no slice scored.
    """
    dices, ious, voes, assds = [], [], [], []
    for at in range(0, len(samples), batch):
        x, t = batch_arrays(samples[at : at + batch])
        z = model.logits(Tensor(x), train=False)
        pred = z.data > 0.0  # sigmoid(z) > 0.5
        gt = t.astype(bool)
        for i in range(pred.shape[0]):
            for c in range(pred.shape[1]):
                p, g = pred[i, c], gt[i, c]
                dices.append(dice(p, g))
                ious.append(iou(p, g))
                voes.append(voe(p, g))
                if p.any() and g.any():
                    assds.append(assd(p, g))
    return {
        "dice": float(np.mean(dices)),
        "iou": float(np.mean(ious)),
        "voe": float(np.mean(voes)),
        "assd": float(np.mean(assds)) if assds else None,
    }


def _ablate_row(packed):
    """One toggle row, trained and scored; runs in a worker process."""
    row_id, enabled, cfg = packed
    toggles = {name: name in enabled for name in _TOGGLES}
    model_cfg = replace(cfg.model, **toggles)
    counts = (cfg.data.train_slices, cfg.data.val_slices, cfg.data.test_slices)
    train, val, _ = build_slice_splits(cfg.train.seed, counts, cfg.phantom)
    model = HansNet(model_cfg, master_seed=cfg.train.seed)
    tcfg = replace(cfg.train, epochs=cfg.ablate.epochs)
    train_loop(model, train, val, tcfg)
    # score time goes to the log, not the CSV: wall clock is not
    # reproducible and every CSV cell must be seed-stable
    t0 = time.monotonic()
    scores = {"train": _score_split(model, train), "val": _score_split(model, val)}
    log.info("row %s inference %.1fs", row_id, time.monotonic() - t0)
    row = {"row": row_id}
    row.update({name.removeprefix("use_"): int(toggles[name]) for name in _TOGGLES})
    for metric in ("dice", "iou", "assd", "voe"):
        for split in ("train", "val"):
            value = scores[split][metric]
            row[f"{metric}_{split}"] = "" if value is None else f"{value:.6f}"
    row["params"] = int(sum(t.data.size for t in model.trainable()))
    return row


def cmd_ablate(args):
    cfg = _load(args)
    out = _outdir(args)
    if args.jobs < 1:
        raise ConfigError(f"--jobs must be at least 1, got {args.jobs}")
    packed = [(row_id, enabled, cfg) for row_id, enabled in ABLATION_ROWS]
    if args.jobs == 1:
        rows = [_ablate_row(p) for p in packed]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_ablate_row, packed))
    path = os.path.join(out, "ablation.csv")
    fieldnames = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
    log.info("wrote %s", path)
    return 0


# ---- entry ----------------------------------------------------------------

_LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging():
    raw = os.environ.get("HANSNET_LOG", "info").lower()
    if raw not in _LOG_LEVELS:
        raise ConfigError(
            f"HANSNET_LOG must be one of {sorted(_LOG_LEVELS)}, got {raw!r}"
        )
    logging.basicConfig(
        level=_LOG_LEVELS[raw],
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )


def main(argv=None):
    try:
        _setup_logging()
        args = _build_parser().parse_args(argv)
        return args.func(args)
    except (ConfigError, ContractError, DimensionError, GenerationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except NumericalError as e:
        print(f"numerical error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
