"""Loss, optimizer, and the training loop."""

import json
import logging
import time
from dataclasses import dataclass

import numpy as np

from .data import batch_arrays, minibatches
from .errors import ConfigError, ContractError, NumericalError
from .metrics import dice, iou
from .rng import STREAM_DROPOUT, generator
from .tensor import (
    Tape,
    Tensor,
    add,
    div,
    mul,
    reduce_mean,
    reduce_sum,
    scale,
    sigmoid,
    softplus,
    sub,
)

log = logging.getLogger("hansnet.train")

SMOOTH = 1.0


def segmentation_loss(logits, targets, w_dice=0.5, w_bce=0.5):
    """w_dice * (1 - soft Dice) + w_bce * binary cross-entropy, from logits.

    targets: float array [B, 2, H, W] with values exactly 0 or 1. The soft
    Dice term smooths numerator and denominator by 1.0 and averages over
    batch and both channels; the cross-entropy uses the softplus identity
    softplus(z) - z*t, which never exponentiates a positive argument.
    """
    t = np.asarray(targets, dtype=np.float64)
    if t.shape != logits.shape:
        raise ContractError(f"targets {t.shape} do not match logits {logits.shape}")
    if not np.all((t == 0.0) | (t == 1.0)):
        raise ContractError("targets must be exactly binary")
    tt = Tensor(t)

    probs = sigmoid(logits)
    inter = reduce_sum(mul(probs, tt), axes=(2, 3))  # [B, 2]
    sums = add(reduce_sum(probs, axes=(2, 3)), Tensor(t.sum(axis=(2, 3))))
    dice_per = div(add(scale(inter, 2.0), Tensor(np.array(SMOOTH))), add(sums, Tensor(np.array(SMOOTH))))
    dice_loss = sub(Tensor(np.array(1.0)), reduce_mean(dice_per))

    bce = reduce_mean(sub(softplus(logits), mul(logits, tt)))
    return add(scale(dice_loss, w_dice), scale(bce, w_bce))


class Adam:
    """Standard bias-corrected Adam over a list of parameter tensors."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * (g * g)
            p.data = p.data - self.lr * (self.m[i] / b1c) / (
                np.sqrt(self.v[i] / b2c) + self.eps
            )

    def zero_grad(self):
        for p in self.params:
            p.grad = None


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 16
    lr: float = 1e-3
    seed: int = 42
    w_dice: float = 0.5
    w_bce: float = 0.5

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")
        if self.w_dice < 0 or self.w_bce < 0 or self.w_dice + self.w_bce <= 0:
            raise ConfigError(
                f"loss weights must be non-negative with a positive sum, "
                f"got {self.w_dice}, {self.w_bce}"
            )
        if self.epochs < 0:
            raise ConfigError(f"epochs must be non-negative, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be at least 1, got {self.batch_size}")


def _batch_overlap(pred_bin, targ_bin):
    """Per-slice dice/iou for one batch, per channel."""
    scores = {"dice_liver": [], "dice_tumor": [], "iou_liver": [], "iou_tumor": []}
    for b in range(pred_bin.shape[0]):
        scores["dice_liver"].append(dice(pred_bin[b, 0], targ_bin[b, 0]))
        scores["dice_tumor"].append(dice(pred_bin[b, 1], targ_bin[b, 1]))
        scores["iou_liver"].append(iou(pred_bin[b, 0], targ_bin[b, 0]))
        scores["iou_tumor"].append(iou(pred_bin[b, 1], targ_bin[b, 1]))
    return scores


def evaluate_slices(model, samples, batch_size=16):
    """Deterministic single-pass overlap metrics, averaged per slice."""
    agg = {"dice_liver": [], "dice_tumor": [], "iou_liver": [], "iou_tumor": []}
    for at in range(0, len(samples), batch_size):
        x, t = batch_arrays(samples[at : at + batch_size])
        z = model.logits(Tensor(x), train=False)
        pred = z.data > 0.0  # sigmoid(z) > 0.5
        for k, vals in _batch_overlap(pred, t.astype(bool)).items():
            agg[k].extend(vals)
    return {k: float(np.mean(v)) for k, v in agg.items()}


def train_loop(model, train_samples, val_samples, cfg, log_path=None):
    """Adam training with per-epoch validation.

    Returns the per-epoch history; each record carries the epoch-mean
    training loss, per-slice training overlap scores, and val_* variants
    from a deterministic validation pass. With `log_path`, records stream
    to disk as one JSON object per line.
    """
    opt = Adam(model.trainable(), lr=cfg.lr)
    dropout_rng = generator(cfg.seed, STREAM_DROPOUT)
    history = []
    sink = open(log_path, "w") if log_path else None
    try:
        for epoch in range(1, cfg.epochs + 1):
            t0 = time.monotonic()
            losses = []
            train_scores = {
                "dice_liver": [], "dice_tumor": [], "iou_liver": [], "iou_tumor": []
            }
            batches = minibatches(
                train_samples, cfg.batch_size, master_seed=cfg.seed, epoch=epoch
            )
            for bi, (x, t) in enumerate(batches):
                try:
                    with Tape() as tape:
                        z = model.logits(Tensor(x), train=True, dropout_rng=dropout_rng)
                        loss = segmentation_loss(z, t, cfg.w_dice, cfg.w_bce)
                        tape.backward(loss)
                except NumericalError as e:
                    raise NumericalError(
                        f"aborting: non-finite value in epoch {epoch} batch {bi}: {e}"
                    ) from e
                opt.step()
                opt.zero_grad()
                losses.append(loss.item())
                for k, vals in _batch_overlap(z.data > 0.0, t.astype(bool)).items():
                    train_scores[k].extend(vals)

            record = {"epoch": epoch, "loss": float(np.mean(losses))}
            record.update({k: float(np.mean(v)) for k, v in train_scores.items()})
            record.update(
                {f"val_{k}": v for k, v in evaluate_slices(model, val_samples, cfg.batch_size).items()}
            )
            history.append(record)
            if sink:
                sink.write(json.dumps(record) + "\n")
                sink.flush()
            log.info(
                "epoch %d/%d loss %.4f val organ %.3f lesion %.3f (%.1fs)",
                epoch,
                cfg.epochs,
                record["loss"],
                record["val_dice_liver"],
                record["val_dice_tumor"],
                time.monotonic() - t0,
            )
    finally:
        if sink:
            sink.close()
    return history
