"""Monte-Carlo dropout uncertainty head.

A small stochastic head (channel dropout, then two 3x3 convolutions) maps
fused features to two logits. At inference it is run T times with dropout
live; per-pixel mean and variance of the sigmoid outputs give the
prediction and its uncertainty:

    mean = (1/T) sum_t sigmoid(z_t)
    var  = (1/T) sum_t (sigmoid(z_t) - mean)^2

The variance divides by T, not T-1. Runs that cannot differ (a single
pass, or dropout disabled) return an exactly zero variance map rather
than accumulating rounding dust.
"""

import numpy as np
from scipy.special import expit

from .errors import ContractError
from .init import he_conv
from .ops import conv2d, dropout2d
from .tensor import Tensor


class UncertaintyHead:
    def __init__(self, cin, rng, p=0.2, hidden=16):
        if not 0.0 <= p < 1.0:
            raise ContractError(f"dropout probability must be in [0, 1), got {p}")
        self.p = float(p)
        self.w1 = Tensor(he_conv(rng, hidden, cin, 3), requires_grad=True)
        self.b1 = Tensor(np.zeros(hidden), requires_grad=True)
        self.w2 = Tensor(he_conv(rng, 2, hidden, 3), requires_grad=True)
        self.b2 = Tensor(np.zeros(2), requires_grad=True)

    def params(self):
        return {"conv1.w": self.w1, "conv1.b": self.b1, "conv2.w": self.w2, "conv2.b": self.b2}

    def trainable(self):
        return [self.w1, self.b1, self.w2, self.b2]

    def __call__(self, x, rng=None):
        """Logits [B, 2, H, W]. With an rng, input channels are dropped
        stochastically; without one the pass is deterministic."""
        h = dropout2d(x, self.p, rng) if rng is not None else x
        h = conv2d(h, self.w1, self.b1, padding=1)
        return conv2d(h, self.w2, self.b2, padding=1)


def mc_predict(head, x, passes, rng, return_samples=False):
    """Mean and variance of sigmoid outputs over `passes` stochastic runs.

    Returns (mean, var) as float64 arrays shaped like the logits, plus the
    raw sample stack when `return_samples` is set.
    """
    if passes < 1:
        raise ContractError(f"need at least one pass, got {passes}")
    if passes == 1 or head.p == 0.0:
        probs = expit(head(x, rng if head.p > 0 else None).data)
        samples = probs[None]
        mean, var = probs.copy(), np.zeros_like(probs)
    else:
        samples = np.stack([expit(head(x, rng).data) for _ in range(passes)])
        mean = samples.mean(axis=0)
        var = np.mean((samples - mean) ** 2, axis=0)
    if return_samples:
        return mean, var, samples
    return mean, var


def foreground_uncertainty(mean, var, threshold=0.5):
    """Mean per-pixel standard deviation over the predicted foreground.

    Collapses an uncertainty map to one scalar per channel; channels whose
    prediction never crosses `threshold` yield None.
    """
    mean = np.asarray(mean, dtype=np.float64)
    var = np.asarray(var, dtype=np.float64)
    if mean.shape != var.shape:
        raise ContractError(f"mean {mean.shape} and variance {var.shape} differ")
    out = []
    std = np.sqrt(var)
    for c in range(mean.shape[0]):
        fg = mean[c] >= threshold
        out.append(float(std[c][fg].mean()) if fg.any() else None)
    return out
