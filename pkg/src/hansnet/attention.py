"""Gated self-attention over spatial positions.

Queries and keys are projected to C/8 channels by 1x1 convolutions, values
keep all C channels. With N = H*W positions:

    A = softmax(Q K^T / sqrt(d_k))          # [B, N, N], rows sum to 1
    O = A V                                 # [B, N, C]
    out = X + w * O

The scalar gate w = sigmoid(MLP(GAP(X))) is computed per sample from the
globally pooled features. Its final layer starts at exactly zero, so the
gate opens at 0.5 and training decides how much attention to let through.
"""

import numpy as np

from .errors import DimensionError
from .init import he_conv, he_linear
from .ops import conv2d
from .tensor import (
    Tensor,
    add,
    matmul,
    mul,
    permute,
    reduce_mean,
    reshape,
    scale,
    sigmoid,
    softmax,
    tanh,
)


class AdaptiveAttention:
    """Self-attention with a learned per-sample blend gate. C must be
    divisible by 8 (key dimension is C/8)."""

    def __init__(self, c, rng):
        if c % 8:
            raise DimensionError(f"attention: channels must be divisible by 8, got {c}")
        self.c = c
        self.dk = c // 8
        self.q = Tensor(he_conv(rng, self.dk, c, 1), requires_grad=True)
        self.k = Tensor(he_conv(rng, self.dk, c, 1), requires_grad=True)
        self.v = Tensor(he_conv(rng, c, c, 1), requires_grad=True)
        hidden = c // 2
        self.mlp1_w = Tensor(he_linear(rng, c, hidden), requires_grad=True)
        self.mlp1_b = Tensor(np.zeros(hidden), requires_grad=True)
        # zero init: gate starts at sigmoid(0) = 0.5
        self.mlp2_w = Tensor(np.zeros((hidden, 1)), requires_grad=True)
        self.mlp2_b = Tensor(np.zeros(1), requires_grad=True)

    def params(self):
        return {
            "q": self.q,
            "k": self.k,
            "v": self.v,
            "mlp1.w": self.mlp1_w,
            "mlp1.b": self.mlp1_b,
            "mlp2.w": self.mlp2_w,
            "mlp2.b": self.mlp2_b,
        }

    def gate(self, x):
        """Per-sample blend weight in (0, 1), shape [B, 1, 1, 1]."""
        pooled = reduce_mean(x, axes=(2, 3))  # [B, C]
        h = tanh(add(matmul(pooled, self.mlp1_w), self.mlp1_b))
        w = sigmoid(add(matmul(h, self.mlp2_w), self.mlp2_b))  # [B, 1]
        return reshape(w, (x.shape[0], 1, 1, 1))

    def __call__(self, x):
        b, c, hh, ww = x.shape
        n = hh * ww

        def tokens(w, ch):
            return permute(reshape(conv2d(x, w), (b, ch, n)), (0, 2, 1))

        q = tokens(self.q, self.dk)  # [B, N, dk]
        k = tokens(self.k, self.dk)
        v = tokens(self.v, self.c)  # [B, N, C]

        att = softmax(scale(matmul(q, permute(k, (0, 2, 1))), 1.0 / np.sqrt(self.dk)), axis=-1)
        o = reshape(permute(matmul(att, v), (0, 2, 1)), (b, c, hh, ww))
        return add(x, mul(self.gate(x), o))
