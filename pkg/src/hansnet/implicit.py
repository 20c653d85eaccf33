"""Implicit segmentation field.

Instead of upsampling coarse features back to pixel space, the decoder is
a coordinate network: any continuous point p = (y, x) in [-1, 1]^2 can be
queried. The query vector concatenates the raw coordinates, a multi-scale
sinusoidal encoding, and features bilinearly sampled at p, and a small MLP
maps that to two logits (organ, lesion):

    gamma(p) = [sin(2^l pi p_j), cos(2^l pi p_j)]  l < L, per component j
    f(p)     = MLP([p; gamma(p); F(p)])

The encoding is laid out component-major, level-minor: all L sin/cos pairs
for y first, then all pairs for x. Queries on a dense grid reproduce a
fixed-resolution logit map; the grid is corner-aligned and row-major, and
an axis of size 1 maps to coordinate 0.
"""

import numpy as np

from .errors import DimensionError
from .init import he_linear
from .ops import _corner_grid, bilinear_upsample, grid_sample_bilinear
from .tensor import Tensor, add, concat, matmul, permute, reshape, tanh


def positional_encoding(coords, levels):
    """Sinusoidal features for [..., 2] coordinates -> [..., 4*levels]."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.shape[-1] != 2:
        raise DimensionError(f"encoding expects (y, x) pairs, got shape {coords.shape}")
    out = np.empty(coords.shape[:-1] + (4 * levels,))
    for j in range(2):
        base = 2 * levels * j
        for l in range(levels):
            arg = (2.0**l) * np.pi * coords[..., j]
            out[..., base + 2 * l] = np.sin(arg)
            out[..., base + 2 * l + 1] = np.cos(arg)
    return out


def dense_grid(h, w):
    """Row-major corner-aligned query grid, shape [h*w, 2] as (y, x)."""
    return _corner_grid(h, w)


class ImplicitField:
    """Coordinate-conditioned decoder: features + position -> 2 logits."""

    def __init__(self, c_feat, rng, levels=6, hidden=64):
        self.c_feat = c_feat
        self.levels = levels
        d_in = 2 + 4 * levels + c_feat
        self.w1 = Tensor(he_linear(rng, d_in, hidden), requires_grad=True)
        self.b1 = Tensor(np.zeros(hidden), requires_grad=True)
        self.w2 = Tensor(he_linear(rng, hidden, hidden), requires_grad=True)
        self.b2 = Tensor(np.zeros(hidden), requires_grad=True)
        self.w3 = Tensor(he_linear(rng, hidden, 2), requires_grad=True)
        self.b3 = Tensor(np.zeros(2), requires_grad=True)

    def params(self):
        return {
            "mlp1.w": self.w1,
            "mlp1.b": self.b1,
            "mlp2.w": self.w2,
            "mlp2.b": self.b2,
            "mlp3.w": self.w3,
            "mlp3.b": self.b3,
        }

    def query(self, features, coords):
        """Logits at continuous points.

        features: [B, C, Hf, Wf]; coords: [B, N, 2] in [-1, 1].
        Returns [B, N, 2] with channel 0 the organ logit, 1 the lesion.
        """
        if features.shape[1] != self.c_feat:
            raise DimensionError(
                f"field expects {self.c_feat} feature channels, got {features.shape[1]}"
            )
        cd = coords.data if isinstance(coords, Tensor) else np.asarray(coords)
        sampled = grid_sample_bilinear(
            features, coords if isinstance(coords, Tensor) else Tensor(cd)
        )
        enc = positional_encoding(cd, self.levels)
        q = concat([Tensor(cd), Tensor(enc), sampled], axis=-1)
        return self._mlp(q)

    def _mlp(self, q):
        h = tanh(add(matmul(q, self.w1), self.b1))
        h = tanh(add(matmul(h, self.w2), self.b2))
        return add(matmul(h, self.w3), self.b3)

    def logits_grid(self, features, out_hw):
        """Dense query at a target resolution -> [B, 2, H, W].

        Equivalent to `query` on the full corner-aligned grid, but the
        regular spacing lets the feature sampling run as a separable
        resize instead of per-point gathers.
        """
        if features.shape[1] != self.c_feat:
            raise DimensionError(
                f"field expects {self.c_feat} feature channels, got {features.shape[1]}"
            )
        h, w = int(out_hw[0]), int(out_hw[1])
        b = features.shape[0]
        up = bilinear_upsample(features, (h, w))
        tokens = reshape(permute(up, (0, 2, 3, 1)), (b, h * w, self.c_feat))
        cd = np.ascontiguousarray(
            np.broadcast_to(dense_grid(h, w)[None], (b, h * w, 2))
        )
        enc = positional_encoding(cd, self.levels)
        out = self._mlp(concat([Tensor(cd), Tensor(enc), tokens], axis=-1))
        return permute(reshape(out, (b, h, w, 2)), (0, 3, 1, 2))
