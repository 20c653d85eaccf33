"""Hyperbolic feature mapping.

Channel vectors are pushed onto a Poincare ball of curvature kappa < 0
through the exponential map at the origin:

    exp_map(v) = tanh(sqrt(-kappa) * ||v||) / (sqrt(-kappa) * ||v|| + eps) * v

which is a radial contraction: every output lands strictly inside the ball
of radius 1/sqrt(-kappa). The full block is a 3x3 convolution, a learned
channel-mixing matrix applied per spatial position, and the map above over
each position's channel vector.

Curvature is fixed at -1 by default. With `learnable_curvature` the block
instead carries a raw scalar c and uses kappa = -softplus(c), which keeps
curvature strictly negative no matter what the optimizer does.
"""

import numpy as np

from .init import he_conv, near_identity
from .ops import conv2d
from .tensor import (
    Tensor,
    add,
    div,
    exp,
    l2norm_last,
    log,
    matmul,
    mul,
    permute,
    reshape,
    scale,
    softplus,
    tanh,
)

EPS = 1e-7


def exp_map(v, kappa=-1.0, sqrt_neg_kappa=None):
    """Map vectors (last axis) into the radius-1/sqrt(-kappa) ball.

    `sqrt_neg_kappa` may be a scalar Tensor for a learnable curvature;
    otherwise the float `kappa` < 0 is used directly.
    """
    r = l2norm_last(v)  # [..., 1]
    if sqrt_neg_kappa is not None:
        a = mul(r, sqrt_neg_kappa)
    else:
        if kappa >= 0:
            raise ValueError(f"curvature must be negative, got {kappa}")
        a = scale(r, float(np.sqrt(-kappa)))
    coeff = div(tanh(a), add(a, Tensor(np.array(EPS))))
    return mul(coeff, v)


class HyperbolicConvBlock:
    """conv3x3 -> per-position channel mixing -> exponential map."""

    def __init__(self, cin, cout, rng, kappa=-1.0, learnable_curvature=False):
        self.cin = cin
        self.cout = cout
        self.learnable_curvature = learnable_curvature
        self.W = Tensor(he_conv(rng, cout, cin, 3), requires_grad=True)
        self.T = Tensor(near_identity(rng, cout), requires_grad=True)
        if learnable_curvature:
            # softplus(c) = 1 at init so kappa starts at -1
            self.kappa = Tensor(np.array(np.log(np.e - 1.0)), requires_grad=True)
        else:
            if kappa >= 0:
                raise ValueError(f"curvature must be negative, got {kappa}")
            self.kappa = Tensor(np.array(float(kappa)))

    def params(self):
        return {"W": self.W, "T": self.T, "kappa": self.kappa}

    def trainable(self):
        out = [self.W, self.T]
        if self.learnable_curvature:
            out.append(self.kappa)
        return out

    def curvature(self):
        """Current kappa as a float (resolving the raw parameter)."""
        if self.learnable_curvature:
            return -float(np.logaddexp(0.0, self.kappa.item()))
        return self.kappa.item()

    def __call__(self, x):
        h = conv2d(x, self.W, padding=1)
        b, c, hh, ww = h.shape
        flat = permute(reshape(h, (b, c, hh * ww)), (0, 2, 1))  # [B, N, C]
        mixed = matmul(flat, self.T)
        if self.learnable_curvature:
            neg_kappa = softplus(self.kappa)
            mapped = exp_map(mixed, sqrt_neg_kappa=exp(scale(log(neg_kappa), 0.5)))
        else:
            mapped = exp_map(mixed, kappa=float(self.kappa.data))
        return reshape(permute(mapped, (0, 2, 1)), (b, c, hh, ww))
