"""Wavelet-style decomposition stage.

The input is split by three parallel 3x3 convolutions into a low-frequency
band (half the output channels) and horizontal/vertical detail bands (a
quarter each); a 1x1 convolution fuses the concatenated bands back into a
single feature map:

    F_low  = Conv3x3_low(X)
    F_high = [Conv3x3_h(X); Conv3x3_v(X)]
    F_out  = Conv1x1([F_low; F_high]) + b

The band kernels start from smoothing/derivative stencils plus noise, so
the split is frequency-selective from step zero but fully learnable.
"""

import numpy as np

from .errors import DimensionError
from .init import he_conv
from .ops import conv2d
from .tensor import Tensor, concat

_SMOOTH = np.full((3, 3), 1.0 / 9.0)
_DX = np.array([[1.0, 0.0, -1.0]] * 3) / 6.0  # horizontal derivative
_DY = _DX.T


def _band_kernel(rng, cout, cin, stencil):
    w = np.broadcast_to(stencil, (cout, cin, 3, 3)) / cin
    return w + 0.1 * he_conv(rng, cout, cin, 3)


class WaveletDecomposition:
    """Three-band frequency split with learned 1x1 fusion.

    `cout` must be divisible by 4: the low band takes cout/2 channels and
    each detail band cout/4.
    """

    def __init__(self, cin, cout, rng):
        if cout % 4:
            raise DimensionError(f"wavelet: cout must be divisible by 4, got {cout}")
        self.cin = cin
        self.cout = cout
        c_low, c_det = cout // 2, cout // 4
        self.low = Tensor(_band_kernel(rng, c_low, cin, _SMOOTH), requires_grad=True)
        self.high_h = Tensor(_band_kernel(rng, c_det, cin, _DX), requires_grad=True)
        self.high_v = Tensor(_band_kernel(rng, c_det, cin, _DY), requires_grad=True)
        self.fusion = Tensor(he_conv(rng, cout, cout, 1), requires_grad=True)
        self.bias = Tensor(np.zeros(cout), requires_grad=True)

    def params(self):
        return {
            "low": self.low,
            "high_h": self.high_h,
            "high_v": self.high_v,
            "fusion": self.fusion,
            "bias": self.bias,
        }

    def __call__(self, x):
        # one conv with the band kernels stacked along the output axis is
        # exactly the concatenation of the three per-band convolutions
        stacked = concat([self.low, self.high_h, self.high_v], axis=0)
        bands = conv2d(x, stacked, padding=1)
        return conv2d(bands, self.fusion, self.bias)
