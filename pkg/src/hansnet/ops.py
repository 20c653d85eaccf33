"""Spatial operations over [B, C, H, W] feature maps.

Convolution lowers to one matrix product: receptive-field windows are
copied into a [B*Ho*Wo, Cin*K*K] buffer (im2col) and multiplied against
the flattened kernel, which lands in BLAS. The buffer is rebuilt in the
backward pass instead of being kept alive on the tape.
"""

import numpy as np

from .errors import DimensionError
from .tensor import Tensor, _make, active_tape

__all__ = [
    "conv2d",
    "maxpool2d",
    "dropout2d",
    "grid_sample_bilinear",
    "bilinear_upsample",
]


def _check_image(x, opname):
    if x.data.ndim != 4:
        raise DimensionError(f"{opname}: expected [B, C, H, W], got shape {x.shape}")


def conv2d(x, w, bias=None, stride=1, padding=0):
    """2-D cross-correlation.

    x: [B, Cin, H, W], w: [Cout, Cin, K, K] with K odd, bias: [Cout] or None.
    Output spatial dims follow the floor rule (H + 2*padding - K)//stride + 1.
    """
    _check_image(x, "conv2d")
    wd = w.data
    if wd.ndim != 4 or wd.shape[2] != wd.shape[3]:
        raise DimensionError(f"conv2d: weight must be [Cout, Cin, K, K], got {w.shape}")
    K = wd.shape[2]
    if K % 2 != 1:
        raise DimensionError(f"conv2d: kernel size must be odd, got {K}")
    B, Cin, H, W = x.shape
    Cout = wd.shape[0]
    if wd.shape[1] != Cin:
        raise DimensionError(
            f"conv2d: weight expects {wd.shape[1]} input channels, got {Cin}"
        )
    if bias is not None and bias.data.shape != (Cout,):
        raise DimensionError(f"conv2d: bias must be [{Cout}], got {bias.shape}")
    s, p = int(stride), int(padding)
    if s < 1 or p < 0:
        raise DimensionError(f"conv2d: invalid stride={stride} padding={padding}")
    Ho = (H + 2 * p - K) // s + 1
    Wo = (W + 2 * p - K) // s + 1
    if Ho < 1 or Wo < 1:
        raise DimensionError(
            f"conv2d: kernel {K} does not fit input {H}x{W} with padding {p}"
        )

    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p))) if p else x.data

    def im2col():
        # window axes ordered so the long Wo runs stay contiguous: the
        # copy moves whole rows, and the scatter in backward mirrors it
        sb, sc, sh, sw = xp.strides
        win = np.lib.stride_tricks.as_strided(
            xp,
            (B, Cin, K, K, Ho, Wo),
            (sb, sc, sh, sw, sh * s, sw * s),
            writeable=False,
        )
        return np.ascontiguousarray(win).reshape(B, Cin * K * K, Ho * Wo)

    cols = im2col()
    w2 = wd.reshape(1, Cout, Cin * K * K)
    y = np.matmul(w2, cols)  # [B, Cout, Ho*Wo]
    if bias is not None:
        y += bias.data[None, :, None]
    out = y.reshape(B, Cout, Ho, Wo)

    def backward(g):
        gm = g.reshape(B, Cout, Ho * Wo)
        gw = np.matmul(gm, im2col().transpose(0, 2, 1)).sum(axis=0).reshape(wd.shape)
        gcols = np.matmul(w2.transpose(0, 2, 1), gm).reshape(B, Cin, K, K, Ho, Wo)
        gxp = np.zeros((B, Cin, H + 2 * p, W + 2 * p))
        for k in range(K):
            for l in range(K):
                gxp[:, :, k : k + s * Ho : s, l : l + s * Wo : s] += gcols[:, :, k, l]
        gx = gxp[:, :, p : p + H, p : p + W] if p else gxp
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    inputs = (x, w) if bias is None else (x, w, bias)
    return _make(out, inputs, backward, "conv2d")


def maxpool2d(x):
    """2x2 max pooling with stride 2; H and W must be even.

    Backward routes the full gradient to the (first) argmax in each window.
    """
    _check_image(x, "maxpool2d")
    B, C, H, W = x.shape
    if H % 2 or W % 2:
        raise DimensionError(f"maxpool2d: spatial dims must be even, got {H}x{W}")
    H2, W2 = H // 2, W // 2
    windows = np.ascontiguousarray(
        x.data.reshape(B, C, H2, 2, W2, 2).transpose(0, 1, 2, 4, 3, 5)
    ).reshape(B, C, H2, W2, 4)
    idx = np.argmax(windows, axis=-1)
    out = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        gw = np.zeros((B, C, H2, W2, 4))
        np.put_along_axis(gw, idx[..., None], g[..., None], axis=-1)
        return (
            np.ascontiguousarray(
                gw.reshape(B, C, H2, W2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
            ).reshape(B, C, H, W),
        )

    return _make(out, (x,), backward, "maxpool2d")


def dropout2d(x, p, rng):
    """Channel dropout: zero whole [H, W] planes with probability p.

    Kept channels are rescaled by 1/(1-p) so the expectation is preserved.
    p == 0 returns the input unchanged without drawing from rng, so a
    disabled dropout stage leaves the random stream untouched.
    """
    _check_image(x, "dropout2d")
    p = float(p)
    if not 0.0 <= p < 1.0:
        raise DimensionError(f"dropout2d: p must be in [0, 1), got {p}")
    if p == 0.0:
        return x
    B, C = x.shape[0], x.shape[1]
    keep = (rng.random(size=(B, C)) >= p).astype(np.float64)
    mask = keep[:, :, None, None] / (1.0 - p)

    def backward(g):
        return (g * mask,)

    return _make(x.data * mask, (x,), backward, "dropout2d")


def grid_sample_bilinear(feat, coords):
    """Sample feature maps at continuous points by bilinear interpolation.

    feat: [B, C, H, W]; coords: [B, N, 2] with coords[..., 0] the vertical
    position and coords[..., 1] the horizontal one, both in [-1, 1] mapped
    corner-aligned (-1 is pixel 0, +1 is pixel H-1 or W-1). Out-of-range
    points clamp to the border. Returns [B, N, C]; differentiable in both
    feat and coords.
    """
    _check_image(feat, "grid_sample_bilinear")
    cd = coords.data
    if cd.ndim != 3 or cd.shape[2] != 2:
        raise DimensionError(
            f"grid_sample_bilinear: coords must be [B, N, 2], got {coords.shape}"
        )
    B, C, H, W = feat.shape
    if cd.shape[0] != B:
        raise DimensionError(
            f"grid_sample_bilinear: batch mismatch ({cd.shape[0]} vs {B})"
        )
    N = cd.shape[1]

    raw_y = (cd[:, :, 0] + 1.0) * 0.5 * (H - 1)
    raw_x = (cd[:, :, 1] + 1.0) * 0.5 * (W - 1)
    py = np.clip(raw_y, 0.0, H - 1.0)
    px = np.clip(raw_x, 0.0, W - 1.0)

    y0 = np.clip(np.floor(py), 0, max(H - 2, 0)).astype(np.intp)
    x0 = np.clip(np.floor(px), 0, max(W - 2, 0)).astype(np.intp)
    y1 = np.minimum(y0 + 1, H - 1)
    x1 = np.minimum(x0 + 1, W - 1)
    wy = (py - y0)[..., None]
    wx = (px - x0)[..., None]

    ft = np.ascontiguousarray(feat.data.transpose(0, 2, 3, 1))  # [B, H, W, C]
    bb = np.arange(B)[:, None]
    f00 = ft[bb, y0, x0]
    f01 = ft[bb, y0, x1]
    f10 = ft[bb, y1, x0]
    f11 = ft[bb, y1, x1]

    out = (
        (1.0 - wy) * (1.0 - wx) * f00
        + (1.0 - wy) * wx * f01
        + wy * (1.0 - wx) * f10
        + wy * wx * f11
    )

    # clamp kills the coordinate gradient outside the image
    my = ((raw_y > 0.0) & (raw_y < H - 1.0)).astype(np.float64) * 0.5 * (H - 1)
    mx = ((raw_x > 0.0) & (raw_x < W - 1.0)).astype(np.float64) * 0.5 * (W - 1)

    def backward(g):
        gt = np.zeros((B, H, W, C))
        np.add.at(gt, (bb, y0, x0), (1.0 - wy) * (1.0 - wx) * g)
        np.add.at(gt, (bb, y0, x1), (1.0 - wy) * wx * g)
        np.add.at(gt, (bb, y1, x0), wy * (1.0 - wx) * g)
        np.add.at(gt, (bb, y1, x1), wy * wx * g)
        gfeat = np.ascontiguousarray(gt.transpose(0, 3, 1, 2))

        d_wy = (f10 - f00) * (1.0 - wx) + (f11 - f01) * wx
        d_wx = (f01 - f00) * (1.0 - wy) + (f11 - f10) * wy
        gc = np.empty((B, N, 2))
        gc[:, :, 0] = np.sum(g * d_wy, axis=-1) * my
        gc[:, :, 1] = np.sum(g * d_wx, axis=-1) * mx
        return gfeat, gc

    return _make(out, (feat, coords), backward, "grid_sample_bilinear")


def _corner_grid(h, w):
    """Corner-aligned [-1, 1] sampling grid, shape [h*w, 2] as (y, x)."""
    ys = np.linspace(-1.0, 1.0, h) if h > 1 else np.zeros(1)
    xs = np.linspace(-1.0, 1.0, w) if w > 1 else np.zeros(1)
    gy, gx = np.meshgrid(ys, xs, indexing="ij")
    return np.stack([gy.ravel(), gx.ravel()], axis=-1)


def interp_matrix(n_out, n_in):
    """Corner-aligned 1-D linear resampling weights, shape [n_out, n_in].

    Row i holds the two blending weights for output position i; endpoints
    map to endpoints exactly. A single input sample broadcasts.
    """
    M = np.zeros((n_out, n_in))
    if n_in == 1:
        M[:, 0] = 1.0
        return M
    pos = np.linspace(0.0, n_in - 1.0, n_out)
    i0 = np.minimum(pos.astype(np.int64), n_in - 2)
    f = pos - i0
    rows = np.arange(n_out)
    M[rows, i0] = 1.0 - f
    M[rows, i0 + 1] = f
    return M


def bilinear_upsample(x, out_hw):
    """Resize [B, C, H, W] to [B, C, out_h, out_w] with corner-aligned
    bilinear interpolation. Differentiable in x.

    The dense sampling grid factorizes per axis, so the whole resize is
    two matrix products against tiny interpolation matrices: no gathers,
    no scatter in the backward pass.
    """
    _check_image(x, "bilinear_upsample")
    oh, ow = int(out_hw[0]), int(out_hw[1])
    if oh < 1 or ow < 1:
        raise DimensionError(f"bilinear_upsample: bad target size {out_hw}")
    from .tensor import matmul

    ry = Tensor(interp_matrix(oh, x.shape[2]))
    rxt = Tensor(np.ascontiguousarray(interp_matrix(ow, x.shape[3]).T))
    return matmul(matmul(ry, x), rxt)
