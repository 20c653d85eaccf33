"""Intensity windowing, resampling, and slice selection."""

import numpy as np

from .errors import DimensionError

WINDOW_LO = -200.0
WINDOW_HI = 400.0

TUMOR_LABEL = 2
LIVER_LABEL = 1


def window_normalize(values):
    """Clamp raw intensities to [-200, 400] and rescale to [0, 1].

    The endpoints map exactly: -200 -> 0.0, 100 -> 0.5, 400 -> 1.0.
    """
    v = np.asarray(values, dtype=np.float64)
    return (np.clip(v, WINDOW_LO, WINDOW_HI) - WINDOW_LO) / (WINDOW_HI - WINDOW_LO)


def _src_positions(n_out, n_in):
    """Corner-aligned fractional source coordinates for each output index."""
    if n_out == 1 or n_in == 1:
        return np.zeros(n_out)
    return np.arange(n_out) * (n_in - 1) / (n_out - 1)


def resize_image(img, out_hw):
    """Resample a 2-D intensity image.

    Integer-factor downscales average over blocks (anti-aliased); any other
    size change uses corner-aligned bilinear interpolation.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise DimensionError(f"resize_image: expected 2-D, got shape {img.shape}")
    h, w = img.shape
    oh, ow = int(out_hw[0]), int(out_hw[1])
    if oh < 1 or ow < 1:
        raise DimensionError(f"resize_image: bad target {out_hw}")
    if (oh, ow) == (h, w):
        return img.copy()
    if h % oh == 0 and w % ow == 0:
        fy, fx = h // oh, w // ow
        return img.reshape(oh, fy, ow, fx).mean(axis=(1, 3))

    py = _src_positions(oh, h)
    px = _src_positions(ow, w)
    y0 = np.clip(np.floor(py).astype(int), 0, max(h - 2, 0))
    x0 = np.clip(np.floor(px).astype(int), 0, max(w - 2, 0))
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (py - y0)[:, None]
    wx = (px - x0)[None, :]
    return (
        (1 - wy) * (1 - wx) * img[np.ix_(y0, x0)]
        + (1 - wy) * wx * img[np.ix_(y0, x1)]
        + wy * (1 - wx) * img[np.ix_(y1, x0)]
        + wy * wx * img[np.ix_(y1, x1)]
    )


def resize_mask(mask, out_hw):
    """Nearest-neighbor resample for label maps (corner-aligned, rounded).

    A size-1 axis on either side maps everything to index 0.
    """
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise DimensionError(f"resize_mask: expected 2-D, got shape {mask.shape}")
    h, w = mask.shape
    oh, ow = int(out_hw[0]), int(out_hw[1])
    if oh < 1 or ow < 1:
        raise DimensionError(f"resize_mask: bad target {out_hw}")
    sy = np.rint(_src_positions(oh, h)).astype(int)
    sx = np.rint(_src_positions(ow, w)).astype(int)
    return mask[np.ix_(sy, sx)]


def tumor_slice_filter(labels):
    """Indices of axial slices containing at least one lesion voxel."""
    lab = np.asarray(labels)
    if lab.ndim != 3:
        raise DimensionError(f"tumor_slice_filter: expected [D, H, W], got {lab.shape}")
    return [z for z in range(lab.shape[0]) if np.any(lab[z] == TUMOR_LABEL)]


def liver_mask(labels):
    """Organ mask: the lesion lies inside the organ, so labels >= 1."""
    return np.asarray(labels) >= LIVER_LABEL


def tumor_mask(labels):
    return np.asarray(labels) == TUMOR_LABEL
