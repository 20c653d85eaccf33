"""Overlap, surface-distance, and volumetric agreement metrics.

All mask arguments are boolean arrays (2-D slices or 3-D volumes). Metrics
that are undefined for a given input (empty surfaces, zero-variance
series) return None rather than a made-up number; callers decide how to
report absent values. A diagnostic is logged when that happens.
"""

import logging

import numpy as np
from scipy import ndimage
from scipy.stats import rankdata

from .errors import DimensionError

log = logging.getLogger("hansnet.metrics")


def _as_mask(x, name):
    arr = np.asarray(x)
    if arr.dtype != bool:
        u = np.unique(arr)
        if not np.all(np.isin(u, (0, 1))):
            raise DimensionError(f"{name}: mask must be binary, found values {u[:5]}")
        arr = arr.astype(bool)
    return arr


def dice(pred, gt):
    """2|A.B| / (|A|+|B|); two empty masks agree perfectly (1.0)."""
    p, g = _as_mask(pred, "dice"), _as_mask(gt, "dice")
    if p.shape != g.shape:
        raise DimensionError(f"dice: shape mismatch {p.shape} vs {g.shape}")
    total = int(p.sum()) + int(g.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(p, g).sum()) / total


def iou(pred, gt):
    """|A.B| / |A+B|; two empty masks give 1.0."""
    p, g = _as_mask(pred, "iou"), _as_mask(gt, "iou")
    if p.shape != g.shape:
        raise DimensionError(f"iou: shape mismatch {p.shape} vs {g.shape}")
    union = int(np.logical_or(p, g).sum())
    if union == 0:
        return 1.0
    return int(np.logical_and(p, g).sum()) / union


def voe(pred, gt):
    """Volumetric overlap error, 1 - IoU."""
    return 1.0 - iou(pred, gt)


def surface(mask):
    """Foreground voxels with at least one face-adjacent background voxel.

    Faces only (4-neighborhood in 2-D, 6 in 3-D); everything beyond the
    array border counts as background, so a mask touching the edge has a
    surface there.
    """
    m = _as_mask(mask, "surface")
    if m.ndim not in (2, 3):
        raise DimensionError(f"surface: need a 2-D or 3-D mask, got ndim {m.ndim}")
    all_neighbors = np.ones_like(m)
    for ax in range(m.ndim):
        for d in (1, -1):
            shifted = np.zeros_like(m)
            src = [slice(None)] * m.ndim
            dst = [slice(None)] * m.ndim
            if d == 1:
                src[ax], dst[ax] = slice(None, -1), slice(1, None)
            else:
                src[ax], dst[ax] = slice(1, None), slice(None, -1)
            shifted[tuple(dst)] = m[tuple(src)]
            all_neighbors &= shifted
    return m & ~all_neighbors


def assd(pred, gt, spacing=None):
    """Average symmetric surface distance in physical units.

    Distances are voxel-center to voxel-center, weighted by `spacing`
    (defaults to unit voxels). Returns None when either mask has no
    surface (i.e. is empty).
    """
    p, g = _as_mask(pred, "assd"), _as_mask(gt, "assd")
    if p.shape != g.shape:
        raise DimensionError(f"assd: shape mismatch {p.shape} vs {g.shape}")
    if spacing is None:
        spacing = (1.0,) * p.ndim
    if len(spacing) != p.ndim:
        raise DimensionError(
            f"assd: spacing has {len(spacing)} entries for a {p.ndim}-D mask"
        )
    sp = surface(p)
    sg = surface(g)
    if not sp.any() or not sg.any():
        log.warning("assd undefined: empty %s mask", "predicted" if not sp.any() else "reference")
        return None
    # distance_transform_edt measures to the nearest zero, so invert
    dist_to_g = ndimage.distance_transform_edt(~sg, sampling=spacing)
    dist_to_p = ndimage.distance_transform_edt(~sp, sampling=spacing)
    total = dist_to_g[sp].sum() + dist_to_p[sg].sum()
    return float(total / (int(sp.sum()) + int(sg.sum())))


def volume_ml(mask, spacing):
    """Foreground volume in milliliters for mm-spaced voxels."""
    m = _as_mask(mask, "volume_ml")
    if len(spacing) != m.ndim:
        raise DimensionError(
            f"volume_ml: spacing has {len(spacing)} entries for a {m.ndim}-D mask"
        )
    return float(int(m.sum()) * float(np.prod(spacing)) / 1000.0)


def pearson(x, y):
    """Correlation coefficient, or None for degenerate series."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size != y.size:
        raise DimensionError(f"pearson: length mismatch {x.size} vs {y.size}")
    if x.size < 2 or np.all(x == x.flat[0]) or np.all(y == y.flat[0]):
        log.warning("pearson undefined: constant or too-short series")
        return None
    return float(np.corrcoef(x, y)[0, 1])


def spearman(x, y):
    """Rank correlation: correlation of average-method ranks."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size != y.size:
        raise DimensionError(f"spearman: length mismatch {x.size} vs {y.size}")
    if x.size < 2:
        log.warning("spearman undefined: too-short series")
        return None
    return pearson(rankdata(x, method="average"), rankdata(y, method="average"))


def volume_stats(pred_ml, gt_ml):
    """Agreement between predicted and reference volumes (both in mL).

    Returns a dict with pearson, spearman, mae_ml, and rvd_percent (mean
    relative volume difference); entries that cannot be computed are None.
    """
    p = np.asarray(pred_ml, dtype=np.float64)
    g = np.asarray(gt_ml, dtype=np.float64)
    if p.size != g.size:
        raise DimensionError(f"volume_stats: length mismatch {p.size} vs {g.size}")
    if p.size == 0:
        return {"pearson": None, "spearman": None, "mae_ml": None, "rvd_percent": None}
    if np.any(g == 0.0):
        log.warning("relative volume difference undefined: zero reference volume")
        rvd = None
    else:
        rvd = float(np.mean(np.abs(p - g) / g) * 100.0)
    return {
        "pearson": pearson(p, g),
        "spearman": spearman(p, g),
        "mae_ml": float(np.mean(np.abs(p - g))),
        "rvd_percent": rvd,
    }


def uncertainty_error_correlation(variance, pred, gt):
    """Pearson correlation between per-voxel uncertainty and error.

    The error signal is the 0/1 disagreement map between prediction and
    reference. None when either series is constant (e.g. a perfect
    prediction or a deterministic model).
    """
    v = np.asarray(variance, dtype=np.float64).ravel()
    err = (_as_mask(pred, "uncertainty") != _as_mask(gt, "uncertainty")).astype(np.float64).ravel()
    if v.size != err.size:
        raise DimensionError(
            f"uncertainty_error_correlation: size mismatch {v.size} vs {err.size}"
        )
    return pearson(v, err)
