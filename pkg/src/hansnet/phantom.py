"""Synthetic abdominal phantoms: organ plus lesions with CT-like contrast.

A phantom volume is an anisotropic stack of slices (coarse through-plane
spacing, fine in-plane). The organ is a rotated ellipse whose in-plane
radius follows an ellipsoidal profile across slices; lesions are physical
balls fully contained in the organ. Intensity bands are drawn per volume
from disjoint ranges, so class contrast always exists but its exact level
varies, and voxelwise Gaussian noise is added on top. Images are stored
float32, labels uint8 (0 background, 1 organ, 2 lesion).
"""

from dataclasses import dataclass

import numpy as np

from .errors import GenerationError

# intensity bands, raw units before windowing; deliberately disjoint
BACKGROUND_BAND = (-180.0, -100.0)
TUMOR_BAND = (-60.0, 20.0)
LIVER_BAND = (60.0, 160.0)

_PLACEMENT_ATTEMPTS = 60


@dataclass
class PhantomConfig:
    size: int = 64  # in-plane H = W
    min_depth: int = 8
    max_depth: int = 12
    max_tumors: int = 4
    min_tumor_radius: float = 6.0  # physical units (in-plane voxels)
    max_tumor_radius: float = 11.0
    min_noise: float = 8.0
    max_noise: float = 10.0
    spacing: tuple = (5.0, 1.0, 1.0)


def _liver_mask(rng, depth, size):
    """Rotated-ellipse organ with an ellipsoidal through-plane profile."""
    cy = size * rng.uniform(0.45, 0.55)
    cx = size * rng.uniform(0.45, 0.55)
    ay = size * rng.uniform(0.28, 0.38)
    ax = size * rng.uniform(0.32, 0.42)
    theta = rng.uniform(0.0, np.pi)
    zc = (depth - 1) / 2.0
    zr = depth / 2.0 + rng.uniform(0.5, 1.5)

    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    ct, st = np.cos(theta), np.sin(theta)
    u = ct * (yy - cy) + st * (xx - cx)
    v = -st * (yy - cy) + ct * (xx - cx)

    mask = np.zeros((depth, size, size), dtype=bool)
    for z in range(depth):
        s2 = 1.0 - ((z - zc) / zr) ** 2
        if s2 <= 0.05:
            continue
        s = np.sqrt(s2)
        mask[z] = (u / (s * ay)) ** 2 + (v / (s * ax)) ** 2 <= 1.0
    return mask


def _ball_mask(shape, center, radius, spacing):
    """Physical ball rasterized over anisotropic voxels."""
    zz, yy, xx = np.meshgrid(*[np.arange(n) for n in shape], indexing="ij")
    d2 = (
        ((zz - center[0]) * spacing[0]) ** 2
        + ((yy - center[1]) * spacing[1]) ** 2
        + ((xx - center[2]) * spacing[2]) ** 2
    )
    return d2 <= radius * radius


def _ball_boundary_inside(liver, center, radius, spacing, rng):
    """Sample points on the ball surface and require every one in the organ."""
    dirs = rng.normal(size=(30, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    axes = np.concatenate([np.eye(3), -np.eye(3)])
    for d in np.concatenate([axes, dirs]):
        p = np.asarray(center) + d * radius / np.asarray(spacing)
        idx = np.rint(p).astype(int)
        if np.any(idx < 0) or np.any(idx >= np.asarray(liver.shape)):
            return False
        if not liver[tuple(idx)]:
            return False
    return True


def generate_phantom(rng, cfg=None):
    """One volume: (image float32 [D, H, W], labels uint8, spacing).

    Raises GenerationError if a lesion cannot be placed fully inside the
    organ after a bounded number of attempts.
    """
    cfg = cfg or PhantomConfig()
    depth = int(rng.integers(cfg.min_depth, cfg.max_depth + 1))
    size = cfg.size
    spacing = tuple(float(s) for s in cfg.spacing)

    liver = _liver_mask(rng, depth, size)
    labels = np.zeros((depth, size, size), dtype=np.uint8)
    labels[liver] = 1

    n_tumors = int(rng.integers(0, cfg.max_tumors + 1))
    candidates = np.argwhere(liver)
    for _ in range(n_tumors):
        placed = False
        for _attempt in range(_PLACEMENT_ATTEMPTS):
            radius = rng.uniform(cfg.min_tumor_radius, cfg.max_tumor_radius)
            center = candidates[rng.integers(len(candidates))]
            if not _ball_boundary_inside(liver, center, radius, spacing, rng):
                continue
            ball = _ball_mask(labels.shape, center, radius, spacing)
            if np.any(ball & ~liver):  # rasterized voxels the samples missed
                continue
            labels[ball] = 2
            placed = True
            break
        if not placed:
            raise GenerationError(
                f"could not place a lesion of radius up to {cfg.max_tumor_radius} "
                f"inside the organ after {_PLACEMENT_ATTEMPTS} attempts"
            )

    base_bg = rng.uniform(*BACKGROUND_BAND)
    base_liver = rng.uniform(*LIVER_BAND)
    base_tumor = rng.uniform(*TUMOR_BAND)
    sigma = rng.uniform(cfg.min_noise, cfg.max_noise)
    image = np.full(labels.shape, base_bg)
    image[labels == 1] = base_liver
    image[labels == 2] = base_tumor
    image += rng.normal(scale=sigma, size=labels.shape)
    return image.astype(np.float32), labels, spacing
