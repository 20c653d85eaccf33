"""Dataset assembly: volume splits, slice extraction, minibatching."""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, GenerationError
from .phantom import PhantomConfig, generate_phantom
from .preprocess import liver_mask, tumor_mask, tumor_slice_filter, window_normalize
from .rng import STREAM_PHANTOM, STREAM_SHUFFLE, derive_seed, generator


def split_dataset(items, fractions, rng):
    """Shuffle `items` and split by `fractions` (train, val, test, ...).

    Non-train splits get floor(n * fraction) items each; the remainder,
    including all rounding slack, goes to the train split (index 0).
    """
    fr = [float(f) for f in fractions]
    if len(fr) < 2:
        raise ConfigError("split needs at least two fractions")
    if any(f < 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
        raise ConfigError(f"fractions must be non-negative and sum to 1, got {fr}")
    items = list(items)
    order = rng.permutation(len(items))
    shuffled = [items[i] for i in order]
    counts = [int(np.floor(len(items) * f)) for f in fr[1:]]
    n_train = len(items) - sum(counts)
    out = [shuffled[:n_train]]
    at = n_train
    for c in counts:
        out.append(shuffled[at : at + c])
        at += c
    return tuple(out)


@dataclass
class Sample:
    """One axial slice: windowed image in [0, 1] and its label map."""

    image: np.ndarray  # float32 [H, W]
    labels: np.ndarray  # uint8 [H, W]


def _volume_samples(image, labels):
    norm = window_normalize(image).astype(np.float32)
    return [Sample(norm[z], labels[z]) for z in tumor_slice_filter(labels)]


def build_slice_splits(master_seed, counts=(200, 40, 40), cfg=None):
    """Lesion-bearing slices from freshly generated phantoms.

    Slices from one volume never straddle a split boundary except when the
    target count truncates the last contributing volume. Returns a tuple
    of Sample lists sized exactly per `counts`.
    """
    cfg = cfg or PhantomConfig()
    rng = generator(master_seed, STREAM_PHANTOM)
    splits = [[] for _ in counts]
    filling = 0
    budget = 40 * sum(counts)  # plenty; a volume yields a handful of slices
    for _ in range(budget):
        if filling >= len(counts):
            break
        image, labels, _spacing = generate_phantom(rng, cfg)
        for s in _volume_samples(image, labels):
            if filling >= len(counts):
                break
            splits[filling].append(s)
            if len(splits[filling]) == counts[filling]:
                filling += 1
    if filling < len(counts):
        raise GenerationError(
            f"phantom stream exhausted before filling splits {counts}"
        )
    return tuple(splits)


def generate_volumes(master_seed, n, cfg=None):
    """A reproducible list of n phantom volumes (image, labels, spacing)."""
    cfg = cfg or PhantomConfig()
    rng = generator(master_seed, STREAM_PHANTOM)
    return [generate_phantom(rng, cfg) for _ in range(n)]


def batch_arrays(samples):
    """Stack samples into model inputs: x [B, 1, H, W], targets [B, 2, H, W].

    Target channel 0 is the organ (labels >= 1), channel 1 the lesion.
    """
    x = np.stack([s.image.astype(np.float64) for s in samples])[:, None]
    t = np.stack(
        [
            np.stack(
                [liver_mask(s.labels).astype(np.float64), tumor_mask(s.labels).astype(np.float64)]
            )
            for s in samples
        ]
    )
    return x, t


def minibatches(samples, batch_size, master_seed=None, epoch=0):
    """Yield (x, t) batches; with a seed the order reshuffles per epoch."""
    idx = np.arange(len(samples))
    if master_seed is not None:
        shuffle_rng = np.random.Generator(
            np.random.PCG64(derive_seed(derive_seed(master_seed, STREAM_SHUFFLE), epoch))
        )
        shuffle_rng.shuffle(idx)
    for at in range(0, len(samples), batch_size):
        chunk = [samples[i] for i in idx[at : at + batch_size]]
        yield batch_arrays(chunk)
