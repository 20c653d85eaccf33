"""Deterministic seed derivation.

One master seed fans out to every random consumer (init, shuffling, dropout,
phantom geometry, MC sampling) through a splitmix64-style mix, so a run is
reproducible from the master seed alone and streams stay independent.

Derivation, frozen: ``sub = splitmix64(master * GOLDEN + stream)`` where
``GOLDEN = 0x9E3779B97F4A7C15`` and all arithmetic is mod 2**64.
"""

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

# Stream ids; fixed constants, never reordered.
STREAM_INIT = 1
STREAM_SHUFFLE = 2
STREAM_DROPOUT = 3
STREAM_PHANTOM = 4
STREAM_MC = 5
STREAM_SPLIT = 6


def splitmix64(x: int) -> int:
    """One splitmix64 output step for a 64-bit state."""
    x = (x + _GOLDEN) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def derive_seed(master: int, stream: int) -> int:
    """Mix (master, stream) into an independent 64-bit sub-seed."""
    return splitmix64((master * _GOLDEN + stream) & _MASK)


def generator(master: int, stream: int) -> np.random.Generator:
    """PCG64 generator for one (master, stream) pair."""
    return np.random.Generator(np.random.PCG64(derive_seed(master, stream)))
