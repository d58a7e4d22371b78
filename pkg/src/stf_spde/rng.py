"""Deterministic stream derivation for Monte Carlo ensembles.

Every Gaussian draw in the package comes from numpy's Philox counter-based
bit generator. Stream keys are derived from a 64-bit master seed by a
splitmix64 finalizer chain, so each (path, mode, level) tuple gets its own
statistically independent stream and any single path can be regenerated in
isolation, in any order, on any number of workers.
"""

from __future__ import annotations

import os

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF
_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    """One splitmix64 output step (Steele et al. finalizer)."""
    x = (x + _GAMMA) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (x ^ (x >> 31)) & _MASK64


def derive_key(master_seed: int, *indices: int) -> int:
    """Derive a 64-bit stream key from a master seed and index tuple.

    The first index is folded in by XOR before mixing, so
    ``derive_key(seed, path)`` is the splitmix64 image of
    ``seed XOR path``; further indices repeat the fold-and-mix round.
    """
    key = master_seed & _MASK64
    for ix in indices:
        key = splitmix64(key ^ (ix & _MASK64))
    return key


def path_seed(master_seed: int, path_index: int) -> int:
    """Per-path seed: splitmix64(master_seed XOR path_index)."""
    return derive_key(master_seed, path_index)


def gaussian_stream(master_seed: int, *indices: int) -> np.random.Generator:
    """Fresh Philox generator for the stream addressed by the index tuple."""
    return np.random.Generator(np.random.Philox(key=derive_key(master_seed, *indices)))


def thread_count() -> int:
    """Worker cap for path ensembles, from STF_SPDE_THREADS (default 1)."""
    raw = os.environ.get("STF_SPDE_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"STF_SPDE_THREADS must be an integer, got {raw!r}")
    return max(1, n)
