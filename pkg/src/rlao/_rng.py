"""Counter-based uniform generator (SplitMix64).

A draw is a pure function of ``(key, counter)``, so the numba kernels, the
vectorised numpy fallbacks and the scalar environment all produce identical
streams. Keys are derived from a seed plus integer identifiers (trial index,
abstract state, action, ...), which gives independent, reproducible streams
without sharing generator state between workers.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
INV_2_53 = 1.0 / 9007199254740992.0


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31)


def derive_key(seed: int, *ids: int) -> int:
    """Fold ``ids`` into ``seed`` to get a 64-bit stream key."""
    k = mix64(int(seed) * GOLDEN + 0x632BE59BD9B4E019)
    for i in ids:
        k = mix64(k ^ mix64((int(i) + 1) * GOLDEN))
    return k


def uniform(key: int, counter: int) -> float:
    """The ``counter``-th uniform in [0, 1) of stream ``key``."""
    z = mix64(key + (counter + 1) * GOLDEN)
    return (z >> 11) * INV_2_53


_GOLDEN_U = np.uint64(GOLDEN)
_MIX1_U = np.uint64(MIX1)
_MIX2_U = np.uint64(MIX2)
_S30, _S27, _S31, _S11 = (np.uint64(v) for v in (30, 27, 31, 11))


def uniform_array(keys: np.ndarray, counter) -> np.ndarray:
    """Vectorised :func:`uniform` over uint64 ``keys`` (``counter`` broadcasts)."""
    keys = np.asarray(keys, dtype=np.uint64)
    c = np.asarray(counter, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = keys + (c + np.uint64(1)) * _GOLDEN_U
        z = (z ^ (z >> _S30)) * _MIX1_U
        z = (z ^ (z >> _S27)) * _MIX2_U
        z = z ^ (z >> _S31)
    return (z >> _S11).astype(np.float64) * INV_2_53


def trial_keys(seed: int, n: int, *ids: int) -> np.ndarray:
    return np.array([derive_key(seed, *ids, t) for t in range(n)], dtype=np.uint64)
