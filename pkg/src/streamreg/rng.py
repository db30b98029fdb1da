"""Counter-based SplitMix64 draws.

Every draw is a pure function of ``(seed, stream, index)``, so results do not
depend on how rows are split into blocks or how replicates are scheduled.
A uniform in [0, 1) takes the top 53 bits of the mixed word; a draw over
``m`` categories is ``floor(u * m)``.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def splitmix64(seed: int, stream: int, index) -> np.ndarray:
    """Mixed 64-bit words for the given counter indices."""
    idx = np.asarray(index, dtype=np.uint64)
    with np.errstate(over="ignore"):
        base = _mix(np.array([seed & _MASK], dtype=np.uint64) + np.uint64(stream & _MASK) * _GOLDEN)
        return _mix(base + (idx + np.uint64(1)) * _GOLDEN)


def uniforms(seed: int, stream: int, index) -> np.ndarray:
    return (splitmix64(seed, stream, index) >> np.uint64(11)).astype(np.float64) * 2.0**-53


def categories(seed: int, stream: int, index, m: int) -> np.ndarray:
    """Integer draws in ``range(m)``."""
    return np.minimum((uniforms(seed, stream, index) * m).astype(np.int64), m - 1)
