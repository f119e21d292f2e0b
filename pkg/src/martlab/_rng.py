"""Counter-based 64-bit generator used by every sampler.

The generator is fixed bit-for-bit so that independent implementations can
reproduce identical streams:

    GAMMA = 0x9E3779B97F4A7C15
    mix64(z): z ^= z >> 30; z *= 0xBF58476D1CE4E5B9 (mod 2^64)
              z ^= z >> 27; z *= 0x94D049BB133111EB (mod 2^64)
              z ^= z >> 31

    path_seed(master, i) = mix64(master + (i + 1) * GAMMA  mod 2^64)
    draw j of path i     = mix64(path_seed + (j + 1) * GAMMA  mod 2^64)

Derived quantities (all from one 64-bit draw `u`):
    uniform in [0, 1):    (u >> 11) * 2^-53
    fair +-1 step:        +1 if u >> 63 == 0 else -1
    integer in [0, g):    u % g   (bias < g / 2^64, negligible at desk scale)

Draws are pure functions of (master seed, path index, counter), so any
partition of paths across workers or any block size in vectorized samplers
reproduces the same values.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

TWO_NEG53 = 2.0 ** -53


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a 64-bit value."""
    z &= MASK64
    z ^= z >> 30
    z = (z * _M1) & MASK64
    z ^= z >> 27
    z = (z * _M2) & MASK64
    z ^= z >> 31
    return z


def path_seed(master_seed: int, index: int) -> int:
    """Per-path seed: avalanche mix of master seed and path index."""
    return mix64((master_seed + (index + 1) * GAMMA) & MASK64)


def u64_at(seed: int, counter: int) -> int:
    """Draw number `counter` (0-based) of the stream rooted at `seed`."""
    return mix64((seed + (counter + 1) * GAMMA) & MASK64)


def uniform_at(seed: int, counter: int) -> float:
    return (u64_at(seed, counter) >> 11) * TWO_NEG53


# Vectorized counterparts.  numpy uint64 arithmetic wraps modulo 2^64, which
# matches the masked scalar arithmetic above exactly.

_NP_GAMMA = np.uint64(GAMMA)
_NP_M1 = np.uint64(_M1)
_NP_M2 = np.uint64(_M2)


def mix64_array(z: np.ndarray) -> np.ndarray:
    z = z.astype(np.uint64, copy=True)
    z ^= z >> np.uint64(30)
    z *= _NP_M1
    z ^= z >> np.uint64(27)
    z *= _NP_M2
    z ^= z >> np.uint64(31)
    return z


def path_seed_array(master_seed: int, indices: np.ndarray) -> np.ndarray:
    base = (indices.astype(np.uint64) + np.uint64(1)) * _NP_GAMMA
    base += np.uint64(master_seed & MASK64)
    return mix64_array(base)


def u64_block(seeds: np.ndarray, counters: np.ndarray, width: int) -> np.ndarray:
    """Draws `width` consecutive values per stream: shape (len(seeds), width).

    Row i holds draws counters[i] .. counters[i] + width - 1 of stream i.
    """
    offs = (np.arange(1, width + 1, dtype=np.uint64)) * _NP_GAMMA
    base = seeds.astype(np.uint64) + counters.astype(np.uint64) * _NP_GAMMA
    return mix64_array(base[:, None] + offs[None, :])
