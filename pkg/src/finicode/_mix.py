"""Keyed 64-bit mixing primitives.

Every random quantity in this package is a pure function of
``(seed, stream tag, x, y, i)`` through the chained avalanche mixer below, so
any site of any noise field can be regenerated at any time without storing
the field.  Two implementations are kept in lockstep:

* plain-python versions (``*_py``) operating on unbounded ints with explicit
  64-bit masking, used by the object layer and as the reference in tests;
* numba versions operating on uint64, callable from inside jitted kernels.

The mixer is a chained splitmix64/murmur-style finalizer.  It is
statistical-strength, not cryptographic-strength; the distributional
contracts that matter here (determinism, site independence, uniformity) are
tested in ``tests/test_randomness.py``.
"""

from __future__ import annotations

import numpy as np
from numba import njit

MASK64 = (1 << 64) - 1

# Stream tags.  Distinct tags give independent fields for the same seed.
TAG_NOISE = 1          # model noise / coding source field
TAG_WASTE_B = 2        # reserve stream for method-B wasted reads
TAG_PERTURB = 3        # replacement stream used by perturbed sources
TAG_WASTE_B_PERTURB = 4  # perturbed counterpart of the reserve stream
TAG_SCRATCH = 7        # free tag for tests

_COORD_OFFSET = 1 << 31  # shifts signed lattice coordinates into uint range

_M1 = 0xFF51AFD7ED558CCD
_M2 = 0xC4CEB9FE1A85EC53
_C_SEED = 0x9E3779B97F4A7C15
_C_TAG = 0xBF58476D1CE4E5B9
_C_X = 0x94D049BB133111EB
_C_Y = 0xD6E8FEB86659FD93
_C_I = 0xA0761D6478BD642F


def mix64_py(x: int) -> int:
    x &= MASK64
    x ^= x >> 33
    x = (x * _M1) & MASK64
    x ^= x >> 33
    x = (x * _M2) & MASK64
    x ^= x >> 33
    return x


def field_u64_py(seed: int, tag: int, x: int, y: int, i: int) -> int:
    """Reference implementation of the field draw at site (x, y), time i."""
    h = mix64_py((seed & MASK64) ^ _C_SEED)
    h = mix64_py(h ^ ((tag + _C_TAG) & MASK64))
    h = mix64_py(h ^ ((x + _COORD_OFFSET + _C_X) & MASK64))
    h = mix64_py(h ^ ((y + _COORD_OFFSET + _C_Y) & MASK64))
    h = mix64_py(h ^ ((i + _COORD_OFFSET + _C_I) & MASK64))
    return h


def u01_py(h: int) -> float:
    """Map a u64 to the dyadic uniform grid in [0, 1) (53 bits)."""
    return (h >> 11) * 9007199254740992.0 ** -1


def derive_seed_py(seed: int, k: int) -> int:
    """Sub-seed for run k of a batch; twin of the kernels' derive_seed."""
    return mix64_py(seed ^ mix64_py(((k + 1) * _C_SEED) & MASK64))


# numba twins ---------------------------------------------------------------

_U_M1 = np.uint64(_M1)
_U_M2 = np.uint64(_M2)
_U_C_SEED = np.uint64(_C_SEED)
_U_C_TAG = np.uint64(_C_TAG)
_U_C_X = np.uint64(_C_X)
_U_C_Y = np.uint64(_C_Y)
_U_C_I = np.uint64(_C_I)
_U_33 = np.uint64(33)
_U_11 = np.uint64(11)
_U_COORD = np.uint64(_COORD_OFFSET)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True)
def mix64(x):
    x = np.uint64(x)
    x ^= x >> _U_33
    x *= _U_M1
    x ^= x >> _U_33
    x *= _U_M2
    x ^= x >> _U_33
    return x


@njit(cache=True)
def field_u64(seed, tag, x, y, i):
    h = mix64(np.uint64(seed) ^ _U_C_SEED)
    h = mix64(h ^ (np.uint64(tag) + _U_C_TAG))
    h = mix64(h ^ (np.uint64(np.int64(x)) + _U_COORD + _U_C_X))
    h = mix64(h ^ (np.uint64(np.int64(y)) + _U_COORD + _U_C_Y))
    h = mix64(h ^ (np.uint64(np.int64(i)) + _U_COORD + _U_C_I))
    return h


@njit(cache=True)
def u01(h):
    return (np.uint64(h) >> _U_11) * _INV53
