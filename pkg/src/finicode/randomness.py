"""Deterministic site-keyed randomness.

Noise fields are functions of ``(seed, tag, site, time)`` rather than stateful
generators: every draw can be regenerated at any moment, which is what lets
exact-sampling restarts reuse their noise and lets the transport engine
reveal source values out of order.  The heavy kernels call the u64 primitives
from :mod:`finicode._mix` directly; the classes here are the object layer used
by the slow paths, the oracles and the tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from ._mix import (MASK64, TAG_NOISE, TAG_PERTURB, field_u64_py, u01_py)

WEIGHT_TOL = 1e-12


class DistributionError(ValueError):
    pass


class AlphabetDistribution:
    """A probability distribution on a finite symbol alphabet.

    Symbols are arbitrary hashable labels; draws go through the cumulative
    thresholds so that a single uniform variate picks a symbol.  Weights must
    sum to 1 within 1e-12.
    """

    def __init__(self, symbols: Sequence, weights: Sequence[float]):
        if len(symbols) != len(weights):
            raise DistributionError("symbols and weights differ in length")
        if len(symbols) == 0:
            raise DistributionError("empty alphabet")
        if len(set(symbols)) != len(symbols):
            raise DistributionError("duplicate symbols")
        w = np.asarray(weights, dtype=np.float64)
        if np.any(w < 0):
            raise DistributionError("negative weight")
        total = float(w.sum())
        if abs(total - 1.0) > WEIGHT_TOL:
            raise DistributionError(
                f"weights sum to {total!r}, off by more than {WEIGHT_TOL}")
        self.symbols = list(symbols)
        self.weights = w
        self.thresholds = np.cumsum(w)
        self.thresholds[-1] = 1.0  # guard against rounding in the last bin
        self._index = {s: k for k, s in enumerate(self.symbols)}

    def __len__(self) -> int:
        return len(self.symbols)

    def index_of(self, symbol) -> int:
        return self._index[symbol]

    def draw_index(self, u: float) -> int:
        """Symbol index for a uniform variate u in [0, 1)."""
        return int(np.searchsorted(self.thresholds, u, side="right"))

    def draw(self, u: float):
        return self.symbols[self.draw_index(u)]

    def exact_weight(self, symbol) -> float:
        return float(self.weights[self._index[symbol]])


def uniform_alphabet(symbols: Sequence) -> AlphabetDistribution:
    n = len(symbols)
    return AlphabetDistribution(symbols, [1.0 / n] * n)


def _as_site(v) -> Tuple[int, int]:
    """Normalize a spatial argument to (x, y); d=1 sites get y = 0."""
    if isinstance(v, (int, np.integer)):
        return int(v), 0
    t = tuple(int(c) for c in v)
    if len(t) == 1:
        return t[0], 0
    if len(t) == 2:
        return t
    raise ValueError(f"bad site {v!r}")


@dataclass(frozen=True)
class SiteSource:
    """An i.i.d. field of symbols over space-time, keyed by a seed.

    ``perturbed_outside`` is None for a pristine source.  When set to
    ``(cx, cy, radius)``, sites with sup-norm distance > radius from the
    centre draw from an independent replacement stream, while everything
    inside the box keeps the original values; time is unrestricted.  This is
    the probe used by the locality checks.
    """

    seed: int
    distribution: AlphabetDistribution
    tag: int = TAG_NOISE
    perturbed_outside: Tuple[int, int, int] | None = None

    def __post_init__(self):
        if not (0 <= self.seed <= MASK64):
            raise ValueError("seed must fit in 64 bits")

    def _tag_for(self, x: int, y: int) -> int:
        if self.perturbed_outside is not None:
            cx, cy, radius = self.perturbed_outside
            if max(abs(x - cx), abs(y - cy)) > radius:
                return TAG_PERTURB
        return self.tag

    def raw_u64(self, v, i: int) -> int:
        x, y = _as_site(v)
        return field_u64_py(self.seed, self._tag_for(x, y), x, y, int(i))

    def uniform(self, v, i: int) -> float:
        return u01_py(self.raw_u64(v, i))

    def symbol_index(self, v, i: int) -> int:
        return self.distribution.draw_index(self.uniform(v, i))

    def symbol(self, v, i: int):
        return self.distribution.symbols[self.symbol_index(v, i)]

    def perturb_outside(self, center, radius: int) -> "SiteSource":
        """A source equal to this one inside the box, independent outside.

        ``center`` is a site, ``radius`` a sup-norm radius in lattice units.
        Values at all (u, i) with ||u - center||_inf <= radius coincide with
        the unperturbed source at every time i; values outside come from a
        fresh stream under the same seed.
        """
        if radius < 0:
            raise ValueError("radius must be >= 0")
        cx, cy = _as_site(center)
        return SiteSource(self.seed, self.distribution, self.tag,
                          (cx, cy, int(radius)))
