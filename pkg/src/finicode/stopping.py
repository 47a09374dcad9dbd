"""Stopping rules over growing space-time windows.

A rule watches symbols revealed layer by layer on a window sequence around
a home vertex.  Entering layer j means layers 0..j-1 are fully populated;
the rule is consulted exactly at these entries, and firing there certifies
the stopped extent tau = j - 1.  Revealed regions are therefore always
complete balls of the window sequence.

Source-side rules play the matching role for the columns feeding a
transported stream: a column is exhausted once its revealed prefix
satisfies the rule, and the rule's capacity bounds how tall a column can
ever grow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from . import _pca_kernels as _pk
from ._mix import derive_seed_py
from .randomness import SiteSource
from .spacetime import Point, WindowSequence, origin

TAU_DETERMINISTIC = 0
TAU_FIRST_HIT = 1
TAU_COALESCENCE = 2

SIGMA_DETERMINISTIC = 0
SIGMA_FIRST_HIT = 1


class StoppingError(ValueError):
    pass


@dataclass(frozen=True)
class StoppingRule:
    """Decides, at each layer entry, whether enough has been revealed.

    ``t0`` parametrizes deterministic rules.  First-hit rules compare the
    layer-0 symbol against ``hit_symbol`` and fall back to ``miss_tau``
    on a miss.  Coalescence rules drive a two-sided sandwich with the
    revealed cone symbols and fire once the home vertex is pinned; they
    carry the threshold table of the spin model via ``pcum``.
    """

    kind: int
    window: WindowSequence
    t0: int = 0
    hit_symbol: int = -1
    miss_tau: int = 0
    pcum: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind == TAU_DETERMINISTIC:
            if self.t0 < 0:
                raise StoppingError("deterministic rules need t0 >= 0")
        elif self.kind == TAU_FIRST_HIT:
            if self.hit_symbol < 0:
                raise StoppingError("first-hit rules need a target symbol")
            if self.miss_tau < 0:
                raise StoppingError("first-hit fallback must be >= 0")
        elif self.kind == TAU_COALESCENCE:
            if self.window.kind != "cone" or self.window.d != 1 \
                    or self.window.slope() != 1:
                raise StoppingError(
                    "coalescence rules run on the slope-1 cone over Z")
            if self.pcum is None or len(self.pcum) != 5:
                raise StoppingError(
                    "coalescence rules need the 5-entry threshold table")
        else:
            raise StoppingError(f"unknown rule kind {self.kind}")

    def satisfied(self, revealed: Dict[Point, int], j: int
                  ) -> Tuple[bool, Optional[int]]:
        """(done, payload) at entry to layer j (layers 0..j-1 complete).

        The payload is None except for coalescence rules, which report
        the reconstructed state index at the home vertex.
        """
        if j < 1:
            return False, None
        if self.kind == TAU_DETERMINISTIC:
            return j >= self.t0 + 1, None
        if self.kind == TAU_FIRST_HIT:
            z0 = revealed[(origin(self.window.d), 0)]
            tau = 0 if z0 == self.hit_symbol else self.miss_tau
            return j >= tau + 1, None
        depth = j - 1
        if depth < 1:
            return False, None
        slab = self.cone_slab(revealed, depth)
        code = _pk.ising_cone_coalesced(slab, depth, depth)
        if code == 2:
            raise StoppingError("revealed layers do not cover the cone")
        if code == 0:
            return False, None
        return True, code >> 2

    def cone_slab(self, revealed: Dict[Point, int], depth: int
                  ) -> np.ndarray:
        """(sites, ages) slab for the cone evaluator; -1 marks absent."""
        slab = np.full((2 * depth + 1, depth + 1), -1, np.int64)
        for age in range(depth + 1):
            for off in range(-age, age + 1):
                sym = revealed.get(((off,), age))
                if sym is not None:
                    slab[off + depth, age] = sym
        return slab


def deterministic_rule(window: WindowSequence, t0: int) -> StoppingRule:
    return StoppingRule(TAU_DETERMINISTIC, window, t0=t0)


def first_hit_rule(window: WindowSequence, hit_symbol: int,
                   miss_tau: int) -> StoppingRule:
    return StoppingRule(TAU_FIRST_HIT, window, hit_symbol=hit_symbol,
                        miss_tau=miss_tau)


def coalescence_rule(window: WindowSequence,
                     pcum: Sequence[float]) -> StoppingRule:
    return StoppingRule(TAU_COALESCENCE, window,
                        pcum=np.asarray(pcum, np.float64))


@dataclass(frozen=True)
class SourceRule:
    """When is a revealed column prefix enough to stop consuming it."""

    kind: int
    m: int = 0
    hit_symbol: int = -1
    cap: int = 0

    def __post_init__(self):
        if self.kind == SIGMA_DETERMINISTIC:
            if self.m < 0:
                raise StoppingError("column height threshold must be >= 0")
        elif self.kind == SIGMA_FIRST_HIT:
            if self.hit_symbol < 0:
                raise StoppingError("first-hit rules need a target symbol")
            if self.cap < 0:
                raise StoppingError("column cap must be >= 0")
        else:
            raise StoppingError(f"unknown source rule kind {self.kind}")

    def capacity(self) -> int:
        """Cells a column can hold before the rule necessarily stops it."""
        top = self.m if self.kind == SIGMA_DETERMINISTIC else self.cap
        return top + 1

    def stopped(self, values: Sequence[int]) -> bool:
        """Rule verdict on a fully revealed column prefix."""
        if not values:
            return False
        top = len(values) - 1
        if self.kind == SIGMA_DETERMINISTIC:
            return top >= self.m
        return top >= self.cap or any(v == self.hit_symbol for v in values)


def column_rule(m: int) -> SourceRule:
    return SourceRule(SIGMA_DETERMINISTIC, m=m)


def column_first_hit_rule(hit_symbol: int, cap: int) -> SourceRule:
    return SourceRule(SIGMA_FIRST_HIT, hit_symbol=hit_symbol, cap=cap)


def codec_field(pca, source: SiteSource) -> Callable:
    """Site-indexed symbol stream: the codec applied to a raw u64 field.

    Sharing the codec between every sampling route keeps the per-cell law
    bit-identical across them, not merely equal in distribution.
    """

    def draw(site, i: int) -> int:
        return pca.codec.symbol_index(source.raw_u64(site, i))

    return draw


@dataclass
class DirectSample:
    tau: int
    payload: Optional[int]
    revealed: Dict[Point, int]

    def ball_points(self, window: WindowSequence):
        return window.ball(self.tau)


def direct_sample(rule: StoppingRule, symbols: Callable, home,
                  max_layers: int = 100000) -> DirectSample:
    """Reveal window layers around ``home`` until the rule fires.

    ``symbols(site, i)`` supplies the i.i.d. field.  ``home`` is a spatial
    tuple in the rule's dimension.  Returns the stopped extent, any rule
    payload, and the revealed symbols keyed by home-relative points.
    """
    home = tuple(home)
    if len(home) != rule.window.d:
        raise StoppingError(f"home {home!r} has wrong dimension")
    revealed: Dict[Point, int] = {}
    for j in range(1, max_layers + 2):
        for (u, i) in rule.window.layer(j - 1):
            site = tuple(h + du for h, du in zip(home, u))
            revealed[(u, i)] = symbols(site, i)
        done, payload = rule.satisfied(revealed, j)
        if done:
            return DirectSample(tau=j - 1, payload=payload,
                                revealed=revealed)
    raise StoppingError(f"rule did not fire within {max_layers} layers")


@dataclass
class RequirementEstimate:
    n_runs: int
    mean_tau: float
    max_tau: int
    mean_ball: float
    se_ball: float
    slots: int


def estimate_requirement(rule: StoppingRule, pca, seed: int,
                         n_runs: int = 2000,
                         max_layers: int = 100000) -> RequirementEstimate:
    """Monte Carlo sizing of the revealed region.

    Draws independent stopped windows, then doubles the ceiling of the
    mean ball size to get a column-slot count with slack for the
    convergence of the empirical mean.
    """
    from .models import symbol_distribution

    dist = symbol_distribution(pca)
    taus = np.empty(n_runs, np.int64)
    balls = np.empty(n_runs, np.float64)
    for k in range(n_runs):
        src = SiteSource(derive_seed_py(seed, k), dist)
        out = direct_sample(rule, codec_field(pca, src),
                            origin(rule.window.d), max_layers=max_layers)
        taus[k] = out.tau
        balls[k] = rule.window.size(out.tau)
    mean_ball = float(balls.mean())
    se = float(balls.std(ddof=1) / math.sqrt(n_runs))
    return RequirementEstimate(
        n_runs=n_runs,
        mean_tau=float(taus.mean()),
        max_tau=int(taus.max()),
        mean_ball=mean_ball,
        se_ball=se,
        slots=2 * math.ceil(mean_ball),
    )
