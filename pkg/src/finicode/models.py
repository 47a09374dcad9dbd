"""The three built-in lattice models and their exact-sampling fast paths.

* a ferromagnetic two-state model in its uniqueness regime, updated through
  activation coins and an integer threshold on the neighbour sum;
* proper q-colourings, updated by scanning a uniform colour permutation for
  the first colour not blocked by a neighbour;
* a general two-state conditional-table automaton in the high-noise regime,
  updated through the shared-residual coupler that makes its bounding sets
  collapse.

Each builder returns a :class:`finicode.pca.PcaSpec` whose python update,
closed-form site conditional, bounding rule and jitted kernel are all kept
consistent; the tests cross-check them against each other and against the
enumeration oracles.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from . import _pca_kernels as pk
from ._mix import MASK64
from .pca import (BoundingSpec, GuardExceeded, NoiseCodec, PcaError, PcaSpec,
                  torus_neighbor_array, torus_sites, validate_torus)
from .randomness import AlphabetDistribution

_M63 = (1 << 63) - 1
_INV53 = 1.0 / 9007199254740992.0


def _split_draw(h: int) -> Tuple[int, float]:
    """(activation bit, 53-bit uniform) from one u64; matches the kernels."""
    return h >> 63, ((h & _M63) >> 10) * _INV53


def _offsets(d: int) -> Tuple[Tuple[int, ...], ...]:
    if d == 1:
        return ((-1,), (0,), (1,))
    return ((-1, 0), (0, -1), (0, 0), (0, 1), (1, 0))


def _center_index(d: int) -> int:
    return 1 if d == 1 else 2


# -- threshold spin model ---------------------------------------------------

def ising_thresholds(d: int, beta: float) -> np.ndarray:
    """Cumulative redraw thresholds p_k for neighbour sums k = -2d .. 2d."""
    ks = np.arange(-2 * d, 2 * d + 1)
    return 1.0 / (1.0 + np.exp(-2.0 * beta * ks))


def ising_pca(d: int, beta: float) -> PcaSpec:
    """The two-state threshold automaton at inverse temperature beta.

    Noise symbol: (activation bit, threshold value), threshold taking values
    -2d..2d and a sentinel 2d+1 that never fires.  An active, isolated site
    moves to state 1 exactly when its threshold is at most the neighbour
    spin sum.
    """
    if beta < 0:
        raise PcaError("beta must be >= 0")
    pcum = ising_thresholds(d, beta)
    twod = 2 * d
    n_psi = 4 * d + 2  # threshold ranks incl. sentinel
    center = _center_index(d)

    def decode(h: int) -> tuple:
        phi, u = _split_draw(h)
        rank = int(np.searchsorted(pcum, u, side="right"))
        return phi, rank - twod  # sentinel decodes to 2d + 1

    def index_of(h: int) -> int:
        phi, u = _split_draw(h)
        rank = int(np.searchsorted(pcum, u, side="right"))
        return phi * n_psi + rank

    def describe_index(idx: int) -> tuple:
        phi, rank = divmod(idx, n_psi)
        return phi, rank - twod

    def index_weight(idx: int) -> float:
        rank = idx % n_psi
        lo = 0.0 if rank == 0 else pcum[rank - 1]
        hi = 1.0 if rank == n_psi - 1 else pcum[rank]
        return 0.5 * (hi - lo)

    def update(states: Sequence[int], noises: Sequence[tuple]) -> int:
        if noises[center][0] != 1:
            return states[center]
        for k, noise in enumerate(noises):
            if k != center and noise[0] == 1:
                return states[center]
        ksum = sum(2 * states[k] - 1 for k in range(len(states))
                   if k != center)
        return 1 if noises[center][1] <= ksum else 0

    def site_conditional(neighbor_states: Sequence[int]) -> np.ndarray:
        ksum = sum(2 * s - 1 for s in neighbor_states)
        p1 = pcum[ksum + twod]
        return np.array([1.0 - p1, p1])

    def update_sets(sets: Sequence[frozenset],
                    noises: Sequence[tuple]) -> frozenset:
        if noises[center][0] != 1:
            return frozenset(sets[center])
        for k, noise in enumerate(noises):
            if k != center and noise[0] == 1:
                return frozenset(sets[center])
        klo = sum(2 * min(sets[k]) - 1 for k in range(len(sets))
                  if k != center)
        khi = sum(2 * max(sets[k]) - 1 for k in range(len(sets))
                  if k != center)
        psi = noises[center][1]
        return frozenset({1 if psi <= klo else 0, 1 if psi <= khi else 0})

    codec = NoiseCodec(2 * n_psi, decode, index_of, describe_index,
                       index_weight)
    return PcaSpec(d=d, state_labels=[-1, 1], offsets=_offsets(d),
                   codec=codec, update=update,
                   bounding=BoundingSpec(2, update_sets),
                   site_conditional=site_conditional,
                   kernel="ising", params={"beta": beta, "pcum": pcum})


# -- proper colourings ------------------------------------------------------

def symbol_distribution(pca: PcaSpec) -> AlphabetDistribution:
    """The per-cell alphabet law of a model as an explicit distribution."""
    n = pca.codec.n_symbols
    if n is None:
        raise PcaError("model has no enumerable noise alphabet")
    return AlphabetDistribution(
        list(range(n)), [pca.codec.index_weight(i) for i in range(n)])


def lehmer_decode(code: int, q: int) -> Tuple[int, ...]:
    """Permutation of 0..q-1 from its factoradic index; kernel-identical."""
    avail = list(range(q))
    perm = []
    for k in range(q - 1, -1, -1):
        f = math.factorial(k)
        j, code = divmod(code, f)
        perm.append(avail.pop(j))
    return tuple(perm)


def coloring_pca(d: int, q: int) -> PcaSpec:
    """Proper q-colourings under permutation-scan redraws.

    Noise symbol: (activation bit, uniform permutation of the colours).  An
    active isolated site takes the first colour of its permutation not used
    by any neighbour; with q > 2d that colour always exists.
    """
    if q <= 2 * d:
        raise PcaError(f"need q > {2 * d} colours for d={d}")
    if q > 10:
        raise PcaError("colour permutations limited to q <= 10")
    fact = math.factorial(q)
    center = _center_index(d)

    def decode(h: int) -> tuple:
        phi = h >> 63
        return phi, lehmer_decode((h & _M63) % fact, q)

    def index_of(h: int) -> int:
        phi = h >> 63
        return phi * fact + (h & _M63) % fact

    def describe_index(idx: int) -> tuple:
        phi, code = divmod(idx, fact)
        return phi, lehmer_decode(code, q)

    def index_weight(idx: int) -> float:
        return 0.5 / fact

    def update(states: Sequence[int], noises: Sequence[tuple]) -> int:
        if noises[center][0] != 1:
            return states[center]
        for k, noise in enumerate(noises):
            if k != center and noise[0] == 1:
                return states[center]
        blocked = {states[k] for k in range(len(states)) if k != center}
        for c in noises[center][1]:
            if c not in blocked:
                return c
        raise PcaError("no admissible colour (q too small)")

    def site_conditional(neighbor_states: Sequence[int]) -> np.ndarray:
        blocked = set(neighbor_states)
        vec = np.array([0.0 if c in blocked else 1.0 for c in range(q)])
        return vec / vec.sum()

    def update_sets(sets: Sequence[frozenset],
                    noises: Sequence[tuple]) -> frozenset:
        if noises[center][0] != 1:
            return frozenset(sets[center])
        for k, noise in enumerate(noises):
            if k != center and noise[0] == 1:
                return frozenset(sets[center])
        perm = noises[center][1]
        neighbor_sets = [sets[k] for k in range(len(sets)) if k != center]
        out = set()
        for combo in _product_sets(neighbor_sets):
            blocked = set(combo)
            for c in perm:
                if c not in blocked:
                    out.add(c)
                    break
        return frozenset(out)

    codec = NoiseCodec(2 * fact, decode, index_of, describe_index,
                       index_weight)
    return PcaSpec(d=d, state_labels=list(range(1, q + 1)),
                   offsets=_offsets(d), codec=codec, update=update,
                   bounding=BoundingSpec(q, update_sets),
                   site_conditional=site_conditional,
                   kernel="coloring" if d == 1 else "",
                   params={"q": q})


def _product_sets(sets: Sequence[frozenset]):
    if not sets:
        yield ()
        return
    for head in sorted(sets[0]):
        for rest in _product_sets(sets[1:]):
            yield (head,) + rest


# -- conditional-table automaton --------------------------------------------

@dataclass
class CondTable:
    """P(state | neighbour configuration) for a two-state model on Z^2.

    ``p1[combo]`` is the probability of state index 1 given the neighbour
    combo; combo bits follow the lexicographic neighbour offsets
    (-1,0),(0,-1),(0,1),(1,0), first offset in the most significant bit.
    """

    labels: List
    p1: np.ndarray

    def __post_init__(self):
        self.p1 = np.asarray(self.p1, dtype=np.float64)
        if len(self.labels) != 2:
            raise PcaError("conditional tables support exactly two states")
        if self.p1.shape != (16,):
            raise PcaError("need one row per 2^4 neighbour combinations")
        if np.any(self.p1 < 0) or np.any(self.p1 > 1):
            raise PcaError("conditional probabilities outside [0, 1]")

    def free_weights(self) -> Tuple[float, float, float]:
        """(g0, g1, gamma): the coupled part of the update distribution."""
        g1 = float(self.p1.min())
        g0 = float((1.0 - self.p1).min())
        return g0, g1, g0 + g1

    def high_noise_margin(self) -> float:
        """gamma - (1 - 1/(2d)); positive means the coupler can certify."""
        return self.free_weights()[2] - 0.75


def ising_conditional_table(beta: float) -> CondTable:
    """The d=2 threshold model's conditionals as an explicit table."""
    p1 = np.empty(16)
    for combo in range(16):
        ksum = sum(2 * ((combo >> (3 - j)) & 1) - 1 for j in range(4))
        p1[combo] = 1.0 / (1.0 + math.exp(-2.0 * beta * ksum))
    return CondTable(labels=[-1, 1], p1=p1)


_TABLE_NEIGHBOR_COLS = ["n_xm", "n_ym", "n_yp", "n_xp"]


def table_to_csv(table: CondTable, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_TABLE_NEIGHBOR_COLS
                   + [f"p:{lab}" for lab in table.labels])
        for combo in range(16):
            bits = [(combo >> (3 - j)) & 1 for j in range(4)]
            row = [table.labels[b] for b in bits]
            w.writerow(row + [repr(float(1.0 - table.p1[combo])),
                              repr(float(table.p1[combo]))])


def table_from_csv(path) -> CondTable:
    """Load a conditional table; validates coverage and row normalization."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or len(rows[0]) != 6:
        raise PcaError("expected 4 neighbour columns and 2 probability columns")
    header = rows[0]
    if header[:4] != _TABLE_NEIGHBOR_COLS:
        raise PcaError(f"neighbour columns must be {_TABLE_NEIGHBOR_COLS}")
    labels = [_parse_label(h[2:]) for h in header[4:]]
    if labels[0] == labels[1]:
        raise PcaError("state labels must differ")
    p1 = np.full(16, -1.0)
    for row in rows[1:]:
        if not row:
            continue
        bits = []
        for cell in row[:4]:
            val = _parse_label(cell)
            if val not in labels:
                raise PcaError(f"unknown neighbour state {cell!r}")
            bits.append(labels.index(val))
        combo = bits[0] * 8 + bits[1] * 4 + bits[2] * 2 + bits[3]
        if p1[combo] >= 0:
            raise PcaError("duplicate neighbour configuration row")
        p0, pv1 = float(row[4]), float(row[5])
        if abs(p0 + pv1 - 1.0) > 1e-12:
            raise PcaError(f"row for combo {combo} sums to {p0 + pv1!r}")
        p1[combo] = pv1
    if np.any(p1 < 0):
        raise PcaError("missing neighbour configuration rows")
    return CondTable(labels=labels, p1=p1)


def _parse_label(text: str):
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        return text


def conditional_table_pca(table: CondTable,
                          allow_low_noise: bool = False) -> PcaSpec:
    """Two-state automaton from an explicit conditional table (d=2 only).

    Refuses tables without the high-noise margin unless overridden: below
    that margin the shared-residual coupler has no certification guarantee
    and the exact sampler may never terminate.
    """
    g0, g1, gamma = table.free_weights()
    if table.high_noise_margin() <= 0 and not allow_low_noise:
        raise PcaError(
            f"coupled weight {gamma:.4f} <= 0.75; not in the high-noise "
            "regime (pass allow_low_noise=True to accept non-termination risk)")
    p1 = table.p1
    center = _center_index(2)

    def decode(h: int) -> tuple:
        return _split_draw(h)

    def update(states: Sequence[int], noises: Sequence[tuple]) -> int:
        if noises[center][0] != 1:
            return states[center]
        for k, noise in enumerate(noises):
            if k != center and noise[0] == 1:
                return states[center]
        u = noises[center][1]
        if u < gamma:
            return 0 if u < g0 else 1
        up = (u - gamma) / (1.0 - gamma)
        combo = 0
        for k in range(len(states)):
            if k != center:
                combo = combo * 2 + states[k]
        r0 = (1.0 - p1[combo] - g0) / (1.0 - gamma)
        return 0 if up < r0 else 1

    def site_conditional(neighbor_states: Sequence[int]) -> np.ndarray:
        combo = 0
        for s in neighbor_states:
            combo = combo * 2 + s
        return np.array([1.0 - p1[combo], float(p1[combo])])

    def update_sets(sets: Sequence[frozenset],
                    noises: Sequence[tuple]) -> frozenset:
        if noises[center][0] != 1:
            return frozenset(sets[center])
        for k, noise in enumerate(noises):
            if k != center and noise[0] == 1:
                return frozenset(sets[center])
        u = noises[center][1]
        if u < gamma:
            return frozenset({0 if u < g0 else 1})
        up = (u - gamma) / (1.0 - gamma)
        out = set()
        neighbor_sets = [sets[k] for k in range(len(sets)) if k != center]
        for sel in _product_sets(neighbor_sets):
            combo = 0
            for s in sel:
                combo = combo * 2 + s
            r0 = (1.0 - p1[combo] - g0) / (1.0 - gamma)
            out.add(0 if up < r0 else 1)
        return frozenset(out)

    codec = NoiseCodec(None, decode)
    return PcaSpec(d=2, state_labels=list(table.labels), offsets=_offsets(2),
                   codec=codec, update=update,
                   bounding=BoundingSpec(2, update_sets),
                   site_conditional=site_conditional,
                   kernel="table",
                   params={"p1": p1, "g0": g0, "g1": g1, "gamma": gamma})


# -- batched exact sampling through the jitted kernels ----------------------

@dataclass
class BatchSamples:
    values: np.ndarray        # (n_samples, n_sites) state indices
    full_depth: np.ndarray    # doubling depth certified per sample
    origin_depth: np.ndarray | None  # bisected minimal depth at site 0


def cftp_sample_batch(pca: PcaSpec, seed: int, extent, n_samples: int,
                      guard_depth: int = 1 << 14,
                      want_origin_depth: bool = False,
                      allow_small: bool = False) -> BatchSamples:
    """Many exact equilibrium samples via the model's jitted kernel.

    Sample k uses the subseed ``derive_seed(seed, k)``, the same derivation
    the generic python driver applies, so the two routes are comparable
    draw for draw.
    """
    if not (0 <= seed <= MASK64):
        raise PcaError("seed must fit in 64 bits")
    lx, ly = validate_torus(pca, extent, allow_small)
    sites = torus_sites(lx, ly)
    xs = np.array([s[0] for s in sites], np.int64)
    ys = np.array([s[1] for s in sites], np.int64)
    if pca.kernel == "ising":
        nb = torus_neighbor_array(pca, lx, ly)
        values, tstar, odepth, fail = pk.ising_cftp_torus_batch(
            np.uint64(seed), n_samples, xs, ys, nb, 2 * pca.d,
            pca.params["pcum"], guard_depth, 0,
            1 if want_origin_depth else 0)
    elif pca.kernel == "coloring":
        values, tstar, fail = pk.coloring_cftp_cycle_batch(
            np.uint64(seed), n_samples, lx, pca.params["q"], guard_depth)
        odepth = None
    elif pca.kernel == "table":
        nb = torus_neighbor_array(pca, lx, ly)
        values, tstar, fail = pk.table_cftp_torus_batch(
            np.uint64(seed), n_samples, xs, ys, nb, pca.params["p1"],
            pca.params["g0"], pca.params["g1"], guard_depth)
        odepth = None
    else:
        raise PcaError(f"no batch kernel for model kind {pca.kernel!r}")
    n_failed = int(fail.sum())
    if n_failed:
        raise GuardExceeded(
            f"{n_failed} of {n_samples} runs hit the depth guard "
            f"{guard_depth}", depth=guard_depth)
    return BatchSamples(values=values, full_depth=tstar,
                        origin_depth=odepth if want_origin_depth else None)


def equilibrium_patch_batch(beta: float, seed: int, n_samples: int,
                            patch_radius: int,
                            guard_depth: int = 1 << 14) -> Tuple[np.ndarray,
                                                                 np.ndarray]:
    """Exact d=1 infinite-line equilibrium samples on a centre patch.

    Returns (patch spin indices, minimal patch coalescence depths).  The
    probing window grows with depth, so truncation never biases the patch.
    """
    pcum = ising_thresholds(1, beta)
    patch, tau, fail = pk.ising_cftp_line_batch(
        np.uint64(seed), n_samples, patch_radius, pcum, guard_depth)
    n_failed = int(fail.sum())
    if n_failed:
        raise GuardExceeded(
            f"{n_failed} of {n_samples} line runs hit the depth guard",
            depth=guard_depth)
    return patch, tau
