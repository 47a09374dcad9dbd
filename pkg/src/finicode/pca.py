"""The synchronous automaton abstraction and its exact-sampling driver.

A :class:`PcaSpec` packages the local update rule f, its neighbourhood, the
noise decoding and a set-valued bounding rule.  The functions here run the
dynamics forward (torus or frozen-boundary window) and backward (coupling
from the past with noise reuse), in a deliberately plain python form that the
jitted batch kernels are tested against.

Update convention: the state at time t+1 is
``f(states at t over the offsets, noises at time t over the offsets)``;
stepping from time t consumes the noise layer t.  All three built models use
the activation-gated form: a site redraws only when its own coin is up and
every neighbour's coin is down, which keeps simultaneous redraws
non-adjacent.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

from ._mix import TAG_NOISE, field_u64_py
from .spacetime import l1_norm

Offsets = Tuple[Tuple[int, ...], ...]


class PcaError(ValueError):
    pass


class GuardExceeded(RuntimeError):
    """An iteration guard was hit before the run could certify its result."""

    def __init__(self, message: str, *, depth: int | None = None,
                 steps: int | None = None):
        super().__init__(message)
        self.depth = depth
        self.steps = steps


class NoiseCodec:
    """Decodes the per-site u64 draw into the model's noise symbol.

    ``n_symbols`` is None when the symbol space is too large to enumerate
    (the quantized-uniform models); finite codecs also expose enumeration
    with exact weights for the brute-force oracle route.
    """

    def __init__(self, n_symbols: int | None,
                 decode: Callable[[int], tuple],
                 index_of: Callable[[int], int] | None = None,
                 describe_index: Callable[[int], tuple] | None = None,
                 index_weight: Callable[[int], float] | None = None):
        self.n_symbols = n_symbols
        self._decode = decode
        self._index_of = index_of
        self._describe_index = describe_index
        self._index_weight = index_weight

    def decode(self, h: int) -> tuple:
        """Described noise symbol for a raw u64 field value."""
        return self._decode(h)

    def symbol_index(self, h: int) -> int:
        if self._index_of is None:
            raise PcaError("codec has no finite symbol indexing")
        return self._index_of(h)

    def describe_index(self, idx: int) -> tuple:
        if self._describe_index is None:
            raise PcaError("codec has no finite symbol indexing")
        return self._describe_index(idx)

    def index_weight(self, idx: int) -> float:
        if self._index_weight is None:
            raise PcaError("codec has no enumerable weights")
        return self._index_weight(idx)


@dataclass
class PcaSpec:
    """A finite-state synchronous automaton with i.i.d. noise.

    ``offsets`` lists the dependency neighbourhood (centre included,
    lexicographic order); state and noise dependencies share it.  ``update``
    maps (state indices over offsets, described noises over offsets) to the
    new state index at the centre.  ``site_conditional`` is the closed-form
    law of a redraw given the neighbour states, used by the exact-kernel
    oracle route.  ``bounding`` implements the set-valued dynamics the exact
    sampler runs; ``kernel`` names the jitted fast path ("" = none).
    """

    d: int
    state_labels: List
    offsets: Offsets
    codec: NoiseCodec
    update: Callable[[Sequence[int], Sequence[tuple]], int]
    bounding: "BoundingSpec"
    site_conditional: Callable[[Sequence[int]], np.ndarray] | None = None
    kernel: str = ""
    params: Dict = field(default_factory=dict)

    def __post_init__(self):
        if self.d not in (1, 2):
            raise PcaError(f"unsupported dimension {self.d}")
        zero = (0,) * self.d
        if zero not in self.offsets:
            raise PcaError("offsets must include the centre")
        if list(self.offsets) != sorted(self.offsets):
            raise PcaError("offsets must be lexicographically sorted")

    @property
    def n_states(self) -> int:
        return len(self.state_labels)

    @property
    def reach(self) -> int:
        return max(l1_norm(o) for o in self.offsets)

    def neighbor_offsets(self) -> Offsets:
        zero = (0,) * self.d
        return tuple(o for o in self.offsets if o != zero)


class BoundingSpec:
    """Set-valued companion dynamics containing every trajectory.

    ``update_sets`` maps (frozensets over offsets, described noises over
    offsets) to the new set at the centre.  Exactness of the sampler rests on
    two properties checked by :func:`check_bounding`: containment (any
    selection of states from the input sets maps under f into the output
    set) and singleton consistency (all-singleton inputs give exactly the
    singleton of the f-image).
    """

    def __init__(self, n_states: int,
                 update_sets: Callable[[Sequence[frozenset], Sequence[tuple]],
                                       frozenset]):
        self.n_states = n_states
        self._update_sets = update_sets

    def initial_set(self) -> frozenset:
        return frozenset(range(self.n_states))

    def update_sets(self, sets: Sequence[frozenset],
                    noises: Sequence[tuple]) -> frozenset:
        out = self._update_sets(sets, noises)
        if not out:
            raise PcaError("bounding update produced an empty set")
        return out


# -- domains ----------------------------------------------------------------

def torus_shape(d: int, extent) -> Tuple[int, int]:
    """Normalize a torus extent to (lx, ly); d=1 gets ly = 1."""
    if isinstance(extent, int):
        return (extent, 1) if d == 1 else (extent, extent)
    t = tuple(int(e) for e in extent)
    if d == 1 and len(t) == 1:
        return t[0], 1
    if d == 2 and len(t) == 2:
        return t
    raise PcaError(f"bad extent {extent!r} for d={d}")


def validate_torus(pca: PcaSpec, extent, allow_small: bool = False):
    lx, ly = torus_shape(pca.d, extent)
    need = 2 * pca.reach + 1
    sides = (lx,) if pca.d == 1 else (lx, ly)
    if min(sides) < need and not allow_small:
        raise PcaError(
            f"torus side {min(sides)} < {need}; neighbourhoods would wrap "
            "onto themselves (pass allow_small=True to override)")
    return lx, ly


def torus_sites(lx: int, ly: int) -> List[Tuple[int, int]]:
    return [(x, y) for x in range(lx) for y in range(ly)]


def torus_neighbor_array(pca: PcaSpec, lx: int, ly: int) -> np.ndarray:
    """Linear site indices of each site's neighbours, offset order."""
    nbo = pca.neighbor_offsets()
    out = np.empty((lx * ly, len(nbo)), np.int64)
    for s, (x, y) in enumerate(torus_sites(lx, ly)):
        for k, off in enumerate(nbo):
            ox = off[0]
            oy = off[1] if pca.d == 2 else 0
            out[s, k] = ((x + ox) % lx) * ly + (y + oy) % ly
    return out


def _raw_fn(source_or_seed):
    if hasattr(source_or_seed, "raw_u64"):
        return lambda x, y, i: source_or_seed.raw_u64((x, y), i)
    seed = int(source_or_seed)
    return lambda x, y, i: field_u64_py(seed, TAG_NOISE, x, y, i)


# -- forward evolution ------------------------------------------------------

def evolve_torus(pca: PcaSpec, source_or_seed, extent, init: np.ndarray,
                 steps: int, t_start: int = 0,
                 allow_small: bool = False) -> np.ndarray:
    """Run the automaton ``steps`` layers forward on the torus.

    ``init`` holds state indices, flat over row-major sites.  The layer at
    absolute time t consumes the noise field at time t, so restarting from
    an earlier t_start with the same source replays identical randomness.
    """
    lx, ly = validate_torus(pca, extent, allow_small)
    raw = _raw_fn(source_or_seed)
    sites = torus_sites(lx, ly)
    n = len(sites)
    state = np.array(init, dtype=np.int64).reshape(n).copy()
    if state.min() < 0 or state.max() >= pca.n_states:
        raise PcaError("initial state out of range")
    offs = pca.offsets
    for t in range(t_start, t_start + steps):
        noises = [pca.codec.decode(raw(x, y, t)) for (x, y) in sites]
        new = state.copy()
        for s, (x, y) in enumerate(sites):
            patch_states = []
            patch_noises = []
            for off in offs:
                ox = off[0]
                oy = off[1] if pca.d == 2 else 0
                idx = ((x + ox) % lx) * ly + (y + oy) % ly
                patch_states.append(int(state[idx]))
                patch_noises.append(noises[idx])
            new[s] = pca.update(patch_states, patch_noises)
        state = new
    return state


def evolve_window(pca: PcaSpec, source_or_seed, radius: int,
                  init: np.ndarray, steps: int, t_start: int = 0
                  ) -> Tuple[np.ndarray, np.ndarray]:
    """Finite-window run with a frozen boundary and a certified core.

    Sites live on the l1 box of the given radius (d=1: [-r, r]; d=2 the
    square box).  Sites whose full neighbourhood lies inside the window
    update normally; the rest stay frozen at their current value.  Returns
    (final states, certified mask): certified sites are those a boundary
    effect cannot have reached, and their values equal the infinite-lattice
    run from the same initial field.
    """
    d = pca.d
    raw = _raw_fn(source_or_seed)
    if d == 1:
        sites = [(x, 0) for x in range(-radius, radius + 1)]
    else:
        sites = [(x, y) for x in range(-radius, radius + 1)
                 for y in range(-radius, radius + 1)]
    index = {s: k for k, s in enumerate(sites)}
    n = len(sites)
    state = np.array(init, dtype=np.int64).reshape(n).copy()
    offs = pca.offsets
    for t in range(t_start, t_start + steps):
        noises = {s: pca.codec.decode(raw(s[0], s[1], t)) for s in sites}
        new = state.copy()
        for s, (x, y) in enumerate(sites):
            patch_states = []
            patch_noises = []
            interior = True
            for off in offs:
                ox = off[0]
                oy = off[1] if d == 2 else 0
                site = (x + ox, y + oy)
                if site not in index:
                    interior = False
                    break
                patch_states.append(int(state[index[site]]))
                patch_noises.append(noises[site])
            if interior:
                new[s] = pca.update(patch_states, patch_noises)
        state = new
    reach = pca.reach
    certified = np.array(
        [max(abs(x), abs(y)) <= radius - steps * reach for (x, y) in sites],
        dtype=bool)
    return state, certified


# -- exact sampling ---------------------------------------------------------

@dataclass
class PcaSample:
    values: np.ndarray            # state indices, flat row-major
    depth: int                    # coalescence depth the run certified at
    vertex_depths: np.ndarray | None = None


def _bounding_sweep(pca: PcaSpec, raw, lx: int, ly: int, depth: int
                    ) -> List[frozenset]:
    sites = torus_sites(lx, ly)
    n = len(sites)
    sets = [pca.bounding.initial_set() for _ in range(n)]
    offs = pca.offsets
    for t in range(-depth, 0):
        noises = [pca.codec.decode(raw(x, y, t)) for (x, y) in sites]
        new = list(sets)
        for s, (x, y) in enumerate(sites):
            patch_sets = []
            patch_noises = []
            for off in offs:
                ox = off[0]
                oy = off[1] if pca.d == 2 else 0
                idx = ((x + ox) % lx) * ly + (y + oy) % ly
                patch_sets.append(sets[idx])
                patch_noises.append(noises[idx])
            new[s] = pca.bounding.update_sets(patch_sets, patch_noises)
        sets = new
    return sets


def cftp_sample(pca: PcaSpec, seed_or_source, extent,
                guard_depth: int = 1 << 14, want_vertex_depths: bool = False,
                allow_small: bool = False) -> PcaSample:
    """One exact equilibrium sample on the torus, generic python route.

    Doubles the start depth until the set-valued sweep collapses everywhere;
    the noise field is a pure function of (site, time) so deeper restarts
    reuse shallower layers unchanged.  Raises :class:`GuardExceeded` if the
    guard depth is reached without coalescence.
    """
    lx, ly = validate_torus(pca, extent, allow_small)
    raw = _raw_fn(seed_or_source)
    depth = 1
    memo: Dict[int, List[frozenset]] = {}
    while depth <= guard_depth:
        sets = _bounding_sweep(pca, raw, lx, ly, depth)
        memo[depth] = sets
        if all(len(c) == 1 for c in sets):
            break
        depth *= 2
    else:
        raise GuardExceeded(
            f"no coalescence by depth {guard_depth}", depth=guard_depth)
    values = np.array([next(iter(c)) for c in sets], dtype=np.int64)
    vdep = None
    if want_vertex_depths:
        n = lx * ly
        vdep = np.empty(n, np.int64)
        for s in range(n):
            t_lo, t_hi = 1, depth
            while t_lo < t_hi:
                mid = (t_lo + t_hi) // 2
                if mid not in memo:
                    memo[mid] = _bounding_sweep(pca, raw, lx, ly, mid)
                if len(memo[mid][s]) == 1:
                    t_hi = mid
                else:
                    t_lo = mid + 1
            vdep[s] = t_lo
    return PcaSample(values=values, depth=depth, vertex_depths=vdep)


# -- contract checks --------------------------------------------------------

def check_totality(pca: PcaSpec, budget: int = 10 ** 6,
                   probe: int = 10 ** 5, seed: int = 0) -> str:
    """Verify f returns a valid state on its whole domain (or a probe).

    Exhaustive when |S|^|F| * |A|^|F| fits the budget and the codec is
    enumerable; otherwise a seeded random probe.  Returns which route ran.
    """
    k = len(pca.offsets)
    ns = pca.n_states
    na = pca.codec.n_symbols
    exhaustive = (na is not None and (ns ** k) * (na ** k) <= budget)
    if exhaustive:
        states = [()]
        for _ in range(k):
            states = [s + (v,) for s in states for v in range(ns)]
        noise_idx = [()]
        for _ in range(k):
            noise_idx = [s + (v,) for s in noise_idx for v in range(na)]
        for st in states:
            for ni in noise_idx:
                described = [pca.codec.describe_index(i) for i in ni]
                out = pca.update(st, described)
                if not (0 <= out < ns):
                    raise PcaError(f"update out of range on {st}, {ni}")
        return "exhaustive"
    rng = np.random.default_rng(seed)
    for _ in range(probe):
        st = [int(v) for v in rng.integers(0, ns, size=k)]
        described = [pca.codec.decode(int(h)) for h in
                     rng.integers(0, 1 << 64, size=k, dtype=np.uint64)]
        out = pca.update(st, described)
        if not (0 <= out < ns):
            raise PcaError(f"update out of range on probed input {st}")
    return "probe"


def check_bounding(pca: PcaSpec, n_cases: int = 500, seed: int = 0) -> None:
    """Containment and singleton consistency of the bounding dynamics."""
    rng = np.random.default_rng(seed)
    k = len(pca.offsets)
    ns = pca.n_states
    for _ in range(n_cases):
        sets = []
        for _ in range(k):
            size = int(rng.integers(1, ns + 1))
            sets.append(frozenset(
                int(v) for v in rng.choice(ns, size=size, replace=False)))
        described = [pca.codec.decode(int(h)) for h in
                     rng.integers(0, 1 << 64, size=k, dtype=np.uint64)]
        out = pca.bounding.update_sets(sets, described)
        for _ in range(8):
            sel = [int(rng.choice(sorted(s))) for s in sets]
            img = pca.update(sel, described)
            if img not in out:
                raise PcaError(
                    f"containment breach: f{tuple(sel)} = {img} not in {out}")
        singles = [frozenset([int(rng.choice(sorted(s)))]) for s in sets]
        sel = [next(iter(s)) for s in singles]
        out1 = pca.bounding.update_sets(singles, described)
        if out1 != frozenset([pca.update(sel, described)]):
            raise PcaError("singleton inconsistency in bounding update")
