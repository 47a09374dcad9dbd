"""Independent verification oracles.

Everything here is deliberately dumb and exact: brute-force Gibbs
enumerations, closed-form one-step kernels obtained by summing over
activation patterns, total-variation arithmetic, multinomial bootstrap bands
and tail fits.  The engine modules never import this one; tests use it to
check the fast paths against an independent route.
"""

from __future__ import annotations

from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np
from scipy import stats


# -- lattice adjacency ------------------------------------------------------

def cycle_edges(n: int) -> List[Tuple[int, int]]:
    if n < 3:
        raise ValueError("cycle needs >= 3 sites")
    return [(k, (k + 1) % n) for k in range(n)]


def torus_edges(shape: Sequence[int]) -> List[Tuple[int, int]]:
    """Edges of the periodic box, sites indexed row-major."""
    shape = tuple(shape)
    if len(shape) == 1:
        return cycle_edges(shape[0])
    if len(shape) != 2:
        raise ValueError("only 1- and 2-dimensional tori")
    lx, ly = shape
    edges = set()
    for x in range(lx):
        for y in range(ly):
            a = x * ly + y
            for b in (((x + 1) % lx) * ly + y, x * ly + (y + 1) % ly):
                if a != b:
                    edges.add((min(a, b), max(a, b)))
    return sorted(edges)


def neighbor_lists(n_sites: int, edges: Sequence[Tuple[int, int]]) -> List[List[int]]:
    out: List[List[int]] = [[] for _ in range(n_sites)]
    for a, b in edges:
        out[a].append(b)
        out[b].append(a)
    return [sorted(nb) for nb in out]


# -- exact equilibrium measures --------------------------------------------

def ising_gibbs(shape: Sequence[int], beta: float) -> np.ndarray:
    """Gibbs weights exp(beta * sum_edges x_u x_v) on the torus, normalized.

    Returns a vector over all 2^N spin configurations; configuration code has
    site 0 as the most significant bit, bit 1 meaning spin +1.
    """
    edges = torus_edges(shape)
    n = int(np.prod(shape))
    if n > 20:
        raise ValueError("enumeration limited to 2^20 configurations")
    codes = np.arange(1 << n, dtype=np.int64)
    spins = np.empty((1 << n, n), dtype=np.int8)
    for v in range(n):
        spins[:, v] = np.where((codes >> (n - 1 - v)) & 1 == 1, 1, -1)
    energy = np.zeros(1 << n, dtype=np.float64)
    for a, b in edges:
        energy += spins[:, a].astype(np.float64) * spins[:, b]
    w = np.exp(beta * energy)
    return w / w.sum()


def spins_of_code(code: int, n: int) -> Tuple[int, ...]:
    return tuple(1 if (code >> (n - 1 - v)) & 1 else -1 for v in range(n))


def code_of_spins(spins: Sequence[int]) -> int:
    code = 0
    for s in spins:
        code = (code << 1) | (1 if s > 0 else 0)
    return code


def chromatic_cycle_count(n: int, q: int) -> int:
    """Number of proper q-colourings of the n-cycle."""
    return (q - 1) ** n + (-1) ** n * (q - 1)


def proper_coloring_measure(n_sites: int, edges: Sequence[Tuple[int, int]],
                            q: int) -> np.ndarray:
    """Uniform distribution on proper colourings, over all q^N codes.

    The code has site 0 as the most significant base-q digit.
    """
    if q ** n_sites > 1 << 22:
        raise ValueError("colour enumeration too large")
    total = q ** n_sites
    probs = np.zeros(total, dtype=np.float64)
    proper = []
    for code in range(total):
        cols = colors_of_code(code, n_sites, q)
        if all(cols[a] != cols[b] for a, b in edges):
            proper.append(code)
    probs[proper] = 1.0 / len(proper)
    return probs


def colors_of_code(code: int, n: int, q: int) -> Tuple[int, ...]:
    out = []
    for v in range(n - 1, -1, -1):
        out.append(code // q ** v % q)
    return tuple(out)


def code_of_colors(cols: Sequence[int], q: int) -> int:
    code = 0
    for c in cols:
        code = code * q + int(c)
    return code


def gibbs_conditional(beta: float, spin: int, neighbor_sum: int) -> float:
    """P(spin | neighbours) for the pair-potential exp(beta * s * sum)."""
    return float(np.exp(beta * spin * neighbor_sum)
                 / (2.0 * np.cosh(beta * neighbor_sum)))


# -- exact one-step kernels -------------------------------------------------

def exact_kernel_row(n_sites: int, n_states: int,
                     neighbors: Sequence[Sequence[int]],
                     site_conditional: Callable[[int, Sequence[int]], np.ndarray],
                     x_states: Sequence[int]) -> np.ndarray:
    """One-step distribution of the automaton started from ``x_states``.

    The update structure summed over here: each site flips an independent
    fair activation coin; a site that is active while all its neighbours are
    inactive redraws its state from ``site_conditional(site, x)``; every
    other site keeps its state.  The 2^N activation patterns are enumerated
    exactly, so the row is exact up to float rounding.
    """
    n = n_sites
    row = np.zeros(n_states ** n, dtype=np.float64)
    weight = 0.5 ** n
    for pattern in range(1 << n):
        active = [(pattern >> (n - 1 - v)) & 1 for v in range(n)]
        vec = np.ones(1, dtype=np.float64)
        for v in range(n):
            redraw = active[v] and not any(active[u] for u in neighbors[v])
            if redraw:
                site_vec = np.asarray(site_conditional(v, x_states),
                                      dtype=np.float64)
                if site_vec.shape != (n_states,):
                    raise ValueError("site_conditional returned a bad shape")
            else:
                site_vec = np.zeros(n_states, dtype=np.float64)
                site_vec[x_states[v]] = 1.0
            vec = np.kron(vec, site_vec)
        row += weight * vec
    return row


def apply_kernel(mu: np.ndarray, n_sites: int, n_states: int,
                 neighbors: Sequence[Sequence[int]],
                 site_conditional: Callable[[int, Sequence[int]], np.ndarray],
                 decode: Callable[[int], Sequence[int]]) -> np.ndarray:
    """mu P, summing rows only over the support of mu."""
    out = np.zeros_like(mu)
    for code in np.flatnonzero(mu > 0):
        x = decode(int(code))
        out += mu[code] * exact_kernel_row(n_sites, n_states, neighbors,
                                           site_conditional, x)
    return out


# -- distribution distances and sampling error ------------------------------

def tv_distance(p: np.ndarray, q: np.ndarray) -> float:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("length mismatch")
    return 0.5 * float(np.abs(p - q).sum())


def empirical_distribution(codes: np.ndarray, n_atoms: int) -> np.ndarray:
    counts = np.bincount(np.asarray(codes, dtype=np.int64), minlength=n_atoms)
    if counts.size > n_atoms:
        raise ValueError("sample code out of range")
    return counts / counts.sum()


def perfect_sampler_tv(probs: np.ndarray, n_samples: int, n_boot: int = 1000,
                       seed: int = 0) -> np.ndarray:
    """TV(empirical, truth) for n_boot perfect multinomial samplers."""
    rng = np.random.default_rng(seed)
    out = np.empty(n_boot, dtype=np.float64)
    for b in range(n_boot):
        counts = rng.multinomial(n_samples, probs)
        out[b] = 0.5 * np.abs(counts / n_samples - probs).sum()
    return out

def tv_band(probs: np.ndarray, n_samples: int, n_boot: int = 1000,
            seed: int = 0, alpha: float = 0.001) -> Tuple[float, float, float]:
    """(lo, mean, hi) of the perfect-sampler TV at two-sided level alpha."""
    sims = perfect_sampler_tv(probs, n_samples, n_boot, seed)
    lo, hi = np.quantile(sims, [alpha / 2, 1 - alpha / 2])
    return float(lo), float(sims.mean()), float(hi)


def debiased_tv(empirical: np.ndarray, probs: np.ndarray, n_samples: int,
                n_boot: int = 1000, seed: int = 0) -> float:
    """Observed TV minus the perfect-sampler mean TV at the same n."""
    obs = tv_distance(empirical, probs)
    bias = perfect_sampler_tv(probs, n_samples, n_boot, seed).mean()
    return obs - float(bias)


def two_sample_tv_band(pooled: np.ndarray, n_a: int, n_b: int,
                       n_boot: int = 1000, seed: int = 0,
                       alpha: float = 0.001) -> Tuple[float, float]:
    """Null band for TV between two empirical laws of the same source."""
    rng = np.random.default_rng(seed)
    sims = np.empty(n_boot, dtype=np.float64)
    for b in range(n_boot):
        ca = rng.multinomial(n_a, pooled) / n_a
        cb = rng.multinomial(n_b, pooled) / n_b
        sims[b] = 0.5 * np.abs(ca - cb).sum()
    lo, hi = np.quantile(sims, [alpha / 2, 1 - alpha / 2])
    return float(lo), float(hi)


def chi_square_uniform(counts: np.ndarray) -> float:
    """p-value for uniformity of bin counts."""
    counts = np.asarray(counts, dtype=np.float64)
    return float(stats.chisquare(counts).pvalue)


# -- tail fits --------------------------------------------------------------

def survival(values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(t, P(value > t)) on the observed support."""
    values = np.asarray(values)
    ts = np.unique(values)
    n = values.size
    surv = np.array([(values > t).sum() / n for t in ts], dtype=np.float64)
    return ts.astype(np.float64), surv


def fit_exponential_tail(values: np.ndarray, lower_quantile: float = 0.5,
                         floor: int = 5) -> Dict[str, float]:
    """Least-squares fit of log S(t) ~ a - c t on the upper tail.

    Points below the lower_quantile of the data or with fewer than ``floor``
    exceedances are dropped (the latter are sampling noise).  Returns the
    rate, intercept and R^2 of the fit.
    """
    values = np.asarray(values, dtype=np.float64)
    ts, surv = survival(values)
    n = values.size
    cut = np.quantile(values, lower_quantile)
    keep = (ts >= cut) & (surv * n >= floor) & (surv > 0)
    if keep.sum() < 3:
        raise ValueError("not enough tail points for a fit")
    res = stats.linregress(ts[keep], np.log(surv[keep]))
    return {"rate": -float(res.slope), "intercept": float(res.intercept),
            "r_squared": float(res.rvalue) ** 2, "points": int(keep.sum())}


def fit_stretched_tail(values: np.ndarray, lower_quantile: float = 0.5,
                       floor: int = 5) -> Dict[str, float]:
    """Fit log(-log S(t)) ~ a + c log t; c is the stretching exponent."""
    values = np.asarray(values, dtype=np.float64)
    ts, surv = survival(values)
    n = values.size
    cut = np.quantile(values, lower_quantile)
    keep = (ts >= max(cut, 1.0)) & (surv * n >= floor) & (surv > 0) & (surv < 1)
    if keep.sum() < 3:
        raise ValueError("not enough tail points for a fit")
    res = stats.linregress(np.log(ts[keep]), np.log(-np.log(surv[keep])))
    return {"exponent": float(res.slope), "intercept": float(res.intercept),
            "r_squared": float(res.rvalue) ** 2, "points": int(keep.sum())}
