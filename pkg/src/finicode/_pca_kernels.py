"""Jitted exact-sampling kernels for the three lattice models.

Each kernel mirrors the generic python driver in :mod:`finicode.pca` on the
same noise field (identical seed derivation, identical draw decoding); the
tests assert bit-identical output at small scale.  State encodings here are
flat and model-specific: spin indices 0/1, colour bitmasks, two-state
bitmasks for the conditional-table automaton.

Noise convention shared with the object layer: one u64 per (site, time);
the top bit is the activation coin (probability 1/2), the remaining 63 bits
feed, through the 53-bit dyadic grid, whatever threshold or permutation the
model needs.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

from ._mix import TAG_NOISE, field_u64, mix64

_M63 = np.uint64((1 << 63) - 1)
_U10 = np.uint64(10)
_U63 = np.uint64(63)
_INV53 = 1.0 / 9007199254740992.0
_GOLD = np.uint64(0x9E3779B97F4A7C15)


@njit(cache=True)
def derive_seed(seed, k):
    """Per-run subseed; keyed so distinct runs get independent fields."""
    return mix64(np.uint64(seed) ^ mix64((np.uint64(k) + np.uint64(1)) * _GOLD))


@njit(cache=True)
def draw_phi_u(seed, x, y, t):
    """(activation bit, 53-bit threshold uniform) at one space-time site."""
    h = field_u64(seed, TAG_NOISE, x, y, t)
    phi = np.int64(h >> _U63)
    u = np.float64(((h & _M63) >> _U10)) * _INV53
    return phi, u


# -- subcritical spin model -------------------------------------------------

@njit(cache=True)
def _ising_evolve(sseed, xs, ys, nb, twod, pcum, depth, lo, hi, nlo, nhi,
                  phi, uu):
    """Sandwich evolution from the full interval at time -depth to time 0.

    Returns True when every site has collapsed to a single state.
    """
    n = xs.size
    for s in range(n):
        lo[s] = 0
        hi[s] = 1
    for t in range(-depth, 0):
        for s in range(n):
            p, u = draw_phi_u(sseed, xs[s], ys[s], t)
            phi[s] = p
            uu[s] = u
        for s in range(n):
            act = phi[s] == 1
            if act:
                for k in range(twod):
                    if phi[nb[s, k]] == 1:
                        act = False
                        break
            if act:
                klo = -twod
                khi = -twod
                for k in range(twod):
                    klo += 2 * lo[nb[s, k]]
                    khi += 2 * hi[nb[s, k]]
                nlo[s] = 1 if uu[s] < pcum[klo + twod] else 0
                nhi[s] = 1 if uu[s] < pcum[khi + twod] else 0
            else:
                nlo[s] = lo[s]
                nhi[s] = hi[s]
        for s in range(n):
            lo[s] = nlo[s]
            hi[s] = nhi[s]
    for s in range(n):
        if lo[s] != hi[s]:
            return False
    return True


@njit(cache=True, parallel=True)
def ising_cftp_torus_batch(seed, n_samples, xs, ys, nb, twod, pcum,
                           guard_depth, origin_site, want_origin_depth):
    """Exact torus samples; per-sample full-coalescence depth and, on
    request, the bisected minimal depth at one marked site."""
    n = xs.size
    values = np.empty((n_samples, n), np.int8)
    tstar = np.empty(n_samples, np.int64)
    odepth = np.full(n_samples, -1, np.int64)
    fail = np.zeros(n_samples, np.uint8)
    for smp in prange(n_samples):
        sseed = derive_seed(seed, smp)
        lo = np.empty(n, np.int8)
        hi = np.empty(n, np.int8)
        nlo = np.empty(n, np.int8)
        nhi = np.empty(n, np.int8)
        phi = np.empty(n, np.int64)
        uu = np.empty(n, np.float64)
        depth = 1
        done = False
        while depth <= guard_depth:
            if _ising_evolve(sseed, xs, ys, nb, twod, pcum, depth,
                             lo, hi, nlo, nhi, phi, uu):
                done = True
                break
            depth *= 2
        if not done:
            fail[smp] = 1
            tstar[smp] = -1
            continue
        tstar[smp] = depth
        for s in range(n):
            values[smp, s] = lo[s]
        if want_origin_depth:
            t_lo = 1
            t_hi = depth
            while t_lo < t_hi:
                mid = (t_lo + t_hi) // 2
                _ising_evolve(sseed, xs, ys, nb, twod, pcum, mid,
                              lo, hi, nlo, nhi, phi, uu)
                if lo[origin_site] == hi[origin_site]:
                    t_hi = mid
                else:
                    t_lo = mid + 1
            odepth[smp] = t_lo
    return values, tstar, odepth, fail


@njit(cache=True)
def _ising_line_evolve(sseed, depth, pr, pcum, lo, hi, nlo, nhi, phi, uu):
    """Window sandwich on the line, radius depth + pr; interior updates only.

    The two boundary cells never update, which is harmless: sites within pr
    of the centre sit outside the boundary's forward cone.  Returns True
    when the centre patch [-pr, pr] has collapsed.
    """
    rad = depth + pr
    n = 2 * rad + 1
    for s in range(n):
        lo[s] = 0
        hi[s] = 1
    for t in range(-depth, 0):
        for s in range(n):
            p, u = draw_phi_u(sseed, s - rad, 0, t)
            phi[s] = p
            uu[s] = u
        for s in range(n):
            nlo[s] = lo[s]
            nhi[s] = hi[s]
        for s in range(1, n - 1):
            if phi[s] == 1 and phi[s - 1] == 0 and phi[s + 1] == 0:
                klo = lo[s - 1] + lo[s + 1] - 1
                khi = hi[s - 1] + hi[s + 1] - 1
                nlo[s] = 1 if uu[s] < pcum[2 * klo + 2] else 0
                nhi[s] = 1 if uu[s] < pcum[2 * khi + 2] else 0
        for s in range(n):
            lo[s] = nlo[s]
            hi[s] = nhi[s]
    for s in range(rad - pr, rad + pr + 1):
        if lo[s] != hi[s]:
            return False
    return True


@njit(cache=True, parallel=True)
def ising_cftp_line_batch(seed, n_samples, pr, pcum, guard_depth):
    """Exact samples of the infinite-line equilibrium on a centre patch.

    The window grows with the probed depth, so the frozen boundary never
    enters the patch's dependency cone and the sample is exact for the
    infinite system.  Returns patch values, the minimal (bisected) patch
    coalescence depth, and failure flags.
    """
    width = 2 * pr + 1
    patch = np.empty((n_samples, width), np.int8)
    tau = np.empty(n_samples, np.int64)
    fail = np.zeros(n_samples, np.uint8)
    for smp in prange(n_samples):
        sseed = derive_seed(seed, smp)
        nmax = 2 * (guard_depth + pr) + 1
        lo = np.empty(nmax, np.int8)
        hi = np.empty(nmax, np.int8)
        nlo = np.empty(nmax, np.int8)
        nhi = np.empty(nmax, np.int8)
        phi = np.empty(nmax, np.int64)
        uu = np.empty(nmax, np.float64)
        depth = 1
        done = False
        while depth <= guard_depth:
            if _ising_line_evolve(sseed, depth, pr, pcum,
                                  lo, hi, nlo, nhi, phi, uu):
                done = True
                break
            depth *= 2
        if not done:
            fail[smp] = 1
            tau[smp] = -1
            continue
        t_lo = 1
        t_hi = depth
        while t_lo < t_hi:
            mid = (t_lo + t_hi) // 2
            if _ising_line_evolve(sseed, mid, pr, pcum,
                                  lo, hi, nlo, nhi, phi, uu):
                t_hi = mid
            else:
                t_lo = mid + 1
        tau[smp] = t_lo
        _ising_line_evolve(sseed, t_lo, pr, pcum, lo, hi, nlo, nhi, phi, uu)
        rad = t_lo + pr
        for k in range(width):
            patch[smp, k] = lo[rad - pr + k]
    return patch, tau, fail


@njit(cache=True)
def ising_cone_coalesced(zvals, nx_center, depth):
    """Sandwich driven by revealed symbols on the backward cone of one site.

    One-dimensional version.  ``zvals`` is a (sites, ages) slab of symbol
    indices with -1 marking absent cells; ``nx_center`` is the slab row of
    the probed site.  A symbol at age j plays the noise of layer -j, so the
    slab prefix over the cone of radius ``depth`` drives a sandwich started
    from the full interval at depth ``depth``.  Symbol encoding: idx =
    phi * 6 + rank with rank r meaning threshold value r - 2 (rank 5 is the
    sentinel that never fires).

    Returns 0 (not coalesced), 1 (coalesced to spin index 0), 5 (coalesced
    to spin index 1) or 2 (a needed cell is missing, an invariant breach).
    """
    width = 2 * depth + 1
    lo = np.empty(width, np.int8)
    hi = np.empty(width, np.int8)
    nlo = np.empty(width, np.int8)
    nhi = np.empty(width, np.int8)
    for s in range(width):
        lo[s] = 0
        hi[s] = 1
    for step in range(depth):
        j = depth - step          # consuming layer -j, ages j
        reach = depth - step - 1  # sites needed after this layer
        for s in range(width):
            nlo[s] = lo[s]
            nhi[s] = hi[s]
        if nx_center - depth < 0 or nx_center + depth >= zvals.shape[0] \
                or j >= zvals.shape[1]:
            return 2
        for off in range(-reach, reach + 1):
            s = off + depth
            sym_c = zvals[nx_center + off, j]
            sym_l = zvals[nx_center + off - 1, j]
            sym_r = zvals[nx_center + off + 1, j]
            if sym_c < 0 or sym_l < 0 or sym_r < 0:
                return 2
            phi_c = sym_c // 6
            if phi_c == 1 and sym_l // 6 == 0 and sym_r // 6 == 0:
                rank = sym_c % 6
                # spin sum 2(a+b)-2 lands on threshold index 2(a+b);
                # rank r fires exactly when u < pcum[r..], so the redraw
                # hits +1 when rank <= that index
                klo = 2 * (lo[s - 1] + lo[s + 1])
                khi = 2 * (hi[s - 1] + hi[s + 1])
                nlo[s] = 1 if rank <= klo else 0
                nhi[s] = 1 if rank <= khi else 0
        for s in range(width):
            lo[s] = nlo[s]
            hi[s] = nhi[s]
    if zvals[nx_center, 0] < 0:
        return 2
    if lo[depth] != hi[depth]:
        return 0
    return 1 + 4 * lo[depth]


# -- proper colourings ------------------------------------------------------

@njit(cache=True)
def _perm_decode(code, q, fact_table, perm, avail):
    """Factoradic decode of code in [0, q!) into a permutation of 0..q-1."""
    for k in range(q):
        avail[k] = k
    left = q
    for k in range(q):
        f = fact_table[q - 1 - k]
        j = code // f
        code -= j * f
        perm[k] = avail[j]
        for m in range(j, left - 1):
            avail[m] = avail[m + 1]
        left -= 1


@njit(cache=True)
def _coloring_evolve(sseed, n, q, fact, fact_table, depth, masks, nmasks,
                     phi, u63, perm, avail):
    full = (1 << q) - 1
    for s in range(n):
        masks[s] = full
    for t in range(-depth, 0):
        for s in range(n):
            h = field_u64(sseed, TAG_NOISE, s, 0, t)
            phi[s] = np.int64(h >> _U63)
            u63[s] = np.int64(h & _M63)
        for s in range(n):
            lft = (s - 1) % n
            rgt = (s + 1) % n
            if phi[s] == 1 and phi[lft] == 0 and phi[rgt] == 0:
                _perm_decode(u63[s] % fact, q, fact_table, perm, avail)
                ml = masks[lft]
                mr = masks[rgt]
                acc = 0
                for a in range(q):
                    if (ml >> a) & 1 == 0:
                        continue
                    for b in range(q):
                        if (mr >> b) & 1 == 0:
                            continue
                        forb = (1 << a) | (1 << b)
                        for k in range(q):
                            c = perm[k]
                            if (forb >> c) & 1 == 0:
                                acc |= 1 << c
                                break
                nmasks[s] = acc
            else:
                nmasks[s] = masks[s]
        for s in range(n):
            masks[s] = nmasks[s]
    for s in range(n):
        m = masks[s]
        if m & (m - 1) != 0:
            return False
    return True


@njit(cache=True, parallel=True)
def coloring_cftp_cycle_batch(seed, n_samples, n, q, guard_depth):
    """Exact uniform proper colourings of the n-cycle via the bounding sets."""
    fact_table = np.empty(q + 1, np.int64)
    fact_table[0] = 1
    for k in range(1, q + 1):
        fact_table[k] = fact_table[k - 1] * k
    fact = fact_table[q]
    values = np.empty((n_samples, n), np.int8)
    tstar = np.empty(n_samples, np.int64)
    fail = np.zeros(n_samples, np.uint8)
    for smp in prange(n_samples):
        sseed = derive_seed(seed, smp)
        masks = np.empty(n, np.int64)
        nmasks = np.empty(n, np.int64)
        phi = np.empty(n, np.int64)
        u63 = np.empty(n, np.int64)
        perm = np.empty(q, np.int64)
        avail = np.empty(q, np.int64)
        depth = 1
        done = False
        while depth <= guard_depth:
            if _coloring_evolve(sseed, n, q, fact, fact_table, depth,
                                masks, nmasks, phi, u63, perm, avail):
                done = True
                break
            depth *= 2
        if not done:
            fail[smp] = 1
            tstar[smp] = -1
            continue
        tstar[smp] = depth
        for s in range(n):
            m = masks[s]
            c = 0
            while (m >> c) & 1 == 0:
                c += 1
            values[smp, s] = c
    return values, tstar, fail


# -- conditional-table automaton (high-noise regime) ------------------------

@njit(cache=True)
def _table_evolve(sseed, xs, ys, nb, p1row, g0, g1, depth, masks, nmasks,
                  phi, uu):
    n = xs.size
    gamma = g0 + g1
    for s in range(n):
        masks[s] = 3
    for t in range(-depth, 0):
        for s in range(n):
            p, u = draw_phi_u(sseed, xs[s], ys[s], t)
            phi[s] = p
            uu[s] = u
        for s in range(n):
            act = phi[s] == 1
            if act:
                for k in range(4):
                    if phi[nb[s, k]] == 1:
                        act = False
                        break
            if not act:
                nmasks[s] = masks[s]
                continue
            u = uu[s]
            if u < gamma:
                # coupled draw: collapses every consistent history at once
                nmasks[s] = 1 if u < g0 else 2
            else:
                up = (u - gamma) / (1.0 - gamma)
                acc = 0
                m0 = masks[nb[s, 0]]
                m1 = masks[nb[s, 1]]
                m2 = masks[nb[s, 2]]
                m3 = masks[nb[s, 3]]
                for a in range(2):
                    if (m0 >> a) & 1 == 0:
                        continue
                    for b in range(2):
                        if (m1 >> b) & 1 == 0:
                            continue
                        for c in range(2):
                            if (m2 >> c) & 1 == 0:
                                continue
                            for e in range(2):
                                if (m3 >> e) & 1 == 0:
                                    continue
                                combo = a * 8 + b * 4 + c * 2 + e
                                p1 = p1row[combo]
                                r0 = (1.0 - p1 - g0) / (1.0 - gamma)
                                acc |= 1 if up < r0 else 2
                nmasks[s] = acc
        for s in range(n):
            masks[s] = nmasks[s]
    for s in range(n):
        if masks[s] == 3:
            return False
    return True


@njit(cache=True, parallel=True)
def table_cftp_torus_batch(seed, n_samples, xs, ys, nb, p1row, g0, g1,
                           guard_depth):
    n = xs.size
    values = np.empty((n_samples, n), np.int8)
    tstar = np.empty(n_samples, np.int64)
    fail = np.zeros(n_samples, np.uint8)
    for smp in prange(n_samples):
        sseed = derive_seed(seed, smp)
        masks = np.empty(n, np.int64)
        nmasks = np.empty(n, np.int64)
        phi = np.empty(n, np.int64)
        uu = np.empty(n, np.float64)
        depth = 1
        done = False
        while depth <= guard_depth:
            if _table_evolve(sseed, xs, ys, nb, p1row, g0, g1, depth,
                             masks, nmasks, phi, uu):
                done = True
                break
            depth *= 2
        if not done:
            fail[smp] = 1
            tstar[smp] = -1
            continue
        tstar[smp] = depth
        for s in range(n):
            values[smp, s] = 0 if masks[s] == 1 else 1
    return values, tstar, fail
