"""Jitted core of the space-time transport engine.

One simulation per box site: a source walker consuming cells from per-site
columns to its right, and a target cursor sweeping the site's window in
canonical order (layer, then time, then lexicographic position).  Consumed
values are offered to the cursor's cell; among the simulations offering to
the same empty cell in the same step, the lexicographically smallest home
wins and writes it.  A simulation freezes once its stopping rule certifies
the revealed window, and stalls (with a flag) if its walk would leave the
box.

Steps are synchronous.  Classification (pass 1) reads only the state at
the start of the step; effects (pass 2) run in slot order, which equals
lexicographic home order, so a cell's winner always writes before any
loser passes it.  All randomness is read through the keyed mixer at
absolute coordinates, so enlarging the box replays the identical field.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from ._mix import (TAG_NOISE, TAG_PERTURB, TAG_WASTE_B, TAG_WASTE_B_PERTURB,
                   field_u64)
from ._pca_kernels import ising_cone_coalesced

_M63 = np.uint64((1 << 63) - 1)
_U10 = np.uint64(10)
_U63 = np.uint64(63)
_INV53 = 1.0 / 9007199254740992.0

MODEL_THRESHOLD = 0
MODEL_PERMUTATION = 1

WKIND_CONE = 0
WKIND_SIMPLE = 1

TKIND_DET = 0
TKIND_FIRST_HIT = 1
TKIND_COALESCENCE = 2

SKIND_DET = 0
SKIND_FIRST_HIT = 1

METHOD_A = 0
METHOD_B = 1

ST_CORE_SAT = 0
ST_STEPS = 1
ST_REC_OVERFLOW = 2
ST_CORE_STALL = 3
ST_JCAP = 4
ST_INVARIANT = 5
ST_OVF_OVERFLOW = 6


@njit(cache=True)
def draw_symbol(model, sseed, reserve, x, y, i,
                pert_on, pcx, pcy, prad, pcum, qfact):
    """Symbol index of the i.i.d. field at absolute cell (x, y, i).

    ``reserve`` selects the auxiliary stream fed to wasted method-B reads.
    A perturbed run swaps both streams against independent ones on part of
    the lattice, at every time index: outside the sup-norm ball of radius
    ``prad`` around (pcx, pcy) when ``pert_on`` is 1, inside it when 2.
    """
    if reserve == 1:
        tag = TAG_WASTE_B
    else:
        tag = TAG_NOISE
    if pert_on != 0:
        dx = x - pcx
        if dx < 0:
            dx = -dx
        dy = y - pcy
        if dy < 0:
            dy = -dy
        outside = dx > prad or dy > prad
        if (pert_on == 1 and outside) or (pert_on == 2 and not outside):
            if reserve == 1:
                tag = TAG_WASTE_B_PERTURB
            else:
                tag = TAG_PERTURB
    h = field_u64(sseed, tag, x, y, i)
    phi = np.int64(h >> _U63)
    if model == MODEL_THRESHOLD:
        u = np.float64((h & _M63) >> _U10) * _INV53
        rank = 0
        for k in range(pcum.size):
            if u < pcum[k]:
                break
            rank += 1
        return phi * (pcum.size + 1) + rank
    code = np.int64((h & _M63) % np.uint64(qfact))
    return phi * qfact + code


@njit(cache=True)
def successor(d, wkind, delta, wx, wy, j):
    """Next target cell in canonical order; (x, y, layer)."""
    if wkind == WKIND_SIMPLE:
        return 0, 0, j + 1
    r = delta * j
    if d == 1:
        if wx < r:
            return wx + 1, 0, j
        return -delta * (j + 1), 0, j + 1
    awx = wx if wx >= 0 else -wx
    if wy < r - awx:
        return wx, wy + 1, j
    if wx < r:
        x2 = wx + 1
        ax2 = x2 if x2 >= 0 else -x2
        return x2, -(r - ax2), j
    return -delta * (j + 1), 0, j + 1


@njit(cache=True)
def _sat_check(tkind, t0, hit_symbol, miss_tau, zvals, vx, vy, newj,
               nx, ny, jcap):
    """(verdict, payload) at entry to layer ``newj``.

    verdict -2: a needed cell is missing or out of range (invariant
    breach); 0: not satisfied yet; 1: satisfied.
    """
    if tkind == TKIND_DET:
        if newj >= t0 + 1:
            return 1, -1
        return 0, -1
    if tkind == TKIND_FIRST_HIT:
        z0 = zvals[vx, vy, 0]
        if z0 < 0:
            return -2, -1
        tau = 0 if z0 == hit_symbol else miss_tau
        if newj >= tau + 1:
            return 1, -1
        return 0, -1
    # coalescence over the slope-1 cone on the line
    depth = newj - 1
    if depth < 1:
        return 0, -1
    if vx - depth < 0 or vx + depth >= nx or depth >= jcap:
        return -2, -1
    slab = np.full((2 * depth + 1, depth + 1), -1, np.int64)
    for age in range(depth + 1):
        for off in range(-age, age + 1):
            slab[off + depth, age] = zvals[vx + off, vy, age]
    code = ising_cone_coalesced(slab, depth, depth)
    if code == 2:
        return -2, -1
    if code == 0:
        return 0, -1
    return 1, code >> 2


@njit(cache=True)
def transport_steps(
        d, model, sseed, method,
        x0, y0, nx, ny,
        wkind, delta,
        tkind, t0, hit_symbol, miss_tau,
        skind, sig_m, sig_hit, sig_cap,
        pert_on, pcx, pcy, prad,
        pcum, qfact,
        sat, stalled, src_k, src_i, tgt_x, tgt_y, tgt_j, tau, payload,
        sat_step, ptop, pstop,
        zvals, jcap,
        stamp_step, stamp_j, stamp_slot, ovf,
        act, rec, rec_meta, rmode, rec_radius,
        core, steps, step_base, stop_on_core):
    """Advance every simulation by up to ``steps`` synchronous steps.

    Returns (status, steps_done).  ``rec_meta[0]`` carries the record
    count across calls; ``step_base`` keeps the stamp markers fresh across
    calls on the same workspace.
    """
    nsims = nx * ny
    n_core = core.size
    rcx = nx // 2
    rcy = ny // 2
    for step in range(steps):
        marker = np.uint32(step_base + step + 1)
        ovf_n = 0
        # pass 1: classify on the start-of-step state, stamp competitions
        for s in range(nsims):
            act[s] = 0
            if sat[s] == 1 or stalled[s] == 1:
                continue
            vx = s // ny
            vy = s - vx * ny
            ux = vx + src_k[s]
            if ux >= nx:
                stalled[s] = 1
                continue
            if src_i[s] < ptop[ux, vy]:
                act[s] = 1
            elif pstop[ux, vy] == 1:
                if ux + 1 >= nx:
                    stalled[s] = 1
                    continue
                act[s] = 2
            else:
                wx = tgt_x[s]
                wy = tgt_y[s]
                j = tgt_j[s]
                ax = vx + wx
                ay = vy + wy
                if ax < 0 or ax >= nx or ay < 0 or ay >= ny:
                    stalled[s] = 1
                    continue
                if j >= jcap:
                    return ST_JCAP, step
                act[s] = 3
                if zvals[ax, ay, j] < 0:
                    if stamp_step[ax, ay] != marker:
                        stamp_step[ax, ay] = marker
                        stamp_j[ax, ay] = j
                        stamp_slot[ax, ay] = s
                    elif stamp_j[ax, ay] != j:
                        if ovf_n >= ovf.shape[0]:
                            return ST_OVF_OVERFLOW, step
                        ovf[ovf_n, 0] = ax * ny + ay
                        ovf[ovf_n, 1] = j
                        ovf[ovf_n, 2] = s
                        ovf_n += 1
        # pass 2: effects, in slot order (= lexicographic home order)
        for s in range(nsims):
            a = act[s]
            if a == 0:
                continue
            vx = s // ny
            vy = s - vx * ny
            if a == 1:
                src_i[s] += 1
                continue
            if a == 2:
                # enter the next column at its lowest index and climb from
                # there; landing higher up could stack two walkers on one
                # cell and break the single-reader rule
                src_k[s] += 1
                src_i[s] = 0
                continue
            # consumption
            ux = vx + src_k[s]
            uy = vy
            inew = src_i[s] + 1
            src_i[s] = inew
            val = draw_symbol(model, sseed, 0, x0 + ux, y0 + uy, inew,
                              pert_on, pcx, pcy, prad, pcum, qfact)
            if ptop[ux, uy] < inew:
                ptop[ux, uy] = inew
                if skind == SKIND_DET:
                    if inew >= sig_m:
                        pstop[ux, uy] = 1
                else:
                    if val == sig_hit or inew >= sig_cap:
                        pstop[ux, uy] = 1
            wx = tgt_x[s]
            wy = tgt_y[s]
            j = tgt_j[s]
            ax = vx + wx
            ay = vy + wy
            # winner verdict from the pass-1 stamps
            t_flag = 0
            if stamp_step[ax, ay] == marker:
                if stamp_j[ax, ay] == j:
                    if stamp_slot[ax, ay] == s:
                        t_flag = 1
                else:
                    best = -1
                    lin = ax * ny + ay
                    for o in range(ovf_n):
                        if ovf[o, 0] == lin and ovf[o, 1] == j:
                            if best < 0 or ovf[o, 2] < best:
                                best = ovf[o, 2]
                    if best == s:
                        t_flag = 1
            zval = -1
            if t_flag == 1:
                if method == METHOD_A:
                    zval = val
                else:
                    zval = draw_symbol(model, sseed, 0, x0 + ax, y0 + ay,
                                       j, pert_on, pcx, pcy, prad,
                                       pcum, qfact)
                zvals[ax, ay, j] = zval
            if method == METHOD_A:
                yval = val
            elif t_flag == 1:
                yval = zval
            else:
                yval = draw_symbol(model, sseed, 1, x0 + ux, y0 + uy,
                                   inew, pert_on, pcx, pcy, prad,
                                   pcum, qfact)
            if rmode == 1 or (rmode == 2
                              and abs(ax - rcx) <= rec_radius
                              and abs(ay - rcy) <= rec_radius):
                rn = rec_meta[0]
                if rn >= rec.shape[0]:
                    return ST_REC_OVERFLOW, step
                rec[rn, 0] = vx
                rec[rn, 1] = vy
                rec[rn, 2] = wx
                rec[rn, 3] = wy
                rec[rn, 4] = j
                rec[rn, 5] = t_flag
                rec[rn, 6] = zval
                rec[rn, 7] = yval
                rec_meta[0] = rn + 1
            nwx, nwy, nj = successor(d, wkind, delta, wx, wy, j)
            tgt_x[s] = nwx
            tgt_y[s] = nwy
            tgt_j[s] = nj
            if nj > j:
                verdict, pay = _sat_check(tkind, t0, hit_symbol, miss_tau,
                                          zvals, vx, vy, nj, nx, ny, jcap)
                if verdict == -2:
                    return ST_INVARIANT, step
                if verdict == 1:
                    sat[s] = 1
                    tau[s] = nj - 1
                    payload[s] = pay
                    sat_step[s] = step_base + step + 1
        if stop_on_core == 1 and n_core > 0:
            done = True
            for c in range(n_core):
                cs = core[c]
                if stalled[cs] == 1:
                    return ST_CORE_STALL, step + 1
                if sat[cs] == 0:
                    done = False
                    break
            if done:
                return ST_CORE_SAT, step + 1
    if stop_on_core == 1 and n_core > 0:
        for c in range(n_core):
            if stalled[core[c]] == 1:
                return ST_CORE_STALL, steps
        done = True
        for c in range(n_core):
            if sat[core[c]] == 0:
                done = False
                break
        if done:
            return ST_CORE_SAT, steps
    return ST_STEPS, steps
