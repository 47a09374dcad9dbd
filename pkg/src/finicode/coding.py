"""Driving and inspecting space-time transport runs.

The engine moves i.i.d. symbols from per-site source columns into stopped
windows, one simulation per box site.  This module validates a setup,
allocates the workspace, runs the jitted stepper, and exposes the results
(per-site stopping data, the written cell field, transport records) in
object form.  A checked mode single-steps the kernel and audits the state
between steps; it is slow and meant for small boxes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from . import _transport_kernels as tk
from ._mix import (TAG_NOISE, TAG_PERTURB, TAG_WASTE_B, TAG_WASTE_B_PERTURB,
                   derive_seed_py, field_u64_py)
from .pca import PcaSpec
from .spacetime import WindowSequence
from .stopping import (SIGMA_DETERMINISTIC, TAU_COALESCENCE,
                       TAU_DETERMINISTIC, TAU_FIRST_HIT, SourceRule,
                       StoppingRule)

_STATUS_TEXT = {
    tk.ST_CORE_SAT: "core satisfied",
    tk.ST_STEPS: "step budget exhausted",
    tk.ST_REC_OVERFLOW: "record buffer full",
    tk.ST_CORE_STALL: "a core simulation hit the box boundary",
    tk.ST_JCAP: "window layer capacity exceeded",
    tk.ST_INVARIANT: "internal invariant breached",
    tk.ST_OVF_OVERFLOW: "competition overflow buffer full",
}

_RECORD_MODES = {"none": 0, "all": 1, "near": 2}


class TransportError(RuntimeError):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status


def dependency_radius(delta: int, n_steps: int) -> int:
    """Sup-norm radius outside which an n-step run must not look."""
    return 5 * delta * n_steps * n_steps


def _model_of(pca: PcaSpec) -> Tuple[int, np.ndarray, int, int]:
    """(model code, threshold table, permutation count, alphabet size)."""
    n = pca.codec.n_symbols
    if n is None:
        raise TransportError(
            tk.ST_INVARIANT, "transport needs an enumerable noise alphabet")
    if "pcum" in pca.params:
        pcum = np.asarray(pca.params["pcum"], np.float64)
        return tk.MODEL_THRESHOLD, pcum, 1, n
    if "q" in pca.params:
        qfact = math.factorial(int(pca.params["q"]))
        return tk.MODEL_PERMUTATION, np.zeros(1, np.float64), qfact, n
    raise TransportError(
        tk.ST_INVARIANT, f"no transport path for model {pca.kernel!r}")


def _as_center(d: int, center) -> Tuple[int, int]:
    if isinstance(center, (int, np.integer)):
        return int(center), 0
    t = tuple(int(c) for c in center)
    if len(t) == 1:
        return t[0], 0
    if len(t) == 2:
        return t[0], t[1]
    raise TransportError(tk.ST_INVARIANT, f"bad centre {center!r} for d={d}")


@dataclass
class TransportSetup:
    """Everything a transport run depends on.

    The window travels with the stopping rule; the box is a sup-norm ball
    of ``box_radius`` around ``center`` in absolute site coordinates (one
    row when d=1).  ``perturb`` of form (cx, cy, radius) swaps the input
    field outside that ball, at every time index, against an independent
    stream.
    """

    pca: PcaSpec
    tau_rule: StoppingRule
    sigma_rule: SourceRule
    method: str = "A"
    seed: int = 0
    box_radius: int = 32
    center: object = 0
    steps: int = 1000
    records: str = "none"
    rec_radius: int = 0
    rec_cap: int = 1 << 16
    core_radius: int = 0
    stop_on_core: bool = True
    perturb: Optional[Tuple[int, int, int]] = None
    perturb_mode: str = "outside"
    jcap: Optional[int] = None


def _layer_budget(window: WindowSequence, steps: int) -> int:
    """Highest layer a target cursor can touch in ``steps`` advances."""
    n = 0
    while window.size(n) < steps + 1:
        n += 1
    return n + 1


@dataclass
class TransportRun:
    setup: TransportSetup
    status: int
    steps_done: int
    x0: int
    y0: int
    nx: int
    ny: int
    sat: np.ndarray
    stalled: np.ndarray
    src_k: np.ndarray
    src_i: np.ndarray
    tgt_x: np.ndarray
    tgt_y: np.ndarray
    tgt_j: np.ndarray
    tau: np.ndarray
    payload: np.ndarray
    sat_step: np.ndarray
    ptop: np.ndarray
    pstop: np.ndarray
    zvals: np.ndarray
    records: np.ndarray

    def box_coords(self, site) -> Tuple[int, int]:
        cx, cy = _as_center(self.setup.pca.d, site)
        bx, by = cx - self.x0, cy - self.y0
        if not (0 <= bx < self.nx and 0 <= by < self.ny):
            raise TransportError(tk.ST_INVARIANT,
                                 f"site {site!r} outside the box")
        return bx, by

    def tau_at(self, site) -> int:
        bx, by = self.box_coords(site)
        if not self.sat[bx, by]:
            raise TransportError(tk.ST_INVARIANT,
                                 f"site {site!r} not satisfied")
        return int(self.tau[bx, by])

    def payload_at(self, site) -> int:
        bx, by = self.box_coords(site)
        return int(self.payload[bx, by])

    def window_symbols(self, site) -> Dict[Tuple, int]:
        """Written symbols over the satisfied window ball at ``site``."""
        bx, by = self.box_coords(site)
        out = {}
        window = self.setup.tau_rule.window
        for (u, i) in window.ball(int(self.tau[bx, by])):
            ux = u[0]
            uy = u[1] if len(u) == 2 else 0
            sym = int(self.zvals[bx + ux, by + uy, i])
            if sym < 0:
                raise TransportError(tk.ST_INVARIANT,
                                     "satisfied window has an empty cell")
            out[(u, i)] = sym
        return out

    def stall_distance(self) -> Optional[int]:
        """Smallest sup-norm distance of a stalled simulation from the
        box centre, or None when nothing stalled."""
        idx = np.argwhere(self.stalled == 1)
        if idx.size == 0:
            return None
        dx = np.abs(idx[:, 0] - self.nx // 2)
        dy = np.abs(idx[:, 1] - self.ny // 2)
        return int(np.maximum(dx, dy).min())

    def core_digest(self, radius: int) -> bytes:
        """Byte-exact fingerprint of everything within ``radius`` of the
        centre: simulation state, columns, and written cells."""
        return _state_digest(self, radius)


def _state_digest(st, radius: int) -> bytes:
    """Digest of a workspace or finished run near the box centre."""
    rcx, rcy = st.nx // 2, st.ny // 2
    xs = slice(max(0, rcx - radius), min(st.nx, rcx + radius + 1))
    ys = slice(max(0, rcy - radius), min(st.ny, rcy + radius + 1))
    parts = [a[xs, ys].tobytes() for a in
             (st.sat, st.stalled, st.src_k, st.src_i,
              st.tgt_x, st.tgt_y, st.tgt_j, st.tau,
              st.payload, st.sat_step, st.ptop, st.pstop)]
    parts.append(st.zvals[xs, ys, :].tobytes())
    return b"".join(parts)


def field_symbol(pca: PcaSpec, sseed: int, site, i: int,
                 reserve: bool = False,
                 perturb: Optional[Tuple[int, int, int]] = None,
                 perturb_mode: str = "outside") -> int:
    """Python twin of the kernel's field read, via the shared codec."""
    x, y = _as_center(pca.d, site)
    tag = TAG_WASTE_B if reserve else TAG_NOISE
    if perturb is not None:
        pcx, pcy, prad = perturb
        outside = max(abs(x - pcx), abs(y - pcy)) > prad
        if outside == (perturb_mode == "outside"):
            tag = TAG_WASTE_B_PERTURB if reserve else TAG_PERTURB
    return pca.codec.symbol_index(field_u64_py(sseed, tag, x, y, int(i)))


class _Workspace:
    """Array bundle for one box geometry, reusable across runs."""

    def __init__(self, setup: TransportSetup):
        pca = setup.pca
        d = pca.d
        rule = setup.tau_rule
        window = rule.window
        if window.d != d:
            raise TransportError(tk.ST_INVARIANT,
                                 "window dimension differs from the model")
        if window.kind not in ("cone", "simple"):
            raise TransportError(
                tk.ST_INVARIANT,
                f"transport runs on cone or simple windows, not "
                f"{window.kind!r}")
        model, pcum, qfact, n_symbols = _model_of(pca)
        if rule.kind == TAU_COALESCENCE:
            if model != tk.MODEL_THRESHOLD or d != 1 or pcum.size != 5:
                raise TransportError(
                    tk.ST_INVARIANT,
                    "coalescence stopping needs the d=1 threshold model")
        if rule.kind == TAU_FIRST_HIT and rule.hit_symbol >= n_symbols:
            raise TransportError(tk.ST_INVARIANT,
                                 "first-hit symbol outside the alphabet")
        sig = setup.sigma_rule
        if sig.kind != SIGMA_DETERMINISTIC and sig.hit_symbol >= n_symbols:
            raise TransportError(tk.ST_INVARIANT,
                                 "column-rule symbol outside the alphabet")
        if setup.method not in ("A", "B"):
            raise TransportError(tk.ST_INVARIANT,
                                 f"unknown method {setup.method!r}")
        if setup.records not in _RECORD_MODES:
            raise TransportError(tk.ST_INVARIANT,
                                 f"unknown record mode {setup.records!r}")
        if setup.steps < 1:
            raise TransportError(tk.ST_INVARIANT, "need steps >= 1")
        if setup.perturb_mode not in ("outside", "inside"):
            raise TransportError(
                tk.ST_INVARIANT,
                f"unknown perturbation mode {setup.perturb_mode!r}")

        cx, cy = _as_center(d, setup.center)
        r = int(setup.box_radius)
        self.nx = 2 * r + 1
        self.ny = 2 * r + 1 if d == 2 else 1
        self.x0 = cx - r
        self.y0 = cy - r if d == 2 else cy
        nsims = self.nx * self.ny

        jcap = setup.jcap if setup.jcap is not None \
            else _layer_budget(window, setup.steps)
        delta = window.slope() if window.kind == "cone" else 0
        top = sig.capacity() - 1
        bounds = (setup.steps, jcap + 1, delta * (jcap + 1), top, n_symbols)
        big = nsims > (1 << 22)
        if big and max(bounds) > 32000:
            raise TransportError(
                tk.ST_INVARIANT,
                f"box of {nsims} simulations needs 16-bit state, but a "
                f"bound {max(bounds)} does not fit")
        sdt = np.int16 if big else np.int32
        zdt = np.int16 if n_symbols <= 32000 else np.int32

        self.model, self.pcum, self.qfact = model, pcum, qfact
        self.n_symbols = n_symbols
        self.d, self.delta, self.jcap = d, delta, jcap
        self.wkind = tk.WKIND_CONE if window.kind == "cone" \
            else tk.WKIND_SIMPLE
        shape = (self.nx, self.ny)
        self.sat = np.zeros(shape, np.uint8)
        self.stalled = np.zeros(shape, np.uint8)
        self.src_k = np.zeros(shape, sdt)
        self.src_i = np.zeros(shape, sdt)
        self.tgt_x = np.zeros(shape, sdt)
        self.tgt_y = np.zeros(shape, sdt)
        self.tgt_j = np.zeros(shape, sdt)
        self.tau = np.zeros(shape, sdt)
        self.payload = np.zeros(shape, np.int8)
        self.sat_step = np.zeros(shape, np.int32)
        self.ptop = np.zeros(shape, np.int16 if big else np.int32)
        self.pstop = np.zeros(shape, np.uint8)
        self.zvals = np.zeros((self.nx, self.ny, jcap), zdt)
        self.stamp_step = np.zeros(shape, np.uint32)
        self.stamp_j = np.zeros(shape, sdt)
        self.stamp_slot = np.zeros(shape, np.int64)
        self.ovf = np.zeros((4096, 3), np.int64)
        self.act = np.zeros(nsims, np.uint8)
        rmode = _RECORD_MODES[setup.records]
        cap = setup.rec_cap if rmode else 1
        self.rec = np.zeros((cap, 8), np.int32)
        self.rec_meta = np.zeros(1, np.int64)
        self.rmode = rmode
        rcx, rcy = self.nx // 2, self.ny // 2
        cr = min(setup.core_radius, r)
        xs = np.arange(max(0, rcx - cr), min(self.nx, rcx + cr + 1))
        ys = np.arange(max(0, rcy - cr), min(self.ny, rcy + cr + 1))
        self.core = (xs[:, None] * self.ny + ys[None, :]).ravel() \
            .astype(np.int64)
        self.step_base = 0

    def reset(self):
        for a in (self.sat, self.stalled, self.src_k, self.tgt_x,
                  self.tgt_y, self.tgt_j, self.pstop, self.act):
            a.fill(0)
        self.src_i.fill(-1)
        self.tau.fill(-1)
        self.payload.fill(-1)
        self.sat_step.fill(-1)
        self.ptop.fill(-1)
        self.zvals.fill(-1)
        self.stamp_step.fill(0)
        self.rec_meta[0] = 0
        self.step_base = 0

    def step(self, setup: TransportSetup, sseed: int, n: int) -> Tuple:
        rule = setup.tau_rule
        sig = setup.sigma_rule
        if setup.perturb is not None:
            pert_on = 1 if setup.perturb_mode == "outside" else 2
            pcx, pcy, prad = setup.perturb
        else:
            pert_on, pcx, pcy, prad = 0, 0, 0, 0
        if sig.kind == SIGMA_DETERMINISTIC:
            skind, sig_m, sig_hit, sig_cap = tk.SKIND_DET, sig.m, -1, 0
        else:
            skind, sig_m = tk.SKIND_FIRST_HIT, 0
            sig_hit, sig_cap = sig.hit_symbol, sig.cap
        tkind = {TAU_DETERMINISTIC: tk.TKIND_DET,
                 TAU_FIRST_HIT: tk.TKIND_FIRST_HIT,
                 TAU_COALESCENCE: tk.TKIND_COALESCENCE}[rule.kind]
        status, done = tk.transport_steps(
            self.d, self.model, np.uint64(sseed),
            tk.METHOD_A if setup.method == "A" else tk.METHOD_B,
            self.x0, self.y0, self.nx, self.ny,
            self.wkind, self.delta,
            tkind, rule.t0, rule.hit_symbol, rule.miss_tau,
            skind, sig_m, sig_hit, sig_cap,
            pert_on, pcx, pcy, prad,
            self.pcum, self.qfact,
            self.sat.ravel(), self.stalled.ravel(),
            self.src_k.ravel(), self.src_i.ravel(),
            self.tgt_x.ravel(), self.tgt_y.ravel(), self.tgt_j.ravel(),
            self.tau.ravel(), self.payload.ravel(),
            self.sat_step.ravel(), self.ptop, self.pstop,
            self.zvals, self.jcap,
            self.stamp_step, self.stamp_j, self.stamp_slot, self.ovf,
            self.act, self.rec, self.rec_meta, self.rmode,
            setup.rec_radius,
            self.core, n, self.step_base,
            1 if setup.stop_on_core else 0)
        self.step_base += done
        return status, done

    def snapshot(self, setup: TransportSetup, status: int) -> TransportRun:
        nrec = int(self.rec_meta[0])
        return TransportRun(
            setup=setup, status=status, steps_done=self.step_base,
            x0=self.x0, y0=self.y0, nx=self.nx, ny=self.ny,
            sat=self.sat.copy(), stalled=self.stalled.copy(),
            src_k=self.src_k.copy(), src_i=self.src_i.copy(),
            tgt_x=self.tgt_x.copy(), tgt_y=self.tgt_y.copy(),
            tgt_j=self.tgt_j.copy(), tau=self.tau.copy(),
            payload=self.payload.copy(), sat_step=self.sat_step.copy(),
            ptop=self.ptop.copy(),
            pstop=self.pstop.copy(), zvals=self.zvals.copy(),
            records=self.rec[:nrec].copy())


def _drive(setup: TransportSetup, ws: "_Workspace", sseed: int,
           checked: bool = False, hook: Optional[Callable] = None) -> int:
    ws.reset()
    if not checked:
        status, _ = ws.step(setup, sseed, setup.steps)
    else:
        auditor = _InvariantAuditor(setup, ws, sseed)
        status = tk.ST_STEPS
        for _ in range(setup.steps):
            status, done = ws.step(setup, sseed, 1)
            auditor.audit()
            if hook is not None:
                hook(ws, ws.step_base)
            if status != tk.ST_STEPS or done == 0:
                break
    if status not in (tk.ST_CORE_SAT, tk.ST_STEPS):
        raise TransportError(status, _STATUS_TEXT[status])
    if setup.stop_on_core and status == tk.ST_STEPS \
            and ws.core.size > 0:
        raise TransportError(
            tk.ST_STEPS,
            f"core not satisfied within {setup.steps} steps")
    return status


def run_transport(setup: TransportSetup, checked: bool = False,
                  hook: Optional[Callable] = None,
                  workspace: Optional[_Workspace] = None,
                  run_seed: Optional[int] = None) -> TransportRun:
    """One full run.  Raises TransportError on any abnormal status.

    ``checked`` single-steps the kernel and audits invariants between
    steps (small boxes only).  ``run_seed`` overrides the setup seed,
    letting callers batch independent runs over one workspace.
    """
    ws = workspace if workspace is not None else _Workspace(setup)
    sseed = setup.seed if run_seed is None else run_seed
    status = _drive(setup, ws, sseed, checked, hook)
    return ws.snapshot(setup, status)


def run_digest(setup: TransportSetup, radius: int,
               workspace: Optional[_Workspace] = None,
               run_seed: Optional[int] = None) -> bytes:
    """Run and return only the centre-state fingerprint.

    Skips the full-run snapshot, so back-to-back runs on a large shared
    workspace stay within one array bundle of memory.
    """
    ws = workspace if workspace is not None else _Workspace(setup)
    sseed = setup.seed if run_seed is None else run_seed
    _drive(setup, ws, sseed)
    return _state_digest(ws, radius)


def workspace_for(setup: TransportSetup) -> _Workspace:
    """Preallocate the array bundle for ``setup``'s box geometry.

    Pass the result to repeated ``run_transport`` calls whose setups
    share box_radius, center, steps, records and core_radius; this
    avoids reallocating the large grids between runs.
    """
    return _Workspace(setup)


def run_many(setup: TransportSetup, n_runs: int,
             extract: Callable[[TransportRun], object]) -> List:
    """Independent runs k=0..n-1 on subseed streams, one shared workspace."""
    ws = _Workspace(setup)
    out = []
    for k in range(n_runs):
        run = run_transport(setup, workspace=ws,
                            run_seed=derive_seed_py(setup.seed, k))
        out.append(extract(run))
    return out


def window_atom(run: TransportRun, site) -> Tuple:
    """Hashable (tau, symbols) for distribution comparisons."""
    tau = run.tau_at(site)
    window = run.setup.tau_rule.window
    syms = run.window_symbols(site)
    return (tau,) + tuple(syms[pt] for pt in window.ball(tau))


def run_until_stable(setup: TransportSetup, digest_radius: int,
                     max_doublings: int = 7) -> Tuple[TransportRun, int]:
    """Grow the box by doubling until the centre digest stops changing.

    The keyed field makes runs at different radii replay the same input,
    so two consecutive radii agreeing byte-for-byte on the digest region,
    with no stall anywhere near the centre, pins the infinite-lattice
    outcome of the centre simulations.
    """
    prev = None
    radius = setup.box_radius
    for _ in range(max_doublings + 1):
        trial = replace(setup, box_radius=radius)
        try:
            run = run_transport(trial)
        except TransportError as err:
            if err.status == tk.ST_CORE_STALL:
                radius *= 2
                prev = None
                continue
            raise
        sd = run.stall_distance()
        if sd is not None and sd <= max(digest_radius, radius // 2):
            radius *= 2
            prev = None
            continue
        digest = run.core_digest(digest_radius)
        if prev is not None and digest == prev:
            return run, radius
        prev = digest
        radius *= 2
    raise TransportError(
        tk.ST_CORE_STALL,
        f"no stable centre digest within {max_doublings} doublings")


class _InvariantAuditor:
    """Step-by-step state audit for checked runs."""

    def __init__(self, setup: TransportSetup, ws: _Workspace, sseed: int):
        self.setup = setup
        self.ws = ws
        self.sseed = sseed
        self.prev_ptop = ws.ptop.copy()
        self.prev_pstop = ws.pstop.copy()
        self.prev_z = ws.zvals.copy()
        self.prev_sat = ws.sat.copy()
        self.prev_state = self._sim_state()

    def _sim_state(self):
        ws = self.ws
        return np.stack([ws.src_k, ws.src_i, ws.tgt_x, ws.tgt_y,
                         ws.tgt_j]).astype(np.int64)

    def _fail(self, what: str):
        raise TransportError(tk.ST_INVARIANT, f"invariant failed: {what}")

    def audit(self):
        ws = self.ws
        setup = self.setup
        d = setup.pca.d
        window = setup.tau_rule.window

        live = (ws.sat == 0) & (ws.stalled == 0)
        # source indices never run ahead of their column tops
        vx, vy = np.indices((ws.nx, ws.ny))
        ux = np.minimum(vx + ws.src_k, ws.nx - 1)
        if np.any(ws.src_i[live] > ws.ptop[ux, vy][live]):
            self._fail("source index above the column top")
        # walk location bounds: at most one hop and one index per step,
        # rightward only
        n = ws.step_base
        if np.any(ws.src_k < 0) or np.any(ws.src_k > n):
            self._fail("source column outside the walk bound")
        if np.any(ws.src_i >= n):
            self._fail("source index above the step count")
        # no two active simulations share a source position
        if np.any(live):
            key = ((vx + ws.src_k).astype(np.int64) * ws.ny + vy) \
                * (n + 2) + ws.src_i + 1
            keys = key[live]
            if len(np.unique(keys)) != len(keys):
                self._fail("two active simulations share a source cell")
        # target cursors stay inside their window layer
        if window.kind == "simple":
            if np.any(ws.tgt_x[live] != 0) or np.any(ws.tgt_y[live] != 0):
                self._fail("cursor off the column of a simple window")
        else:
            reach = np.abs(ws.tgt_x) + np.abs(ws.tgt_y)
            if np.any(reach[live] > ws.delta * ws.tgt_j[live]):
                self._fail("cursor outside its window layer")
        # satisfaction times are stamped exactly when satisfaction holds
        if np.any((ws.sat == 1) != (ws.sat_step > 0)):
            self._fail("satisfaction step stamp out of sync")
        if np.any(ws.sat_step > n):
            self._fail("satisfaction step in the future")
        # columns only grow, by at most one cell, and stay stopped
        growth = ws.ptop.astype(np.int64) - self.prev_ptop
        if np.any(growth < 0) or np.any(growth > 1):
            self._fail("column top moved by something other than 0 or +1")
        if np.any(self.prev_pstop > ws.pstop):
            self._fail("a stopped column reopened")
        # written cells never change
        was = self.prev_z >= 0
        if np.any(ws.zvals[was] != self.prev_z[was]):
            self._fail("a written cell changed")
        # satisfied simulations stay frozen
        state = self._sim_state()
        frozen = self.prev_sat == 1
        if np.any(state[:, frozen] != self.prev_state[:, frozen]):
            self._fail("a satisfied simulation moved")
        # column stop flags match the rule on the revealed prefix
        sig = setup.sigma_rule
        grown = np.argwhere(growth == 1)
        for (gx, gy) in grown[:64]:
            top = int(ws.ptop[gx, gy])
            col = [field_symbol(setup.pca, self.sseed,
                               self._abs(gx, gy), i,
                               perturb=setup.perturb,
                               perturb_mode=setup.perturb_mode)
                   for i in range(top + 1)]
            if bool(ws.pstop[gx, gy]) != sig.stopped(col):
                self._fail("column stop flag disagrees with the rule")
        # every cell strictly before a live cursor is filled
        live_idx = np.argwhere(live)
        for (sx, sy) in live_idx[:64]:
            tgt = ((int(ws.tgt_x[sx, sy]),) if d == 1
                   else (int(ws.tgt_x[sx, sy]), int(ws.tgt_y[sx, sy])),
                   int(ws.tgt_j[sx, sy]))
            count = 0
            for pt in window.points():
                if pt == tgt or count > 4096:
                    break
                (u, i) = pt
                uy = u[1] if d == 2 else 0
                ax, ay = sx + u[0], sy + uy
                if 0 <= ax < ws.nx and 0 <= ay < ws.ny:
                    if ws.zvals[ax, ay, i] < 0:
                        self._fail("an empty cell behind a live cursor")
                count += 1
        # method B: written cells carry the field of their own location
        if setup.method == "B":
            filled = np.argwhere(ws.zvals >= 0)
            for (fx, fy, fj) in filled[:256]:
                expect = field_symbol(setup.pca, self.sseed,
                                      self._abs(fx, fy), int(fj),
                                      perturb=setup.perturb,
                                      perturb_mode=setup.perturb_mode)
                if int(ws.zvals[fx, fy, fj]) != expect:
                    self._fail("a written cell differs from its field")
        # alphabet range
        if np.any(ws.zvals >= ws.n_symbols):
            self._fail("a written symbol outside the alphabet")
        self.prev_ptop = ws.ptop.copy()
        self.prev_pstop = ws.pstop.copy()
        self.prev_z = ws.zvals.copy()
        self.prev_sat = ws.sat.copy()
        self.prev_state = state

    def _abs(self, bx: int, by: int):
        if self.setup.pca.d == 1:
            return (self.ws.x0 + int(bx),)
        return (self.ws.x0 + int(bx), self.ws.y0 + int(by))
