import math

import numpy as np
import pytest

from finicode import models as fm
from finicode import pca as fp
from finicode import _pca_kernels as pk
from finicode._mix import derive_seed_py

BETA1 = np.log(3) / 2


def test_threshold_table_exact_values():
    # e^{2 beta} = 3 so p_k = 1 / (1 + 3^{-k})
    pcum = fm.ising_thresholds(1, BETA1)
    expect = [1 / 10, 1 / 4, 1 / 2, 3 / 4, 9 / 10]
    assert np.allclose(pcum, expect, atol=1e-15)


def test_ising_codec_roundtrip_and_weights():
    pca = fm.ising_pca(1, BETA1)
    total = 0.0
    for idx in range(pca.codec.n_symbols):
        phi, psi = pca.codec.describe_index(idx)
        assert phi in (0, 1)
        assert -2 <= psi <= 3          # sentinel decodes to 2d + 1 = 3
        total += pca.codec.index_weight(idx)
    assert total == pytest.approx(1.0, abs=1e-12)
    # decode and index agree on raw draws
    for h in (0, 1 << 63, 12345678901234567, (1 << 64) - 1):
        idx = pca.codec.symbol_index(h)
        assert pca.codec.describe_index(idx) == pca.codec.decode(h)


def test_ising_update_semantics():
    pca = fm.ising_pca(1, BETA1)
    idle = (0, 3)       # inactive coin
    act = lambda psi: (1, psi)
    # inactive centre keeps its state
    assert pca.update([0, 1, 0], [idle, idle, idle]) == 1
    # active centre with an active neighbour keeps its state
    assert pca.update([1, 0, 1], [act(0), act(-2), idle]) == 0
    # active isolated: threshold vs neighbour sum (here k = 0)
    assert pca.update([0, 1, 1], [idle, act(0), idle]) == 1
    assert pca.update([0, 1, 1], [idle, act(1), idle]) == 0
    # sentinel never fires even at maximal sum
    assert pca.update([1, 0, 1], [idle, act(3), idle]) == 0


def test_ising_site_conditional_matches_brute_enumeration():
    # enumerate the full (centre, left, right) noise cube with exact weights
    pca = fm.ising_pca(1, BETA1)
    na = pca.codec.n_symbols
    for state_patch in [(0, 0, 0), (1, 0, 1), (0, 1, 1), (1, 1, 0)]:
        prob_one = 0.0
        prob_redraw = 0.0
        for ic in range(na):
            for il in range(na):
                for ir in range(na):
                    w = (pca.codec.index_weight(ic)
                         * pca.codec.index_weight(il)
                         * pca.codec.index_weight(ir))
                    noises = [pca.codec.describe_index(il),
                              pca.codec.describe_index(ic),
                              pca.codec.describe_index(ir)]
                    redraw = noises[1][0] == 1 and noises[0][0] == 0 \
                        and noises[2][0] == 0
                    out = pca.update(list(state_patch), noises)
                    if redraw:
                        prob_redraw += w
                        if out == 1:
                            prob_one += w
                    else:
                        assert out == state_patch[1]
        assert prob_redraw == pytest.approx(1 / 8, abs=1e-12)
        k = (2 * state_patch[0] - 1) + (2 * state_patch[2] - 1)
        cond = pca.site_conditional([state_patch[0], state_patch[2]])
        assert prob_one / prob_redraw == pytest.approx(cond[1], abs=1e-12)


def test_coloring_site_conditional_matches_permutation_count():
    q = 5
    pca = fm.coloring_pca(1, q)
    for blocked in [(0, 1), (2, 2), (4, 0)]:
        counts = np.zeros(q)
        for code in range(math.factorial(q)):
            perm = fm.lehmer_decode(code, q)
            for c in perm:
                if c not in blocked:
                    counts[c] += 1
                    break
        counts /= math.factorial(q)
        assert np.allclose(counts, pca.site_conditional(list(blocked)),
                           atol=1e-12)


def test_lehmer_decode_matches_kernel_and_is_bijective():
    q = 5
    fact_table = np.array([math.factorial(k) for k in range(q + 1)],
                          dtype=np.int64)
    perm = np.empty(q, np.int64)
    avail = np.empty(q, np.int64)
    seen = set()
    for code in range(math.factorial(q)):
        pk._perm_decode(code, q, fact_table, perm, avail)
        py = fm.lehmer_decode(code, q)
        assert tuple(perm) == py
        seen.add(py)
    assert len(seen) == math.factorial(q)


def test_coloring_update_uses_first_admissible_colour():
    pca = fm.coloring_pca(1, 4)
    idle = (0, tuple(range(4)))
    perm = (1, (2, 0, 3, 1))
    assert pca.update([2, 0, 3], [idle, perm, idle]) == 0
    assert pca.update([0, 1, 3], [idle, perm, idle]) == 2
    assert pca.update([0, 1, 0], [idle, (1, (0, 3, 2, 1)), idle]) == 3


def test_coloring_requires_enough_colours():
    with pytest.raises(fp.PcaError):
        fm.coloring_pca(1, 2)
    with pytest.raises(fp.PcaError):
        fm.coloring_pca(2, 4)


def test_table_free_weights_and_margin():
    tab = fm.ising_conditional_table(0.05)
    g0, g1, gamma = tab.free_weights()
    expect = float(np.exp(-0.2) / (2 * np.cosh(0.2)))
    assert g0 == pytest.approx(expect, abs=1e-14)
    assert g1 == pytest.approx(expect, abs=1e-14)
    assert gamma == pytest.approx(0.802624679775096, abs=1e-12)
    assert tab.high_noise_margin() > 0.05


def test_table_coupler_marginal_identity():
    """The coupled draw reproduces each table row exactly.

    The update is piecewise constant in the threshold uniform; summing the
    exact lengths of the pieces that land on state 1 must give back p1 for
    every neighbour configuration.
    """
    tab = fm.ising_conditional_table(0.05)
    g0, g1, gamma = tab.free_weights()
    for combo in range(16):
        p1 = tab.p1[combo]
        r0 = (1.0 - p1 - g0) / (1.0 - gamma)
        length_one = (gamma - g0) + (1.0 - gamma) * (1.0 - r0)
        assert length_one == pytest.approx(p1, abs=1e-12)


def test_low_noise_table_rejected():
    tab = fm.ising_conditional_table(1.0)
    assert tab.high_noise_margin() < 0
    with pytest.raises(fp.PcaError):
        fm.conditional_table_pca(tab)
    fm.conditional_table_pca(tab, allow_low_noise=True)


def test_table_csv_roundtrip(tmp_path):
    tab = fm.ising_conditional_table(0.05)
    path = tmp_path / "table.csv"
    fm.table_to_csv(tab, path)
    back = fm.table_from_csv(path)
    assert back.labels == tab.labels
    assert np.array_equal(back.p1, tab.p1)


def test_table_csv_validation(tmp_path):
    tab = fm.ising_conditional_table(0.05)
    path = tmp_path / "table.csv"
    fm.table_to_csv(tab, path)
    lines = path.read_text().splitlines()
    # drop a row -> missing configuration
    (tmp_path / "short.csv").write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(fp.PcaError):
        fm.table_from_csv(tmp_path / "short.csv")
    # break normalization on one row
    cells = lines[3].split(",")
    cells[4] = "0.9"
    cells[5] = "0.2"
    broken = lines[:3] + [",".join(cells)] + lines[4:]
    (tmp_path / "bad.csv").write_text("\n".join(broken) + "\n")
    with pytest.raises(fp.PcaError):
        fm.table_from_csv(tmp_path / "bad.csv")


class TestKernelMatchesGeneric:
    """The jitted batch kernels replay the generic driver draw for draw."""

    def test_ising_d1(self):
        pca = fm.ising_pca(1, BETA1)
        batch = fm.cftp_sample_batch(pca, 42, 4, 8, want_origin_depth=True)
        for k in range(8):
            g = fp.cftp_sample(pca, derive_seed_py(42, k), 4,
                               want_vertex_depths=True)
            assert list(g.values) == list(batch.values[k])
            assert g.depth == batch.full_depth[k]
            assert g.vertex_depths[0] == batch.origin_depth[k]

    def test_ising_d2(self):
        pca = fm.ising_pca(2, 0.15)
        batch = fm.cftp_sample_batch(pca, 5, (3, 3), 4)
        for k in range(4):
            g = fp.cftp_sample(pca, derive_seed_py(5, k), (3, 3))
            assert list(g.values) == list(batch.values[k])

    def test_coloring(self):
        pca = fm.coloring_pca(1, 8)
        batch = fm.cftp_sample_batch(pca, 11, 5, 6)
        for k in range(6):
            g = fp.cftp_sample(pca, derive_seed_py(11, k), 5)
            assert list(g.values) == list(batch.values[k])
            assert g.depth == batch.full_depth[k]

    def test_table(self):
        pca = fm.conditional_table_pca(fm.ising_conditional_table(0.05))
        batch = fm.cftp_sample_batch(pca, 13, (3, 3), 5)
        for k in range(5):
            g = fp.cftp_sample(pca, derive_seed_py(13, k), (3, 3))
            assert list(g.values) == list(batch.values[k])


def test_batch_guard_raises():
    pca = fm.ising_pca(1, BETA1)
    # depth-1 coalescence needs adjacent active-isolated sites: impossible
    with pytest.raises(fp.GuardExceeded):
        fm.cftp_sample_batch(pca, 3, 4, 4, guard_depth=1)


def test_line_patch_matches_chain_correlations():
    patch, tau = fm.equilibrium_patch_batch(0.2, 42, 4000, 1)
    spins = 2.0 * patch - 1.0
    assert abs(spins[:, 1].mean()) < 0.05
    corr = (spins[:, 0] * spins[:, 1]).mean()
    assert corr == pytest.approx(np.tanh(0.2), abs=0.05)
    assert tau.min() >= 1


def test_line_kernel_window_growth_consistency():
    # enlarging the probed patch can only deepen the coalescence depth,
    # and the shared noise keeps overlapping cells identical
    p0, t0 = fm.equilibrium_patch_batch(0.2, 9, 200, 0)
    p1, t1 = fm.equilibrium_patch_batch(0.2, 9, 200, 1)
    assert (t1 >= t0).all()
    assert np.array_equal(p1[:, 1], p0[:, 0])
