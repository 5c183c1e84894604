import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nitsche_mortar.checks import brute_force_blocks, compare_blocks, projection_rates
from nitsche_mortar.coupling import (assemble_coupling, assemble_flux_flux, assemble_flux_mass,
                                     assemble_mortar_mass, assemble_multiplier_mass,
                                     estimate_trace_constant, interface_l2_norm, l2_project,
                                     merge_partitions, multiplier_moments, multiplier_space,
                                     pencil_max_quotient)
from nitsche_mortar.analysis import eoc
from nitsche_mortar.fem import fe_space
from nitsche_mortar.mesh import build_rect_tri_mesh, interface_trace
from nitsche_mortar.problem import OMEGA1, OMEGA2, discretize


def _space(rect_side, nx, ny):
    rect, side = (OMEGA1, "right") if rect_side == 1 else (OMEGA2, "left")
    return fe_space(build_rect_tri_mesh(rect, nx, ny, "NE", side))


def _trace(rect_side, ny, nx=1):
    return _space(rect_side, nx, ny).trace


# -- merged partition ---------------------------------------------------------

def test_merge_halves_and_thirds():
    m = merge_partitions(_trace(1, 2), _trace(2, 3))
    np.testing.assert_allclose(m.breakpoints, [0, 1 / 3, 1 / 2, 2 / 3, 1], rtol=1e-15)
    assert m.n_segments == 4
    np.testing.assert_array_equal(m.parent1, [0, 0, 1, 1])
    np.testing.assert_array_equal(m.parent2, [0, 1, 1, 2])


def test_merge_identical_traces():
    t = _trace(2, 6)
    m = merge_partitions(t, t)
    np.testing.assert_array_equal(m.breakpoints, t.breakpoints)
    np.testing.assert_array_equal(m.parent1, np.arange(6))


def test_merge_study_pair():
    m = discretize(0.25, 1 / 6).merged
    expected = [0, 1 / 6, 1 / 4, 1 / 3, 1 / 2, 2 / 3, 3 / 4, 5 / 6, 1]
    np.testing.assert_allclose(m.breakpoints, expected, rtol=1e-15, atol=1e-16)
    assert m.n_segments == 8
    assert abs(m.lengths.sum() - 1.0) <= 1e-14


def test_merge_different_extent_rejected():
    tall = interface_trace(build_rect_tri_mesh((0.5, 1.0, 0.0, 2.0), 1, 2, interface_side="left"), "left")
    with pytest.raises(ValueError):
        merge_partitions(_trace(1, 2), tall)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 40), st.integers(1, 40))
def test_merge_properties(n1, n2):
    t1, t2 = _trace(1, n1), _trace(2, n2)
    m = merge_partitions(t1, t2)
    assert abs(m.lengths.sum() - 1.0) <= 1e-14
    assert np.all(m.lengths > 0)
    # each merged segment inside exactly one parent segment per side
    for t, parent in ((t1, m.parent1), (t2, m.parent2)):
        assert np.all(t.breakpoints[parent] <= m.breakpoints[:-1] + 1e-15)
        assert np.all(t.breakpoints[parent + 1] >= m.breakpoints[1:] - 1e-15)
    # fused duplicates: common breakpoints appear once
    assert m.n_segments == len(np.unique(np.round(np.concatenate([t1.breakpoints, t2.breakpoints]), 12))) - 1


# -- mass blocks ----------------------------------------------------------------

def test_multiplier_mass_thirds():
    t = _trace(2, 3)
    mult = multiplier_space(t)
    Q = assemble_multiplier_mass(merge_partitions(t, t), mult).toarray()
    np.testing.assert_allclose(Q, [[2 / 9, 1 / 18], [1 / 18, 2 / 9]], rtol=1e-14)


def test_matching_traces_give_square_mass():
    d = discretize(0.25, 0.25)
    Qs = assemble_mortar_mass(d.merged, 1, d.mult, d.space1.n_vertices).toarray()
    Qmm = assemble_multiplier_mass(d.merged, d.mult).toarray()
    cols = d.space1.trace.vertex_ids[d.mult.node_of_dof]
    np.testing.assert_allclose(Qs[:, cols], Qmm, rtol=1e-14)


def test_multiplier_mass_row_sum():
    d = discretize(0.25, 1 / 6)
    Q = assemble_multiplier_mass(d.merged, d.mult).toarray()
    inner = slice(1, d.mult.n_dofs - 1)  # both neighbours are multiplier dofs
    np.testing.assert_allclose(Q.sum(axis=1)[inner], 1 / 6, rtol=1e-14)


def test_trace_mass_row_sums_integrate_hats():
    # the side-1 trace hats form a partition of unity on Gamma
    d = discretize(0.25, 1 / 6)
    Qs = assemble_mortar_mass(d.merged, 1, d.mult, d.space1.n_vertices).toarray()
    np.testing.assert_allclose(Qs.sum(axis=1), multiplier_moments(np.ones_like, d.mult), rtol=1e-14)


# -- flux blocks ---------------------------------------------------------------

def _single_triangle_setup(beta1=1.0):
    s1 = fe_space(build_rect_tri_mesh(OMEGA1, 1, 1, "NE", "right"))
    s2 = fe_space(build_rect_tri_mesh(OMEGA2, 1, 2, "NE", "left"))
    merged = merge_partitions(s1.trace, s2.trace)
    mult = multiplier_space(s2.trace, include_endpoints=True)
    return s1, s2, merged, mult


def test_flux_mass_single_triangle():
    # owning triangle (0,0),(1/2,0),(1/2,1): hats 1-2x, 2x-y, y with normal fluxes -2, 2, 0
    beta1 = 3.0
    s1, s2, merged, mult = _single_triangle_setup()
    R = assemble_flux_mass(merged, 1, s1, beta1, mult).toarray()
    v = s1.mesh.vertices
    idx = {tuple(p): k for k, p in enumerate(v)}
    psi_int = np.array([0.25, 0.5, 0.25])
    np.testing.assert_allclose(R[:, idx[(0.0, 0.0)]], -2 * beta1 * psi_int, rtol=1e-14)
    np.testing.assert_allclose(R[:, idx[(0.5, 0.0)]], 2 * beta1 * psi_int, rtol=1e-14)
    np.testing.assert_allclose(R[:, idx[(0.5, 1.0)]], 0.0, atol=1e-15)
    np.testing.assert_allclose(R[:, idx[(0.0, 1.0)]], 0.0, atol=0)


def test_flux_mass_zero_beta_and_partition_of_unity():
    d = discretize(0.25, 1 / 6)
    R0 = assemble_flux_mass(d.merged, 1, d.space1, 0.0, d.mult)
    assert abs(R0).max() == 0
    for side in (1, 2):
        R = assemble_flux_mass(d.merged, side, d.space(side), 7.0, d.mult).toarray()
        assert np.abs(R.sum(axis=1)).max() <= 1e-13
        # off-interface vertices of the strip have nonzero normal flux
        off = np.flatnonzero(np.abs(R).sum(axis=0) > 0)
        assert np.any(d.space(side).mesh.vertices[off, 0] != 0.5)


def test_flux_flux_single_triangle():
    s1, s2, merged, _ = _single_triangle_setup()
    rss, rsm, rmm = assemble_flux_flux(merged, s1, s2, 1.0, 1.0)
    v = s1.mesh.vertices
    idx = [int(np.flatnonzero((v == p).all(axis=1))[0]) for p in ([0, 0], [0.5, 0], [0.5, 1])]
    block = rss.toarray()[np.ix_(idx, idx)]
    np.testing.assert_allclose(block, [[4, -4, 0], [-4, 4, 0], [0, 0, 0]], atol=1e-14)
    assert np.linalg.matrix_rank(rss.toarray()) == 1


def test_flux_flux_zero_and_psd():
    d = discretize(0.25, 1 / 6)
    for blk in assemble_flux_flux(d.merged, d.space1, d.space2, 0.0, 0.0):
        assert abs(blk).max() == 0
    rss, rsm, rmm = assemble_flux_flux(d.merged, d.space1, d.space2, 1.0, 10.0)
    rng = np.random.default_rng(3)
    for M in (rss, rmm):
        for _ in range(50):
            x = rng.standard_normal(M.shape[0])
            assert x @ M @ x >= -1e-12 * abs(M).max()
    # the joint Gram matrix is also semidefinite
    from scipy.sparse import bmat

    G = bmat([[rss, rsm], [rsm.T, rmm]]).toarray()
    assert np.linalg.eigvalsh(G).min() >= -1e-10 * np.abs(G).max()


def test_blocks_against_midpoint_oracle():
    d = discretize(0.25, 1 / 6)
    blocks = assemble_coupling(d.merged, d.space1, d.space2, d.mult, 1.0, 10.0)
    errs = compare_blocks(blocks, brute_force_blocks(d, 1.0, 10.0))
    assert max(errs.values()) <= 1e-9, errs


def test_blocks_against_midpoint_oracle_nw_endpoints():
    d = discretize(1 / 8, 1 / 6, "NW", endpoint_dofs=True)
    blocks = assemble_coupling(d.merged, d.space1, d.space2, d.mult, 2.0, 0.5)
    errs = compare_blocks(blocks, brute_force_blocks(d, 2.0, 0.5, cells=4800))
    assert max(errs.values()) <= 1e-9, errs


def test_segment_weights_scale_blocks():
    d = discretize(0.25, 1 / 6)
    plain = assemble_coupling(d.merged, d.space1, d.space2, d.mult, 1.0, 10.0)
    scaled = assemble_coupling(d.merged, d.space1, d.space2, d.mult, 1.0, 10.0, weights=0.3)
    for name in ("Q_s", "Q_mm", "R_m", "Rn_sm"):
        np.testing.assert_allclose(getattr(scaled, name).toarray(), 0.3 * getattr(plain, name).toarray(),
                                   rtol=1e-14, atol=1e-16)


# -- projection ----------------------------------------------------------------

def test_projection_idempotent():
    mult = discretize(0.25, 1 / 12).mult
    c = np.random.default_rng(0).standard_normal(mult.n_dofs)
    np.testing.assert_allclose(l2_project(lambda s: mult.evaluate(c, s), mult), c, rtol=1e-11, atol=1e-12)


def test_projection_of_one_is_orthogonal():
    mult = discretize(0.25, 1 / 6).mult
    c = l2_project(np.ones_like, mult)
    assert abs(mult.evaluate(c, np.array([0.0]))[0] - 1.0) > 0.5  # excluded endpoint dofs
    moments = multiplier_moments(lambda s: 1.0 - mult.evaluate(c, s), mult)
    assert np.abs(moments).max() <= 1e-14


def test_projection_rates():
    hs = [1 / 6, 1 / 12, 1 / 24]
    errs = []
    for h in hs:
        mult = discretize(0.25, h).mult
        c = l2_project(lambda s: np.sin(np.pi * s), mult)
        errs.append(interface_l2_norm(lambda s: np.sin(np.pi * s) - mult.evaluate(c, s), mult.trace))
    weighted = eoc(np.sqrt(hs) * np.array(errs), hs)
    assert weighted.min() >= 1.9
    assert projection_rates().min() >= 1.5


# -- inverse trace constant ---------------------------------------------------

def test_trace_constant_single_triangle():
    # sqrt(h |e| / |K|) for the triangle (0,0),(1/2,0),(1/2,1)
    s1 = fe_space(build_rect_tri_mesh(OMEGA1, 1, 1, "NE", "right"))
    h = np.sqrt(1.25)
    assert estimate_trace_constant(s1) == pytest.approx(np.sqrt(h * 1.0 / 0.25), rel=1e-8)


def test_trace_constant_right_isosceles():
    assert estimate_trace_constant(discretize(0.25, 0.25).space1) == pytest.approx(2 ** 0.75, rel=1e-8)


def test_trace_constant_h_stable():
    cs = [estimate_trace_constant(discretize(h, h).space1) for h in (1 / 4, 1 / 8, 1 / 16)]
    assert (max(cs) - min(cs)) / min(cs) < 0.05
    cs2 = [estimate_trace_constant(discretize(h, h).space2) for h in (1 / 4, 1 / 8, 1 / 16)]
    assert (max(cs2) - min(cs2)) / min(cs2) < 0.05


def test_trace_constant_bounded_under_refinement_along_gamma():
    cs = [estimate_trace_constant(_space(1, 2, ny)) for ny in (4, 8, 16, 32, 64)]
    assert max(cs) <= 2.0
    assert cs[-1] == pytest.approx(cs[-2], rel=0.01)


def test_trace_constant_grows_with_anisotropy_normal_to_gamma():
    # thin strip triangles: the constant depends on shape regularity
    cs = [estimate_trace_constant(_space(1, nx, 4)) for nx in (2, 8, 32)]
    assert cs[0] < cs[1] < cs[2]


def test_pencil_quotient_dense():
    top = np.diag([2.0, 3.0, 0.0])
    bottom = np.diag([1.0, 2.0, 0.0])
    assert pencil_max_quotient(top, bottom) == pytest.approx(2.0)
