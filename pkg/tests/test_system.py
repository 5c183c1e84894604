import dataclasses

import numpy as np
import pytest

from nitsche_mortar.analysis import error_l2_domain, linear_problem, manufactured_problem
from nitsche_mortar.checks import coercivity_ratios, galerkin_defect, normalized_consistency, patch_test
from nitsche_mortar.coupling import assemble_coupling
from nitsche_mortar.fem import assemble_stiffness
from nitsche_mortar.problem import ProblemSpec, discretize
from nitsche_mortar.quadrature import collapsed_triangle
from nitsche_mortar.system import (MethodParams, SolverFailure, admissible_gamma0, build_saddle_system,
                                   evaluate_form, flux_weights, penalty, solve)

PB = manufactured_problem(1.0, 10.0)


@pytest.fixture(scope="module")
def disc():
    return discretize(1 / 8, 1 / 12)


def test_params_validation():
    with pytest.raises(ValueError):
        MethodParams(S=1.5)
    with pytest.raises(ValueError):
        MethodParams(gamma0=0.0)
    with pytest.raises(ValueError):
        MethodParams(average="harmonic")


def test_flux_weights():
    assert flux_weights(PB, MethodParams(average="arithmetic")) == (0.5, 0.5)
    w1, w2 = flux_weights(PB, MethodParams())
    assert (w1, w2) == pytest.approx((10 / 11, 1 / 11))
    assert flux_weights(manufactured_problem(2.0, 2.0), MethodParams()) == (0.5, 0.5)


def test_penalty_rules(disc):
    g = penalty(disc, MethodParams(gamma0=2.0, beta_scaled=False), PB)
    np.testing.assert_allclose(g, 2.0 * disc.h)
    g = penalty(disc, MethodParams(gamma0=2.0), PB)
    np.testing.assert_allclose(g, 2.0 * disc.h * 11 / 20)
    g = penalty(disc, MethodParams(gamma0=1.0, local_gamma=True, beta_scaled=False), PB)
    assert g.max() == pytest.approx(disc.h)
    assert len(g) == disc.merged.n_segments


def test_dimension(disc):
    s = build_saddle_system(PB, MethodParams(), disc)
    n = disc.space1.n_free + disc.space2.n_free + disc.mult.n_dofs
    assert s.A.shape == (n, n) and s.F.shape == (n,)


def test_symmetry(disc):
    A = build_saddle_system(PB, MethodParams(S=1.0), disc).A
    assert abs(A - A.T).max() == 0.0
    A = build_saddle_system(PB, MethodParams(S=0.5), disc).A
    assert abs(A - A.T).max() > 0


def test_s0_drops_flux_flux_terms(disc):
    """With S=0 the primal block is the pure stiffness and (v, Lambda) coupling is the mortar mass."""
    s = build_saddle_system(PB, MethodParams(S=0.0), disc)
    n1 = disc.space1.n_vertices
    K1 = assemble_stiffness(disc.space1, PB.beta1, full=True)
    np.testing.assert_allclose(s.full[:n1, :n1].toarray(), K1.toarray(), atol=1e-14)
    b = s.blocks
    n2 = disc.space2.n_vertices
    np.testing.assert_allclose(s.full[:n1, n1 + n2:].toarray(), -b.Q_s.T.toarray(), atol=1e-14)


def test_block_signs_against_definition(disc):
    """Matrix entries agree with the form written out term by term."""
    params = MethodParams(S=0.7, gamma0=0.3)
    s = build_saddle_system(PB, params, disc)
    b = assemble_coupling(disc.merged, disc.space1, disc.space2, disc.mult, PB.beta1, PB.beta2)
    gamma = s.gamma[0]
    w1, w2 = flux_weights(PB, params)
    rng = np.random.default_rng(5)
    n1, n2, nm = disc.space1.n_vertices, disc.space2.n_vertices, disc.mult.n_dofs
    v1, v2, w1v, w2v = (rng.standard_normal(n) for n in (n1, n2, n1, n2))
    mu, lam = rng.standard_normal(nm), rng.standard_normal(nm)
    K1 = assemble_stiffness(disc.space1, PB.beta1, full=True)
    K2 = assemble_stiffness(disc.space2, PB.beta2, full=True)
    S = params.S
    # {{v}} = w1 F1(v) - w2 F2(v) with outward fluxes; products through the Gram blocks
    avg_avg = (w1 * w1 * w1v @ b.Rn_ss @ v1 - w1 * w2 * w1v @ b.Rn_sm @ v2
               - w2 * w1 * w2v @ b.Rn_sm.T @ v1 + w2 * w2 * w2v @ b.Rn_mm @ v2)
    expected = (w1v @ K1 @ v1 + w2v @ K2 @ v2
                - mu @ (b.Q_s @ w1v - b.Q_m @ w2v)
                + S * gamma * mu @ (w1 * b.R_s @ w1v - w2 * b.R_m @ w2v)
                - lam @ (b.Q_s @ v1 - b.Q_m @ v2)
                - S * gamma * avg_avg
                + gamma * lam @ (w1 * b.R_s @ v1 - w2 * b.R_m @ v2)
                - gamma * lam @ b.Q_mm @ mu)
    got = evaluate_form((v1, v2), mu, (w1v, w2v), lam, s)
    assert got == pytest.approx(expected, rel=1e-12)


def test_bilinearity(disc):
    s = build_saddle_system(PB, MethodParams(S=0.5), disc)
    rng = np.random.default_rng(1)
    n = disc.space1.n_vertices + disc.space2.n_vertices
    v, w = rng.standard_normal(n), rng.standard_normal(n)
    mu, lam = rng.standard_normal(disc.mult.n_dofs), rng.standard_normal(disc.mult.n_dofs)
    a = evaluate_form(v, mu, w, lam, s)
    assert evaluate_form(2 * v, 2 * mu, w, lam, s) == pytest.approx(2 * a, rel=1e-13)
    assert evaluate_form(v, mu, 3 * w, 3 * lam, s) == pytest.approx(3 * a, rel=1e-13)
    with pytest.raises(ValueError):
        evaluate_form(v[:-1], mu, w, lam, s)


def test_mismatched_blocks_rejected(disc):
    other = discretize(0.25, 1 / 6)
    blocks = assemble_coupling(other.merged, other.space1, other.space2, other.mult, 1.0, 10.0)
    with pytest.raises(ValueError):
        build_saddle_system(PB, MethodParams(), disc, blocks=blocks)


def test_zero_data_zero_solution(disc):
    zero = lambda x, y: np.zeros(np.broadcast(x, y).shape)  # noqa: E731
    pb = ProblemSpec(beta1=1.0, beta2=10.0, f1=zero, f2=zero)
    sol = solve(build_saddle_system(pb, MethodParams(), disc))
    assert not sol.full.any()


def test_patch_test():
    eu, el = patch_test()
    assert eu <= 1e-10 and el <= 1e-8
    eu, el = patch_test(h=(1 / 8, 1 / 6), beta=3.0)
    assert eu <= 1e-10 and el <= 1e-8


def test_dirichlet_values_exact():
    pb = linear_problem(1.0)
    d = discretize(0.25, 1 / 6, endpoint_dofs=True)
    sol = solve(build_saddle_system(pb, MethodParams(), d))
    for side in (1, 2):
        sp_ = d.space(side)
        np.testing.assert_array_equal(sol.u(side)[sp_.dirichlet], sp_.mesh.vertices[sp_.dirichlet, 0])


def test_coarse_level_error():
    d = discretize(0.25, 1 / 6)
    sol = solve(build_saddle_system(PB, MethodParams(), d))
    e = error_l2_domain(sol, PB.u, (d.space1, d.space2))
    assert 0.062158 / 2 <= e <= 2 * 0.062158
    assert sol.residual <= 1e-10


def test_consistency_degree4():
    assert normalized_consistency() <= 1e-6


def test_consistency_high_order_rule():
    assert normalized_consistency(rule=collapsed_triangle(8)) <= 1e-13
    assert normalized_consistency(beta=(1e-7, 1e7), rule=collapsed_triangle(8)) <= 1e-13


def test_galerkin_orthogonality():
    assert galerkin_defect() <= 1e-8


def test_coercivity():
    ratios, gamma0 = coercivity_ratios()
    assert gamma0 < admissible_gamma0(1.0, 1.0, 2 ** 0.75)
    assert ratios.min() >= 0.05


def test_primal_block_positive_definite(disc):
    s = build_saddle_system(PB, MethodParams(), disc)
    n = disc.space1.n_free + disc.space2.n_free
    assert np.linalg.eigvalsh(s.A[:n, :n].toarray()).min() > 0


def test_relabelled_elements_same_solution(disc):
    from nitsche_mortar.checks import _relabelled

    a = solve(build_saddle_system(PB, MethodParams(), disc))
    b = solve(build_saddle_system(PB, MethodParams(), _relabelled(disc, 7)))
    assert np.abs(a.full - b.full).max() <= 1e-10


def test_singular_system_raises(disc):
    s = build_saddle_system(PB, MethodParams(), disc)
    A = s.A.tolil()
    A[0, :] = 0
    A[:, 0] = 0
    with pytest.raises(SolverFailure):
        solve(dataclasses.replace(s, A=A.tocsr()))


def test_write_coo(tmp_path, disc):
    s = build_saddle_system(PB, MethodParams(), disc)
    path = tmp_path / "A.txt"
    s.write_coo(path)
    rows = np.loadtxt(path)
    assert len(rows) == s.A.nnz
    i, j, v = int(rows[0, 0]), int(rows[0, 1]), rows[0, 2]
    assert s.A[i, j] == v
