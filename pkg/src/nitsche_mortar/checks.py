"""
Invariant suite run by ``nitsche-mortar --check``.

Every check returns a :class:`CheckResult`; none of them raise on a failed
property. The interface quadrature oracle here deliberately avoids the
assembly helpers of :mod:`nitsche_mortar.coupling`: basis functions are
evaluated by point location and barycentric coordinates computed from
scratch.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .analysis import (eoc, interpolation_errors, linear_problem,
                       manufactured_problem, run_convergence_study, check_source)
from .coupling import (assemble_coupling, estimate_trace_constant, interface_l2_norm,
                       l2_project, merge_partitions, multiplier_moments, multiplier_space)
from .fem import assemble_stiffness, fe_space
from .problem import Discretization, discretize
from .quadrature import collapsed_triangle
from .system import (MethodParams, _load_with_rule, admissible_gamma0, build_saddle_system,
                     consistency_residual, continuous_form_rows, evaluate_form, solve)

ORACLE_CELLS = 10080  # multiple of 12, so cells never straddle a 1/4 or 1/6 breakpoint


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


# -- brute-force interface quadrature ---------------------------------------

def _barycentric_data(mesh):
    """Per triangle, inverse of [[1,1,1],[x],[y]]: rows give barycentric coefficients."""
    p = mesh.vertices[mesh.triangles]
    M = np.stack([np.ones((len(p), 3)), p[:, :, 0], p[:, :, 1]], axis=1)
    return np.linalg.inv(M)


def _basis_on_gamma(space, y, x_gamma=0.5):
    """Values and outward normal derivatives of every vertex hat at points ``(x_gamma, y)``."""
    mesh = space.mesh
    inv = _barycentric_data(mesh)
    pts = np.stack([np.ones_like(y), np.full_like(y, x_gamma), y])
    bary = np.einsum("tkj,jp->tpk", inv, pts)
    inside = np.all(bary >= -1e-12, axis=2)
    owner = np.argmax(inside, axis=0)
    if not np.all(inside[owner, np.arange(len(y))]):
        raise RuntimeError("interface point not covered by the mesh")
    normal = space.trace.normal
    vals = np.zeros((len(y), mesh.n_vertices))
    dn = np.zeros((len(y), mesh.n_vertices))
    idx = np.arange(len(y))
    for k in range(3):
        verts = mesh.triangles[owner, k]
        vals[idx, verts] = bary[owner, idx, k]
        dn[idx, verts] = inv[owner, k, 1] * normal[0] + inv[owner, k, 2] * normal[1]
    return vals, dn


def _multiplier_on_gamma(mult, y):
    nodes = mult.trace.breakpoints
    out = np.zeros((len(y), mult.n_dofs))
    for dof, node in enumerate(mult.node_of_dof):
        unit = np.zeros(len(nodes))
        unit[node] = 1.0
        out[:, dof] = np.interp(y, nodes, unit)
    return out


def _midpoint_blocks(disc, beta1, beta2, cells):
    y = (np.arange(cells) + 0.5) / cells
    w = 1.0 / cells
    v1, d1 = _basis_on_gamma(disc.space1, y)
    v2, d2 = _basis_on_gamma(disc.space2, y)
    f1, f2 = beta1 * d1, beta2 * d2
    psi = _multiplier_on_gamma(disc.mult, y)
    return {
        "Q_s": w * psi.T @ v1, "Q_m": w * psi.T @ v2, "Q_mm": w * psi.T @ psi,
        "R_s": w * psi.T @ f1, "R_m": w * psi.T @ f2,
        "Rn_ss": w * f1.T @ f1, "Rn_sm": w * f1.T @ f2, "Rn_mm": w * f2.T @ f2,
    }


def brute_force_blocks(disc: Discretization, beta1: float, beta2: float,
                       cells: int = ORACLE_CELLS) -> dict:
    """Interface blocks by composite midpoint on ``cells`` and ``2 cells`` uniform cells.

    The two sums are Richardson-extrapolated; the result is exact up to
    rounding for integrands that are quadratic on each cell.
    """
    coarse = _midpoint_blocks(disc, beta1, beta2, cells)
    fine = _midpoint_blocks(disc, beta1, beta2, 2 * cells)
    return {k: (4.0 * fine[k] - coarse[k]) / 3.0 for k in coarse}


def compare_blocks(blocks, oracle: dict) -> dict:
    """Largest entry mismatch of each block relative to that block's largest oracle entry."""
    out = {}
    for name, ref in oracle.items():
        got = getattr(blocks, name).toarray()
        scale = np.abs(ref).max()
        out[name] = float(np.abs(got - ref).max() / scale) if scale > 0 else float(np.abs(got).max())
    return out


# -- individual checks ------------------------------------------------------

def check_quadrature_oracle(tol: float = 1e-9) -> CheckResult:
    disc = discretize(0.25, 1.0 / 6.0)
    blocks = assemble_coupling(disc.merged, disc.space1, disc.space2, disc.mult, 1.0, 10.0)
    errs = compare_blocks(blocks, brute_force_blocks(disc, 1.0, 10.0))
    worst = max(errs, key=errs.get)
    return CheckResult("interface blocks vs midpoint oracle", errs[worst] <= tol,
                       f"worst {worst} rel {errs[worst]:.2e} (tol {tol:g})")


def check_merge_lengths() -> CheckResult:
    disc = discretize(0.25, 1.0 / 6.0)
    err = abs(disc.merged.lengths.sum() - 1.0)
    return CheckResult("merged segments tile the interface", err <= 1e-14 and disc.merged.n_segments == 8,
                       f"{disc.merged.n_segments} segments, |sum - 1| = {err:.1e}")


def check_block_definiteness() -> CheckResult:
    disc = discretize(1.0 / 8.0, 1.0 / 12.0)
    b = assemble_coupling(disc.merged, disc.space1, disc.space2, disc.mult, 1.0, 10.0)
    qmm = b.Q_mm.toarray()
    min_q = np.linalg.eigvalsh(qmm).min()
    min_ss = np.linalg.eigvalsh(b.Rn_ss.toarray()).min() / max(abs(b.Rn_ss).max(), 1e-300)
    min_mm = np.linalg.eigvalsh(b.Rn_mm.toarray()).min() / max(abs(b.Rn_mm).max(), 1e-300)
    ok = np.abs(qmm - qmm.T).max() <= 1e-14 * np.abs(qmm).max() and min_q > 0 and min_ss > -1e-12 and min_mm > -1e-12
    return CheckResult("Q_mm SPD, Rn_ss and Rn_mm PSD", bool(ok),
                       f"min eig Q_mm {min_q:.2e}, Rn_ss {min_ss:.1e}, Rn_mm {min_mm:.1e} (relative)")


def check_projection_orthogonality() -> CheckResult:
    def phi(s):
        return np.exp(s) * np.sin(3 * s)

    worst = 0.0
    for h in (1 / 6, 1 / 12, 1 / 24):
        mult = discretize(0.25, h).mult
        c = l2_project(phi, mult)
        moments = multiplier_moments(lambda s: phi(s) - mult.evaluate(c, s), mult)
        worst = max(worst, np.abs(moments).max() / interface_l2_norm(phi, mult.trace))
    return CheckResult("projection orthogonality", worst <= 1e-10, f"max |<phi - Pi phi, chi>| / ||phi|| = {worst:.1e}")


def projection_rates(hs=(1 / 6, 1 / 12, 1 / 24, 1 / 48)) -> np.ndarray:
    def phi(s):
        return np.sin(np.pi * s)

    errs = []
    for h in hs:
        mult = discretize(0.25, h).mult
        c = l2_project(phi, mult)
        errs.append(interface_l2_norm(lambda s: phi(s) - mult.evaluate(c, s), mult.trace))
    return eoc(errs, hs)


def check_projection_rate() -> CheckResult:
    rates = projection_rates()
    return CheckResult("projection L2 rate on sin(pi y)", bool(rates.min() >= 1.5),
                       "EOC " + ", ".join(f"{r:.3f}" for r in rates))


def trace_constants(hs=(1 / 4, 1 / 8, 1 / 16)) -> list[float]:
    return [estimate_trace_constant(discretize(h, h).space1) for h in hs]


def check_trace_constant() -> CheckResult:
    cs = trace_constants()
    spread = (max(cs) - min(cs)) / min(cs)
    return CheckResult("inverse trace constant h-stable", spread < 0.05,
                       f"C_I = {', '.join(f'{c:.6f}' for c in cs)}, spread {spread:.1e}")


def check_symmetry() -> CheckResult:
    disc = discretize(1 / 8, 1 / 12)
    pb = manufactured_problem(1.0, 10.0)
    sym = build_saddle_system(pb, MethodParams(S=1.0), disc).A
    half = build_saddle_system(pb, MethodParams(S=0.5), disc).A
    d1 = abs(sym - sym.T).max()
    d2 = abs(half - half.T).max()
    return CheckResult("S=1 symmetric, S=0.5 not", d1 == 0 and d2 > 0,
                       f"max|A-A^T| = {d1:.1e} (S=1), {d2:.1e} (S=0.5)")


def coercivity_ratios(samples: int = 100, seed: int = 0, h=(1 / 8, 1 / 12), margin: float = 0.9):
    """Ratios ``A(v,mu;v,-mu) / (||v||_X^2 + ||gamma^1/2 mu||^2)`` for random discrete pairs.

    Uses unit coefficients and ``gamma0 = margin`` times the admissible bound.
    Returns ``(ratios, gamma0)``.
    """
    from .problem import ProblemSpec

    zero = lambda x, y: np.zeros(np.broadcast(x, y).shape)  # noqa: E731
    pb = ProblemSpec(beta1=1.0, beta2=1.0, a1=1.0, a2=1.0, f1=zero, f2=zero)
    disc = discretize(*h)
    c_i = max(estimate_trace_constant(disc.space1), estimate_trace_constant(disc.space2))
    gamma0 = margin * admissible_gamma0(1.0, 1.0, c_i)
    system = build_saddle_system(pb, MethodParams(S=1.0, gamma0=gamma0), disc)
    K1 = assemble_stiffness(disc.space1, 1.0, 1.0, full=True)
    K2 = assemble_stiffness(disc.space2, 1.0, 1.0, full=True)
    qmm = system.blocks.Q_mm  # gamma already folded in
    rng = np.random.default_rng(seed)
    ratios = []
    for _ in range(samples):
        v1 = disc.space1.extend(rng.standard_normal(disc.space1.n_free))
        v2 = disc.space2.extend(rng.standard_normal(disc.space2.n_free))
        mu = rng.standard_normal(disc.mult.n_dofs)
        num = evaluate_form((v1, v2), mu, (v1, v2), -mu, system)
        den = v1 @ K1 @ v1 + v2 @ K2 @ v2 + mu @ qmm @ mu
        ratios.append(num / den)
    return np.array(ratios), gamma0


def check_coercivity() -> CheckResult:
    ratios, gamma0 = coercivity_ratios()
    return CheckResult("coercivity on random pairs", bool(ratios.min() >= 0.05),
                       f"min ratio {ratios.min():.4f} at gamma0 = {gamma0:.4f}")


def normalized_consistency(beta=(1.0, 10.0), h=(1 / 8, 1 / 12), rule=None) -> float:
    pb = manufactured_problem(*beta)
    system = build_saddle_system(pb, MethodParams(), discretize(*h))
    res = consistency_residual(pb, system, rule)
    return float(np.abs(res).max() / np.abs(system.F).max())


def check_consistency() -> CheckResult:
    r = normalized_consistency()
    return CheckResult("consistency of the exact pair", r <= 1e-6, f"max normalized residual {r:.2e}")


def galerkin_defect(beta=(1.0, 10.0), h=(1 / 8, 1 / 12), n: int = 8) -> float:
    """``max |A(u,lam;phi) - A(u_h,lam_h;phi)|`` over free test functions, relative to ``max |F|``.

    Both the continuous form and the discrete load use a degree ``2n-2``
    collapsed rule, so that quadrature error on the smooth data does not
    mask the orthogonality.
    """
    pb = manufactured_problem(*beta)
    system = build_saddle_system(pb, MethodParams(), discretize(*h))
    rule = collapsed_triangle(n)
    load = _load_with_rule(pb, system, rule)
    F = load[system.free] - system.full[system.free] @ system.lift
    system = dataclasses.replace(system, F=F, full_load=load)
    sol = solve(system)
    exact_rows = continuous_form_rows(pb, system, rule)[system.free]
    discrete_rows = (system.full @ sol.full)[system.free]
    return float(np.abs(exact_rows - discrete_rows).max() / np.abs(F).max())


def check_galerkin() -> CheckResult:
    d = galerkin_defect()
    return CheckResult("Galerkin orthogonality", d <= 1e-8, f"max relative defect {d:.1e}")


def patch_test(h=(0.25, 1 / 6), beta: float = 1.0):
    """Solve ``u = x``; returns ``(max |u_h - x|, max |lam_h - beta|)``."""
    pb = linear_problem(beta)
    disc = discretize(*h, endpoint_dofs=True)
    sol = solve(build_saddle_system(pb, MethodParams(), disc))
    err_u = max(np.abs(sol.u1 - disc.space1.mesh.vertices[:, 0]).max(),
                np.abs(sol.u2 - disc.space2.mesh.vertices[:, 0]).max())
    return float(err_u), float(np.abs(sol.lam - beta).max())


def check_patch() -> CheckResult:
    eu, el = patch_test()
    return CheckResult("linear patch test", eu <= 1e-9 and el <= 1e-8,
                       f"max|u_h - x| = {eu:.1e}, max|lam_h - 1| = {el:.1e}")


def _relabelled(disc: Discretization, seed: int) -> Discretization:
    rng = np.random.default_rng(seed)
    spaces = []
    for space in (disc.space1, disc.space2):
        mesh = space.mesh
        perm = rng.permutation(mesh.n_triangles)
        spaces.append(fe_space(dataclasses.replace(mesh, triangles=mesh.triangles[perm], _cache={})))
    merged = merge_partitions(spaces[0].trace, spaces[1].trace)
    mult = multiplier_space(spaces[1].trace, disc.mult.include_endpoints)
    return Discretization(spaces[0], spaces[1], merged, mult)


def check_relabel() -> CheckResult:
    pb = manufactured_problem(1.0, 10.0)
    disc = discretize(1 / 8, 1 / 12)
    a = solve(build_saddle_system(pb, MethodParams(), disc))
    b = solve(build_saddle_system(pb, MethodParams(), _relabelled(disc, 1)))
    diff = np.abs(a.full - b.full).max()
    return CheckResult("invariance under element relabelling", diff <= 1e-10, f"max difference {diff:.1e}")


def check_source_data() -> CheckResult:
    pts = [(x, y) for x in (0.1, 0.3, 0.45, 0.55, 0.8) for y in (0.2, 0.5, 0.7, 0.9)]
    worst = max(check_source(manufactured_problem(*b), pts) for b in ((1.0, 10.0), (1e-7, 1e7)))
    return CheckResult("source matches the exact solution", worst <= 1e-4, f"max relative mismatch {worst:.1e}")


def check_interface_conditions() -> CheckResult:
    pb = manufactured_problem(1.0, 10.0)
    y = np.linspace(0.02, 0.98, 20)
    x = np.full_like(y, 0.5)
    jump = np.abs(pb.u[0](x, y) - pb.u[1](x, y)).max()
    flux = np.abs(pb.beta1 * pb.grad_u[0](x, y)[0] - pb.beta2 * pb.grad_u[1](x, y)[0]).max()
    return CheckResult("exact solution has no interface jumps", jump < 1e-14 and flux < 1e-12,
                       f"[[u]] {jump:.1e}, [[flux]] {flux:.1e}")


def interpolation_rates(levels=None):
    """EOCs of the nodal interpolant of the manufactured ``u`` in L2 and broken H1."""
    pb = manufactured_problem(1.0, 1.0)
    levels = levels or [(h, h) for h in (1 / 4, 1 / 8, 1 / 16)]
    l2, h1 = [], []
    for h1_, h2_ in levels:
        disc = discretize(h1_, h2_)
        pairs = [interpolation_errors(pb.u[0], pb.grad_u[0], sp_) for sp_ in (disc.space1, disc.space2)]
        l2.append(math.hypot(pairs[0][0], pairs[1][0]))
        h1.append(math.hypot(pairs[0][1], pairs[1][1]))
    hs = [max(pair) for pair in levels]
    return eoc(l2, hs), eoc(h1, hs)


def check_interpolation_rates() -> CheckResult:
    r2, r1 = interpolation_rates()
    return CheckResult("interpolation rates", r2[-1] >= 1.9 and r1[-1] >= 0.9,
                       f"L2 EOC {', '.join(f'{r:.3f}' for r in r2)}; H1 EOC {', '.join(f'{r:.3f}' for r in r1)}")


def _study(beta1, beta2, **overrides):
    from .config import StudyConfig

    return run_convergence_study(StudyConfig(beta1=beta1, beta2=beta2, **overrides))


def check_study_moderate_contrast() -> CheckResult:
    rep = _study(1.0, 10.0)
    e = rep.column("e_u_l2")
    recomputed = np.allclose(eoc(e, rep.column("h")), rep.p, rtol=0, atol=0)
    monotone = bool(np.all(np.diff(e) < 0))
    ok = 1.85 <= rep.p[-1] <= 2.15 and recomputed and monotone
    return CheckResult("study (1, 10): L2 rate, monotone errors, EOC recomputes", ok,
                       f"final p {rep.p[-1]:.4f}, final q {rep.q[-1]:.4f}")


def check_study_unsymmetric() -> CheckResult:
    rep = _study(1.0, 10.0, S=0.0)
    return CheckResult("unsymmetric variant S=0", bool(rep.p[-1] >= 1.4 and np.all(np.isfinite(rep.rows[-1][3:6]))),
                       f"final p {rep.p[-1]:.4f}")


def check_study_h1_rate() -> CheckResult:
    rep = _study(1.0, 10.0)
    r = eoc(rep.column("e_u_h1"), rep.column("h"))
    return CheckResult("broken H1 rate", abs(r[-1] - 1.0) <= 0.15, f"final EOC {r[-1]:.4f}")


ALL_CHECKS = (
    check_quadrature_oracle, check_merge_lengths, check_block_definiteness,
    check_projection_orthogonality, check_projection_rate, check_trace_constant,
    check_symmetry, check_coercivity, check_consistency, check_galerkin, check_patch,
    check_relabel, check_source_data, check_interface_conditions, check_interpolation_rates,
    check_study_moderate_contrast, check_study_unsymmetric, check_study_h1_rate,
)


def run_checks(checks=ALL_CHECKS, out=print) -> list[CheckResult]:
    results = []
    for fn in checks:
        try:
            res = fn()
        except Exception as exc:  # a crashing check is a failed check
            res = CheckResult(fn.__name__, False, f"raised {type(exc).__name__}: {exc}")
        out(res.line())
        results.append(res)
    passed = sum(r.passed for r in results)
    out(f"{passed}/{len(results)} checks passed")
    return results
