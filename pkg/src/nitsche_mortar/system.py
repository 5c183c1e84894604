"""
Global stabilized saddle-point system.

With ``{{q}}`` the (weighted) interface average of the flux ``beta grad(.).nu_1`` and
``[[v]] = v_1 - v_2``, the assembled form is

    A(v, mu; w, L) = a(v, w) - <mu, [[w]]> + S <gamma mu, {{w}}>
                     - <L, [[v]]> - S <gamma {{v}}, {{w}}>
                     + <gamma {{v}}, L> - <gamma mu, L>

so that ``lambda = beta_1 du_1/dnu_1`` solves it for the exact solution.
Rows of the matrix are test functions ``(w, L)``, columns trial ``(v, mu)``.
Unknowns are ordered (u1 interior, u1 interface, u2 interior, u2 interface,
multiplier).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .coupling import CouplingBlocks, _gauss_on_segments, _mult_local, _trace_local, _flux_local, assemble_coupling
from .fem import assemble_load, assemble_stiffness, p1_gradients
from .problem import Discretization, ProblemSpec
from .quadrature import gauss_triangle

log = logging.getLogger(__name__)


class SolverFailure(RuntimeError):
    """Raised when the sparse factorization fails or the residual is unacceptable."""


@dataclass(frozen=True)
class MethodParams:
    """Stabilization switch ``S`` and penalty ``gamma = gamma0 * h``.

    ``average="arithmetic"`` takes ``{{q}} = (q_1 + q_2) / 2``; ``"weighted"``
    uses ``w_1 = beta_2 / (beta_1 + beta_2)``, ``w_2 = 1 - w_1``, which
    coincides with the arithmetic mean for equal coefficients.
    ``beta_scaled`` divides ``gamma`` by the harmonic mean of the two
    coefficients. With ``local_gamma`` the penalty on each merged segment uses
    the larger diameter of its two owning triangles instead of the global ``h``.
    """

    S: float = 1.0
    gamma0: float = 0.25
    local_gamma: bool = False
    average: str = "weighted"
    beta_scaled: bool = True

    def __post_init__(self):
        if not 0.0 <= self.S <= 1.0:
            raise ValueError(f"S must lie in [0, 1], got {self.S}")
        if not self.gamma0 > 0:
            raise ValueError(f"gamma0 must be positive, got {self.gamma0}")
        if self.average not in ("arithmetic", "weighted"):
            raise ValueError(f"unknown average {self.average!r}")


def flux_weights(problem: ProblemSpec, params: MethodParams) -> tuple[float, float]:
    """Weights of the two one-sided fluxes in the interface average."""
    if params.average == "arithmetic":
        return 0.5, 0.5
    b1, b2 = problem.beta1, problem.beta2
    return b2 / (b1 + b2), b1 / (b1 + b2)


def admissible_gamma0(m_lower: float, m_upper: float, trace_constant: float) -> float:
    """Upper bound on ``gamma0`` guaranteeing coercivity of the stabilized form."""
    return m_lower / (trace_constant ** 2 * m_upper ** 2)


def penalty(disc: Discretization, params: MethodParams, problem: ProblemSpec) -> np.ndarray:
    """Per-merged-segment penalty ``gamma``."""
    merged = disc.merged
    scale = params.gamma0
    if params.beta_scaled:
        b1, b2 = problem.beta1, problem.beta2
        scale = scale * (b1 + b2) / (2.0 * b1 * b2)
    if params.local_gamma:
        d1 = disc.space1.mesh.diameters()[merged.triangles1]
        d2 = disc.space2.mesh.diameters()[merged.triangles2]
        return scale * np.maximum(d1, d2)
    return np.full(merged.n_segments, scale * disc.h)


@dataclass(frozen=True)
class SaddleSystem:
    """Reduced matrix ``A``, load ``F`` and everything needed to rebuild full fields.

    ``full`` is the matrix over all vertices of both meshes plus the
    multiplier dofs; ``free`` selects its rows/columns kept in ``A``.
    """

    A: sp.csr_matrix
    F: np.ndarray
    layout: dict
    full: sp.csr_matrix
    full_load: np.ndarray
    free: np.ndarray
    dirichlet: np.ndarray
    lift: np.ndarray
    disc: Discretization
    params: MethodParams
    gamma: np.ndarray
    blocks: CouplingBlocks = field(repr=False)

    @property
    def n_vertices(self) -> tuple[int, int]:
        return self.disc.space1.n_vertices, self.disc.space2.n_vertices

    def split(self, full_vector) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        n1, n2 = self.n_vertices
        return full_vector[:n1], full_vector[n1:n1 + n2], full_vector[n1 + n2:]

    def write_coo(self, path) -> None:
        """Dump ``A`` as ``i j value`` lines."""
        coo = self.A.tocoo()
        order = np.lexsort((coo.col, coo.row))
        with open(path, "w") as fh:
            for i, j, v in zip(coo.row[order], coo.col[order], coo.data[order]):
                fh.write(f"{int(i)} {int(j)} {float(v)!r}\n")


@dataclass(frozen=True)
class Solution:
    """Full vertex coefficients ``u1``, ``u2`` (Dirichlet values included) and multiplier ``lam``."""

    u1: np.ndarray
    u2: np.ndarray
    lam: np.ndarray
    residual: float
    system: SaddleSystem = field(repr=False)

    def u(self, side: int) -> np.ndarray:
        return self.u1 if side == 1 else self.u2

    @property
    def full(self) -> np.ndarray:
        return np.concatenate([self.u1, self.u2, self.lam])


def _layout(disc: Discretization) -> dict:
    s1, s2 = disc.space1, disc.space2
    sizes = [s1.n_interior, s1.n_free - s1.n_interior,
             s2.n_interior, s2.n_free - s2.n_interior, disc.mult.n_dofs]
    names = ["u1_interior", "u1_interface", "u2_interior", "u2_interface", "lambda"]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    return {name: slice(int(offsets[k]), int(offsets[k + 1])) for k, name in enumerate(names)}


def build_saddle_system(problem: ProblemSpec, params: MethodParams, disc: Discretization,
                        blocks: CouplingBlocks | None = None) -> SaddleSystem:
    """Assemble the stabilized system for ``problem`` on ``disc``.

    ``blocks`` may be supplied when already assembled (unweighted); they
    must live on ``disc.merged``.
    """
    merged = disc.merged
    s1, s2, mult = disc.space1, disc.space2, disc.mult
    if blocks is None:
        blocks = assemble_coupling(merged, s1, s2, mult, problem.beta1, problem.beta2)
    elif blocks.merged is not merged:
        raise ValueError("coupling blocks were assembled on a different merged partition")

    gamma = penalty(disc, params, problem)
    if params.local_gamma:
        gb = assemble_coupling(merged, s1, s2, mult, problem.beta1, problem.beta2, weights=gamma)
        R_s, R_m, Q_mm = gb.R_s, gb.R_m, gb.Q_mm
        Rn_ss, Rn_sm, Rn_mm = gb.Rn_ss, gb.Rn_sm, gb.Rn_mm
    else:
        g = float(gamma[0])
        R_s, R_m, Q_mm = g * blocks.R_s, g * blocks.R_m, g * blocks.Q_mm
        Rn_ss, Rn_sm, Rn_mm = g * blocks.Rn_ss, g * blocks.Rn_sm, g * blocks.Rn_mm
    S = params.S
    Q_s, Q_m = blocks.Q_s, blocks.Q_m

    K1 = assemble_stiffness(s1, problem.beta1, problem.a1, full=True)
    K2 = assemble_stiffness(s2, problem.beta2, problem.a2, full=True)

    w1, w2 = flux_weights(problem, params)
    A11 = K1 - S * w1 * w1 * Rn_ss
    A12 = S * w1 * w2 * Rn_sm
    A21 = S * w1 * w2 * Rn_sm.T
    A22 = K2 - S * w2 * w2 * Rn_mm
    A1l = -Q_s.T + S * w1 * R_s.T
    A2l = Q_m.T - S * w2 * R_m.T
    Al1 = -Q_s + w1 * R_s
    Al2 = Q_m - w2 * R_m
    All = -Q_mm
    full = sp.bmat([[A11, A12, A1l], [A21, A22, A2l], [Al1, Al2, All]], format="csr")
    if S == 1.0:
        # exact symmetry; the blocks above are transposes of each other up to rounding
        full = 0.5 * (full + full.T)
        full = full.tocsr()

    n1, n2 = s1.n_vertices, s2.n_vertices
    full_load = np.concatenate([
        assemble_load(s1, problem.f1, full=True),
        assemble_load(s2, problem.f2, full=True),
        np.zeros(mult.n_dofs),
    ])
    free = np.concatenate([s1.free, n1 + s2.free, n1 + n2 + np.arange(mult.n_dofs)])
    dirichlet = np.concatenate([s1.dirichlet, n1 + s2.dirichlet])

    lift = np.zeros(full.shape[0])
    if problem.g is not None:
        for side, offset in ((1, 0), (2, n1)):
            sp_ = disc.space(side)
            v = sp_.mesh.vertices[sp_.dirichlet]
            lift[offset + sp_.dirichlet] = np.broadcast_to(problem.g(v[:, 0], v[:, 1]), (len(v),))

    rows = full[free]
    A = rows[:, free].tocsr()
    F = full_load[free] - rows @ lift
    return SaddleSystem(A=A, F=F, layout=_layout(disc), full=full, full_load=full_load,
                        free=free, dirichlet=dirichlet, lift=lift, disc=disc,
                        params=params, gamma=gamma, blocks=blocks)


def solve(system: SaddleSystem, rtol: float = 1e-10, refinement_steps: int = 3) -> Solution:
    """Direct sparse LU solve with a few steps of iterative refinement."""
    A, F = system.A, system.F
    norm_F = np.linalg.norm(F)
    if norm_F == 0.0:
        U = np.zeros_like(F)
        residual = 0.0
    else:
        try:
            lu = spla.splu(A.tocsc())
        except RuntimeError as exc:
            raise SolverFailure(f"factorization failed ({exc}); "
                                f"||A||_1 = {spla.norm(A, 1):.3e}, n = {A.shape[0]}") from exc
        U = lu.solve(F)
        residual = np.linalg.norm(F - A @ U) / norm_F
        for _ in range(refinement_steps):
            if residual <= 1e-3 * rtol:
                break
            U = U + lu.solve(F - A @ U)
            residual = np.linalg.norm(F - A @ U) / norm_F
        if not np.all(np.isfinite(U)):
            raise SolverFailure("solution contains non-finite values; matrix is numerically singular")
        if residual > rtol:
            diag = np.abs(lu.U.diagonal())
            raise SolverFailure(
                f"relative residual {residual:.3e} exceeds {rtol:.1e}; "
                f"pivot ratio estimate {diag.max() / diag.min():.3e}")
    log.debug("solved n=%d, relative residual %.3e", A.shape[0], residual)

    full = system.lift.copy()
    full[system.free] = U
    u1, u2, lam = system.split(full)
    return Solution(u1=u1, u2=u2, lam=lam, residual=float(residual), system=system)


def _as_full(system: SaddleSystem, v, mu) -> np.ndarray:
    n1, n2 = system.n_vertices
    nm = system.disc.mult.n_dofs
    if isinstance(v, (tuple, list)):
        v = np.concatenate([np.asarray(v[0]), np.asarray(v[1])])
    v = np.asarray(v, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if v.shape != (n1 + n2,) or mu.shape != (nm,):
        raise ValueError(f"expected primal of size {n1 + n2} and multiplier of size {nm}, "
                         f"got {v.shape} and {mu.shape}")
    return np.concatenate([v, mu])


def evaluate_form(v, mu, w, lam, system: SaddleSystem) -> float:
    """Value of the stabilized bilinear form with trial ``(v, mu)`` and test ``(w, lam)``.

    Primal arguments are full vertex vectors, either a ``(u1, u2)`` pair or
    their concatenation.
    """
    trial = _as_full(system, v, mu)
    test = _as_full(system, w, lam)
    return float(test @ (system.full @ trial))


def continuous_form_rows(problem: ProblemSpec, system: SaddleSystem, rule=None,
                         interface_points: int = 5) -> np.ndarray:
    """``A(u, lambda; phi_k)`` for the exact pair against every full basis function.

    Requires ``problem.u``, ``problem.grad_u`` and ``problem.lam``. Volume
    integrals use ``rule`` (degree-4 triangle rule by default).
    """
    if problem.u is None or problem.grad_u is None or problem.lam is None:
        raise ValueError("problem has no exact solution")
    disc, params = system.disc, system.params
    rule = rule or gauss_triangle(4)
    S = params.S
    parts = []
    for side in (1, 2):
        space = disc.space(side)
        mesh = space.mesh
        p = mesh.vertices[mesh.triangles]
        xi, eta = rule.points[:, 0], rule.points[:, 1]
        lam_ref = np.column_stack([1.0 - xi - eta, xi, eta])
        pts = np.einsum("qk,tkd->tqd", lam_ref, p)
        wts = 2.0 * mesh.areas()[:, None] * rule.weights[None, :]
        X, Y = pts[..., 0], pts[..., 1]
        ux, uy = problem.grad_u[side - 1](X, Y)
        uval = problem.u[side - 1](X, Y)
        grads, _ = p1_gradients(mesh)
        beta, a = problem.beta(side), problem.a(side)
        local = beta * (np.einsum("tq,tq,tk->tk", wts, ux, grads[..., 0])
                        + np.einsum("tq,tq,tk->tk", wts, uy, grads[..., 1]))
        if a:
            local = local + a * np.einsum("tq,tq,qk->tk", wts, uval, lam_ref)
        parts.append(np.bincount(mesh.triangles.ravel(), weights=local.ravel(),
                                 minlength=mesh.n_vertices))
    rows_lam = np.zeros(disc.mult.n_dofs)

    merged = disc.merged
    s, w = _gauss_on_segments(merged, interface_points)
    gw = w * system.gamma[:, None]
    traces, fluxes = [], []
    for side in (1, 2):
        tr = merged.trace(side)
        xy = tr.to_xy(s)
        traces.append(problem.u[side - 1](xy[..., 0], xy[..., 1]))
        gx, gy = problem.grad_u[side - 1](xy[..., 0], xy[..., 1])
        fluxes.append(problem.beta(side) * (gx * tr.normal[0] + gy * tr.normal[1]))
    w1, w2 = flux_weights(problem, params)
    avg = w1 * fluxes[0] - w2 * fluxes[1]
    lam = np.asarray(problem.lam(s), dtype=float)

    for side, sign, weight in ((1, 1.0, w1), (2, -1.0, w2)):
        space = disc.space(side)
        hv, hid = _trace_local(merged, side, s)
        # -<lam, [[w]]>
        contrib = -sign * np.einsum("mq,mqk->mk", w * lam, hv)
        np.add.at(parts[side - 1], hid.ravel(), contrib.ravel())
        # S<gamma lam, {{w}}> - S<gamma {{u}}, {{w}}>, flux of w is sign * weight * F_side
        fv, fid = _flux_local(merged, side, space, problem.beta(side))
        coef = np.sum(gw * (lam - avg), axis=1)
        contrib = S * sign * weight * coef[:, None] * fv
        np.add.at(parts[side - 1], fid.ravel(), contrib.ravel())

    mv, mid = _mult_local(merged, disc.mult, s)
    integrand = -w * (traces[0] - traces[1]) + gw * (avg - lam)
    contrib = np.einsum("mq,mqk->mk", integrand, mv)
    mask = mid >= 0
    np.add.at(rows_lam, mid[mask], contrib[mask])
    return np.concatenate([parts[0], parts[1], rows_lam])


def consistency_residual(problem: ProblemSpec, system: SaddleSystem, rule=None) -> np.ndarray:
    """``A(u, lambda; phi) - F(phi)`` over the free test functions."""
    rows = continuous_form_rows(problem, system, rule)
    load = system.full_load
    if rule is not None:
        load = _load_with_rule(problem, system, rule)
    return (rows - load)[system.free]


def _load_with_rule(problem: ProblemSpec, system: SaddleSystem, rule) -> np.ndarray:
    out = []
    for side in (1, 2):
        mesh = system.disc.space(side).mesh
        p = mesh.vertices[mesh.triangles]
        xi, eta = rule.points[:, 0], rule.points[:, 1]
        lam_ref = np.column_stack([1.0 - xi - eta, xi, eta])
        pts = np.einsum("qk,tkd->tqd", lam_ref, p)
        wts = 2.0 * mesh.areas()[:, None] * rule.weights[None, :]
        fv = np.broadcast_to(problem.f(side)(pts[..., 0], pts[..., 1]), wts.shape)
        local = np.einsum("tq,tq,qk->tk", fv, wts, lam_ref)
        out.append(np.bincount(mesh.triangles.ravel(), weights=local.ravel(),
                               minlength=mesh.n_vertices))
    out.append(np.zeros(system.disc.mult.n_dofs))
    return np.concatenate(out)
