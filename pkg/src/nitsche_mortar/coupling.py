"""
Cross-mesh interface operators.

Every interface integral is evaluated on the merged partition of the two
traces, where each integrand (hat x hat, hat x constant flux, flux x flux)
is a polynomial of degree at most two per segment, so two Gauss points per
merged segment integrate it exactly.

Primal blocks are indexed by *all* vertices of the corresponding mesh;
``FeSpace.free`` selects the free columns. Fluxes use the outward normal of
the side they belong to.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .fem import FeSpace, p1_gradients
from .mesh import InterfaceTrace
from .quadrature import gauss_segment


@dataclass(frozen=True)
class MergedPartition:
    """Common refinement of two interface traces.

    Merged segment ``m`` spans ``breakpoints[m:m+2]`` and lies inside segment
    ``parent1[m]`` of ``trace1`` and ``parent2[m]`` of ``trace2``.
    """

    breakpoints: np.ndarray
    parent1: np.ndarray
    parent2: np.ndarray
    trace1: InterfaceTrace
    trace2: InterfaceTrace

    @property
    def n_segments(self) -> int:
        return len(self.breakpoints) - 1

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    @property
    def triangles1(self) -> np.ndarray:
        return self.trace1.segment_triangles[self.parent1]

    @property
    def triangles2(self) -> np.ndarray:
        return self.trace2.segment_triangles[self.parent2]

    def parent(self, side: int) -> np.ndarray:
        return self.parent1 if side == 1 else self.parent2

    def trace(self, side: int) -> InterfaceTrace:
        return self.trace1 if side == 1 else self.trace2


def merge_partitions(t1: InterfaceTrace, t2: InterfaceTrace, tol: float = 1e-12) -> MergedPartition:
    length = t1.length
    if abs(t2.length - length) > tol * max(length, 1.0):
        raise ValueError(f"traces cover different extents: {t1.length} vs {t2.length}")
    pts = np.sort(np.concatenate([t1.breakpoints, t2.breakpoints]))
    keep = np.concatenate([[True], np.diff(pts) > tol * length])
    merged = pts[keep]
    merged[-1] = length
    mids = 0.5 * (merged[:-1] + merged[1:])
    p1 = np.searchsorted(t1.breakpoints, mids) - 1
    p2 = np.searchsorted(t2.breakpoints, mids) - 1
    return MergedPartition(breakpoints=merged, parent1=p1, parent2=p2, trace1=t1, trace2=t2)


@dataclass(frozen=True)
class MultiplierSpace:
    """Continuous piecewise-linear hats on the Omega_2 trace mesh.

    ``node_of_dof[k]`` is the breakpoint index of multiplier dof ``k``.
    Endpoint hats are excluded unless ``include_endpoints`` is set.
    """

    trace: InterfaceTrace
    include_endpoints: bool
    node_of_dof: np.ndarray
    dof_of_node: np.ndarray

    @property
    def n_dofs(self) -> int:
        return len(self.node_of_dof)

    @property
    def nodes(self) -> np.ndarray:
        return self.trace.breakpoints[self.node_of_dof]

    def evaluate(self, coeffs, s) -> np.ndarray:
        """Value of the multiplier field with ``coeffs`` at arclength ``s``."""
        full = np.zeros(len(self.trace.breakpoints))
        full[self.node_of_dof] = coeffs
        return np.interp(s, self.trace.breakpoints, full)


def multiplier_space(trace: InterfaceTrace, include_endpoints: bool = False) -> MultiplierSpace:
    n_nodes = len(trace.breakpoints)
    nodes = np.arange(n_nodes) if include_endpoints else np.arange(1, n_nodes - 1)
    dof = np.full(n_nodes, -1, dtype=np.int64)
    dof[nodes] = np.arange(len(nodes))
    return MultiplierSpace(trace=trace, include_endpoints=include_endpoints,
                           node_of_dof=nodes, dof_of_node=dof)


# -- per-segment local data -------------------------------------------------

def _gauss_on_segments(merged: MergedPartition, npoints: int = 2):
    rule = gauss_segment(npoints)
    a = merged.breakpoints[:-1]
    L = merged.lengths
    s = a[:, None] + L[:, None] * rule.points[None, :]
    w = L[:, None] * rule.weights[None, :]
    return s, w


def _hat_values(trace: InterfaceTrace, parent: np.ndarray, s: np.ndarray):
    """Values (M, Q, 2) of the two trace hats of each parent segment, plus their nodes (M, 2)."""
    lo = trace.breakpoints[parent]
    hi = trace.breakpoints[parent + 1]
    t = (s - lo[:, None]) / (hi - lo)[:, None]
    vals = np.stack([1.0 - t, t], axis=-1)
    nodes = np.column_stack([parent, parent + 1])
    return vals, nodes


def _trace_local(merged: MergedPartition, side: int, s):
    """Primal trace hats on ``side``: values (M, Q, 2) and mesh vertex ids (M, 2)."""
    trace = merged.trace(side)
    parent = merged.parent(side)
    vals, _ = _hat_values(trace, parent, s)
    return vals, trace.segment_vertices[parent]


def _mult_local(merged: MergedPartition, mult: MultiplierSpace, s):
    """Multiplier hats: values (M, Q, 2) and dof ids (M, 2), -1 for excluded nodes."""
    trace = mult.trace
    if trace is merged.trace2:
        parent = merged.parent2
    elif trace is merged.trace1:
        parent = merged.parent1
    else:
        mids = 0.5 * (merged.breakpoints[:-1] + merged.breakpoints[1:])
        parent = np.searchsorted(trace.breakpoints, mids) - 1
    vals, nodes = _hat_values(trace, parent, s)
    return vals, mult.dof_of_node[nodes]


def _flux_local(merged: MergedPartition, side: int, space: FeSpace, beta: float):
    """Normal fluxes ``beta grad(phi).nu`` (M, 3) of the owning triangle's hats, and vertex ids."""
    trace = merged.trace(side)
    tris = trace.segment_triangles[merged.parent(side)]
    grads, _ = p1_gradients(space.mesh)
    flux = beta * np.einsum("tkd,d->tk", grads[tris], trace.normal)
    return flux, space.mesh.triangles[tris]


def _segment_weights(merged: MergedPartition, weights):
    if weights is None:
        return np.ones(merged.n_segments)
    return np.broadcast_to(np.asarray(weights, dtype=float), (merged.n_segments,))


def _assemble(rows_vals, rows_ids, cols_vals, cols_ids, w, shape):
    """Sum over segments/points of w * row_val * col_val into a sparse matrix.

    ``*_vals`` have shape (M, Q, k) or (M, k) for point-independent values.
    """
    if rows_vals.ndim == 2:
        rows_vals = np.broadcast_to(rows_vals[:, None, :], (w.shape[0], w.shape[1], rows_vals.shape[1]))
    if cols_vals.ndim == 2:
        cols_vals = np.broadcast_to(cols_vals[:, None, :], (w.shape[0], w.shape[1], cols_vals.shape[1]))
    local = np.einsum("mq,mqi,mqj->mij", w, rows_vals, cols_vals)
    ki, kj = rows_ids.shape[1], cols_ids.shape[1]
    r = np.repeat(rows_ids[:, :, None], kj, axis=2)
    c = np.repeat(cols_ids[:, None, :], ki, axis=1)
    mask = (r >= 0) & (c >= 0)
    return sp.coo_matrix((local[mask], (r[mask], c[mask])), shape=shape).tocsr()


def assemble_mortar_mass(merged: MergedPartition, side: int, mult: MultiplierSpace,
                         n_vertices: int | None = None, weights=None):
    """``Q[i, j] = int psi_i phi_j`` for trace hats ``phi_j`` of side 1 or 2.

    Columns index mesh vertices of that side (``n_vertices`` columns).
    """
    s, w = _gauss_on_segments(merged)
    w = w * _segment_weights(merged, weights)[:, None]
    pv, pid = _trace_local(merged, side, s)
    mv, mid = _mult_local(merged, mult, s)
    if n_vertices is None:
        n_vertices = int(merged.trace(side).segment_vertices.max()) + 1
    return _assemble(mv, mid, pv, pid, w, (mult.n_dofs, n_vertices))


def assemble_multiplier_mass(merged: MergedPartition, mult: MultiplierSpace, weights=None):
    """``Q_mm[i, j] = int psi_i psi_j``."""
    s, w = _gauss_on_segments(merged)
    w = w * _segment_weights(merged, weights)[:, None]
    mv, mid = _mult_local(merged, mult, s)
    return _assemble(mv, mid, mv, mid, w, (mult.n_dofs, mult.n_dofs))


def assemble_flux_mass(merged: MergedPartition, side: int, space: FeSpace, beta: float,
                       mult: MultiplierSpace, normal_sign: float = 1.0, weights=None):
    """``R[i, j] = int psi_i beta grad(phi_j).nu`` with ``nu`` the side's outward normal.

    Columns cover every vertex of every interface-adjacent triangle.
    """
    s, w = _gauss_on_segments(merged)
    w = w * _segment_weights(merged, weights)[:, None]
    fv, fid = _flux_local(merged, side, space, beta * normal_sign)
    mv, mid = _mult_local(merged, mult, s)
    return _assemble(mv, mid, fv, fid, w, (mult.n_dofs, space.n_vertices))


def assemble_flux_flux(merged: MergedPartition, space1: FeSpace, space2: FeSpace,
                       beta1: float, beta2: float, weights=None):
    """Flux-flux Gram blocks ``(Rn_ss, Rn_sm, Rn_mm)``.

    ``Rn_ab[i, j] = int (beta_a grad(phi^a_i).nu_a) (beta_b grad(phi^b_j).nu_b)``
    with outward normals ``nu_1``, ``nu_2``.
    """
    s, w = _gauss_on_segments(merged)
    w = w * _segment_weights(merged, weights)[:, None]
    f1, id1 = _flux_local(merged, 1, space1, beta1)
    f2, id2 = _flux_local(merged, 2, space2, beta2)
    n1, n2 = space1.n_vertices, space2.n_vertices
    rss = _assemble(f1, id1, f1, id1, w, (n1, n1))
    rsm = _assemble(f1, id1, f2, id2, w, (n1, n2))
    rmm = _assemble(f2, id2, f2, id2, w, (n2, n2))
    return rss, rsm, rmm


@dataclass(frozen=True)
class CouplingBlocks:
    """All interface blocks on one merged partition.

    ``Q_s``, ``Q_m``: multiplier x side-1 / side-2 trace mass.
    ``Q_mm``: multiplier mass. ``R_s``, ``R_m``: multiplier x outward flux.
    ``Rn_ss``, ``Rn_sm``, ``Rn_mm``: outward flux x outward flux.
    """

    Q_s: sp.csr_matrix
    Q_m: sp.csr_matrix
    Q_mm: sp.csr_matrix
    R_s: sp.csr_matrix
    R_m: sp.csr_matrix
    Rn_ss: sp.csr_matrix
    Rn_sm: sp.csr_matrix
    Rn_mm: sp.csr_matrix
    merged: MergedPartition


def assemble_coupling(merged: MergedPartition, space1: FeSpace, space2: FeSpace,
                      mult: MultiplierSpace, beta1: float, beta2: float,
                      weights=None) -> CouplingBlocks:
    """Assemble every interface block, each optionally weighted per merged segment."""
    rss, rsm, rmm = assemble_flux_flux(merged, space1, space2, beta1, beta2, weights)
    return CouplingBlocks(
        Q_s=assemble_mortar_mass(merged, 1, mult, space1.n_vertices, weights),
        Q_m=assemble_mortar_mass(merged, 2, mult, space2.n_vertices, weights),
        Q_mm=assemble_multiplier_mass(merged, mult, weights),
        R_s=assemble_flux_mass(merged, 1, space1, beta1, mult, weights=weights),
        R_m=assemble_flux_mass(merged, 2, space2, beta2, mult, weights=weights),
        Rn_ss=rss,
        Rn_sm=rsm,
        Rn_mm=rmm,
        merged=merged,
    )


# -- L2 projection onto the multiplier space --------------------------------

def multiplier_moments(phi, mult: MultiplierSpace, npoints: int = 5) -> np.ndarray:
    """``int phi psi_i`` for each multiplier dof, Gauss rule per trace segment."""
    merged = merge_partitions(mult.trace, mult.trace)
    s, w = _gauss_on_segments(merged, npoints)
    mv, mid = _mult_local(merged, mult, s)
    vals = np.asarray(phi(s), dtype=float) * w
    local = np.einsum("mq,mqk->mk", vals, mv)
    mask = mid >= 0
    return np.bincount(mid[mask], weights=local[mask], minlength=mult.n_dofs)


def l2_project(phi, mult: MultiplierSpace) -> np.ndarray:
    """Coefficients of the L2(Gamma) projection of ``phi`` (a function of arclength)."""
    merged = merge_partitions(mult.trace, mult.trace)
    mass = assemble_multiplier_mass(merged, mult).toarray()
    rhs = multiplier_moments(phi, mult)
    try:
        factor = sla.cho_factor(mass)
    except sla.LinAlgError as exc:
        raise RuntimeError("multiplier mass matrix is singular") from exc
    return sla.cho_solve(factor, rhs)


def interface_l2_norm(fn, trace: InterfaceTrace, npoints: int = 5) -> float:
    """``||fn||_{L2(Gamma)}`` by Gauss quadrature on the segments of ``trace``."""
    merged = merge_partitions(trace, trace)
    s, w = _gauss_on_segments(merged, npoints)
    return float(np.sqrt(np.sum(w * np.asarray(fn(s), dtype=float) ** 2)))


# -- inverse trace constant -------------------------------------------------

def pencil_max_quotient(top, bottom, rtol: float = 1e-12) -> float:
    """Largest ``x^T top x / x^T bottom x`` over ``x`` outside the kernel of ``bottom``.

    ``top`` must vanish on the kernel of ``bottom``; both symmetric, ``bottom``
    positive semidefinite.
    """
    top = np.asarray(top.toarray() if sp.issparse(top) else top, dtype=float)
    bottom = np.asarray(bottom.toarray() if sp.issparse(bottom) else bottom, dtype=float)
    evals, evecs = np.linalg.eigh(bottom)
    keep = evals > rtol * max(evals.max(), 0.0)
    basis = evecs[:, keep] / np.sqrt(evals[keep])
    reduced = basis.T @ top @ basis
    return float(np.linalg.eigvalsh(0.5 * (reduced + reduced.T)).max())


def estimate_trace_constant(space: FeSpace, h: float | None = None) -> float:
    """Numerical estimate of the inverse-trace constant of ``space``.

    Smallest ``C`` with ``h ||grad(v).nu||^2_Gamma <= C^2 ||grad(v)||^2_strip``
    for every P1 ``v`` on the strip of triangles with an edge on the
    interface. The strip norm is dominated by the norm over the whole
    subdomain, so ``C`` also bounds the global constant; unlike the global
    quotient it does not feel the outer Dirichlet boundary, which makes it
    stable under refinement. Constants span the common kernel of the pencil.
    """
    if space.trace is None:
        raise ValueError("space does not border an interface")
    mesh = space.mesh
    if h is None:
        h = mesh.h
    merged = merge_partitions(space.trace, space.trace)
    s, w = _gauss_on_segments(merged)
    fv, fid = _flux_local(merged, 1, space, 1.0)
    n = space.n_vertices
    gram = _assemble(fv, fid, fv, fid, w, (n, n))

    strip = np.unique(space.trace.segment_triangles)
    grads, areas = p1_gradients(mesh)
    local = areas[strip, None, None] * np.einsum("tid,tjd->tij", grads[strip], grads[strip])
    tri = mesh.triangles[strip]
    stiff = sp.coo_matrix((local.ravel(), (np.repeat(tri, 3, axis=1).ravel(),
                                           np.tile(tri, (1, 3)).ravel())), shape=(n, n)).tocsr()
    dofs = np.unique(tri)
    return float(np.sqrt(pencil_max_quotient(h * gram[dofs][:, dofs], stiff[dofs][:, dofs])))
