"""
P1 finite elements on a single subdomain mesh.

Matrices come in two flavours: ``full=True`` indexes every mesh vertex,
the default indexes only the free dofs of the space, in the order
``space.free`` (interior vertices first, then interface vertices).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import INTERFACE, OUTER_DIRICHLET, InterfaceTrace, Mesh2D, interface_trace
from .quadrature import QuadRule, gauss_triangle

INTERIOR = 0
INTERFACE_DOF = 1
DIRICHLET = 2


@dataclass(frozen=True)
class FeSpace:
    """Continuous P1 space on ``mesh`` vanishing on the outer boundary.

    ``classification[v]`` is ``INTERIOR``, ``INTERFACE_DOF`` or ``DIRICHLET``.
    Vertices touching an outer boundary edge are Dirichlet, which includes
    the endpoints of the interface.
    """

    mesh: Mesh2D
    classification: np.ndarray
    free: np.ndarray
    dirichlet: np.ndarray
    dof_of_vertex: np.ndarray
    n_interior: int
    trace: InterfaceTrace | None

    @property
    def n_free(self) -> int:
        return len(self.free)

    @property
    def n_vertices(self) -> int:
        return self.mesh.n_vertices

    @property
    def interface_dofs(self) -> np.ndarray:
        return self.free[self.n_interior:]

    def restrict(self, full_vector) -> np.ndarray:
        return np.asarray(full_vector)[self.free]

    def extend(self, free_vector, dirichlet_values=None) -> np.ndarray:
        """Scatter free-dof coefficients into a full vertex vector."""
        out = np.zeros(self.n_vertices)
        out[self.free] = free_vector
        if dirichlet_values is not None:
            out[self.dirichlet] = np.asarray(dirichlet_values)[self.dirichlet]
        return out


def fe_space(mesh: Mesh2D) -> FeSpace:
    cls = np.full(mesh.n_vertices, INTERIOR, dtype=np.int64)
    iface = mesh.boundary_edges[mesh.edge_tags == INTERFACE].ravel()
    cls[iface] = INTERFACE_DOF
    outer = mesh.boundary_edges[mesh.edge_tags == OUTER_DIRICHLET].ravel()
    cls[outer] = DIRICHLET

    interior = np.flatnonzero(cls == INTERIOR)
    on_gamma = np.flatnonzero(cls == INTERFACE_DOF)
    free = np.concatenate([interior, on_gamma])
    dof = np.full(mesh.n_vertices, -1, dtype=np.int64)
    dof[free] = np.arange(len(free))

    sides = mesh.interface_sides()
    trace = interface_trace(mesh, sides[0]) if len(sides) == 1 else None
    return FeSpace(
        mesh=mesh,
        classification=cls,
        free=free,
        dirichlet=np.flatnonzero(cls == DIRICHLET),
        dof_of_vertex=dof,
        n_interior=len(interior),
        trace=trace,
    )


def p1_gradients(mesh: Mesh2D) -> tuple[np.ndarray, np.ndarray]:
    """Constant gradients of the three barycentric hats per triangle, and areas.

    Returns ``grads`` of shape (T, 3, 2) and ``areas`` of shape (T,).
    """
    p = mesh.vertices[mesh.triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    # rows of inv(J)^T applied to reference gradients (-1,-1), (1,0), (0,1)
    inv = np.empty((len(p), 2, 2))
    inv[:, 0, 0] = d2[:, 1] / det
    inv[:, 0, 1] = -d2[:, 0] / det
    inv[:, 1, 0] = -d1[:, 1] / det
    inv[:, 1, 1] = d1[:, 0] / det
    ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    grads = np.einsum("kj,tji->tki", ref, inv)
    return grads, 0.5 * det


def _map_points(mesh: Mesh2D, rule: QuadRule) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Physical quadrature points (T, Q, 2), weights (T, Q) and hat values (Q, 3)."""
    p = mesh.vertices[mesh.triangles]
    xi, eta = rule.points[:, 0], rule.points[:, 1]
    lam = np.column_stack([1.0 - xi - eta, xi, eta])
    pts = np.einsum("qk,tkd->tqd", lam, p)
    det = 2.0 * mesh.areas()
    return pts, det[:, None] * rule.weights[None, :], lam


def _restrict(mat: sp.spmatrix, space: FeSpace, full: bool):
    mat = mat.tocsr()
    if full:
        return mat
    return mat[space.free][:, space.free]


def assemble_stiffness(space: FeSpace, beta: float, a: float = 0.0, full: bool = False):
    """Matrix of ``int beta grad(u).grad(v) + a u v`` (exact for P1)."""
    mesh = space.mesh
    grads, areas = p1_gradients(mesh)
    local = beta * areas[:, None, None] * np.einsum("tid,tjd->tij", grads, grads)
    if a:
        mass = (np.ones((3, 3)) + np.eye(3)) / 12.0
        local = local + a * areas[:, None, None] * mass[None]
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_vertices
    mat = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    # enforce bit-exact symmetry independent of accumulation order
    mat = 0.5 * (mat + mat.T)
    return _restrict(mat, space, full)


def assemble_mass(space: FeSpace, full: bool = False):
    return assemble_stiffness(space, beta=0.0, a=1.0, full=full)


def assemble_load(space: FeSpace, f, full: bool = False) -> np.ndarray:
    """Vector of ``int f phi_i`` using the degree-4 triangle rule."""
    mesh = space.mesh
    pts, wts, lam = _map_points(mesh, gauss_triangle(4))
    fv = np.asarray(f(pts[..., 0], pts[..., 1]), dtype=float)
    fv = np.broadcast_to(fv, wts.shape)
    local = np.einsum("tq,tq,qk->tk", fv, wts, lam)
    vec = np.bincount(mesh.triangles.ravel(), weights=local.ravel(), minlength=mesh.n_vertices)
    return vec if full else vec[space.free]


def nodal_interpolate(space: FeSpace, g) -> np.ndarray:
    """Full vertex vector with ``g`` evaluated at every vertex (Dirichlet ones included)."""
    v = space.mesh.vertices
    return np.asarray(np.broadcast_to(g(v[:, 0], v[:, 1]), (len(v),)), dtype=float).copy()


def lift_dirichlet(space: FeSpace, g, operator) -> tuple[np.ndarray, np.ndarray]:
    """Dirichlet lift of boundary data ``g`` and the matching rhs correction.

    ``operator`` is a full-vertex matrix (e.g. ``assemble_stiffness(..., full=True)``).
    Returns the lift (zero on free dofs) and ``-(operator @ lift)`` restricted
    to the free dofs.
    """
    lift = np.zeros(space.n_vertices)
    if g is not None:
        v = space.mesh.vertices[space.dirichlet]
        lift[space.dirichlet] = np.broadcast_to(g(v[:, 0], v[:, 1]), (len(v),))
    correction = -(operator @ lift)[space.free]
    return lift, correction


def evaluate_p1(space: FeSpace, coeffs: np.ndarray, rule: QuadRule):
    """Values and gradients of a P1 field at mapped quadrature points.

    Returns points (T, Q, 2), weights (T, Q), values (T, Q) and gradients (T, 2).
    """
    mesh = space.mesh
    pts, wts, lam = _map_points(mesh, rule)
    local = np.asarray(coeffs)[mesh.triangles]
    vals = local @ lam.T
    grads, _ = p1_gradients(mesh)
    grad = np.einsum("tk,tkd->td", local, grads)
    return pts, wts, vals, grad
