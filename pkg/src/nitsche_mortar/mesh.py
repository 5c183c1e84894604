"""
Structured P1 triangulations of rectangles and their 1D interface traces.

A mesh is a plain container of numpy arrays. Boundary edges carry the
rectangle side they lie on and a tag, either ``OUTER_DIRICHLET`` or
``INTERFACE``; the interface side is chosen when the mesh is built.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

OUTER_DIRICHLET = "dirichlet"
INTERFACE = "interface"

SIDES = ("left", "right", "bottom", "top")
_OUTWARD = {
    "left": (-1.0, 0.0),
    "right": (1.0, 0.0),
    "bottom": (0.0, -1.0),
    "top": (0.0, 1.0),
}


@dataclass(frozen=True)
class Mesh2D:
    """Conforming triangulation of an axis-aligned rectangle.

    ``triangles`` are counter-clockwise vertex triples. ``boundary_edges``
    holds vertex pairs, ``edge_sides`` the rectangle side of each and
    ``edge_tags`` whether it is outer Dirichlet boundary or interface.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    edge_sides: np.ndarray
    edge_tags: np.ndarray
    rect: tuple
    nx: int = 0
    ny: int = 0
    diagonal: str = "NE"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def areas(self) -> np.ndarray:
        """Signed triangle areas (positive for counter-clockwise)."""
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def diameters(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        lengths = np.stack(
            [np.linalg.norm(p[:, (k + 1) % 3] - p[:, k], axis=1) for k in range(3)],
            axis=1,
        )
        return lengths.max(axis=1)

    @property
    def h(self) -> float:
        """Mesh size, the largest triangle diameter."""
        if "h" not in self._cache:
            self._cache["h"] = float(self.diameters().max())
        return self._cache["h"]

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique undirected edges and, per edge, the number of incident triangles."""
        t = self.triangles
        all_edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        all_edges.sort(axis=1)
        uniq, counts = np.unique(all_edges, axis=0, return_counts=True)
        return uniq, counts

    def interface_sides(self) -> list[str]:
        return sorted(set(self.edge_sides[self.edge_tags == INTERFACE].tolist()))


def build_rect_tri_mesh(rect, nx: int, ny: int, diagonal: str = "NE",
                        interface_side: str | None = None) -> Mesh2D:
    """Split ``rect = (x0, x1, y0, y1)`` into ``nx * ny`` cells, two triangles each.

    ``diagonal="NE"`` cuts every cell from its lower-left to upper-right
    corner, ``"NW"`` from lower-right to upper-left. Edges on
    ``interface_side`` are tagged ``INTERFACE``, all others ``OUTER_DIRICHLET``.
    """
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise ValueError(f"cell counts must be positive integers, got nx={nx}, ny={ny}")
    nx, ny = int(nx), int(ny)
    x0, x1, y0, y1 = map(float, rect)
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"degenerate rectangle {rect}")
    if diagonal not in ("NE", "NW"):
        raise ValueError(f"diagonal must be 'NE' or 'NW', got {diagonal!r}")
    if interface_side is not None and interface_side not in SIDES:
        raise ValueError(f"unknown side {interface_side!r}")

    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)  # row j holds y = ys[j]
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    idx = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    v00 = idx[:-1, :-1].ravel()
    v10 = idx[:-1, 1:].ravel()
    v01 = idx[1:, :-1].ravel()
    v11 = idx[1:, 1:].ravel()
    if diagonal == "NE":
        lower = np.column_stack([v00, v10, v11])
        upper = np.column_stack([v00, v11, v01])
    else:
        lower = np.column_stack([v00, v10, v01])
        upper = np.column_stack([v10, v11, v01])
    # interleave so the two triangles of a cell are adjacent in the ordering
    triangles = np.empty((2 * nx * ny, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    sides = {
        "bottom": np.column_stack([idx[0, :-1], idx[0, 1:]]),
        "right": np.column_stack([idx[:-1, -1], idx[1:, -1]]),
        "top": np.column_stack([idx[-1, :-1], idx[-1, 1:]]),
        "left": np.column_stack([idx[:-1, 0], idx[1:, 0]]),
    }
    edges, names = [], []
    for name in SIDES:
        edges.append(sides[name])
        names.extend([name] * len(sides[name]))
    boundary_edges = np.concatenate(edges).astype(np.int64)
    edge_sides = np.array(names)
    edge_tags = np.where(edge_sides == interface_side, INTERFACE, OUTER_DIRICHLET)

    return Mesh2D(
        vertices=vertices,
        triangles=triangles,
        boundary_edges=boundary_edges,
        edge_sides=edge_sides,
        edge_tags=edge_tags,
        rect=(x0, x1, y0, y1),
        nx=nx,
        ny=ny,
        diagonal=diagonal,
    )


@dataclass(frozen=True)
class InterfaceTrace:
    """Ordered 1D trace of a mesh on one rectangle side.

    ``breakpoints`` are arclength coordinates from 0 to the side length;
    segment ``k`` spans ``breakpoints[k:k+2]``, joins mesh vertices
    ``segment_vertices[k]`` (in increasing arclength) and is an edge of
    triangle ``segment_triangles[k]``.
    """

    breakpoints: np.ndarray
    segment_vertices: np.ndarray
    segment_triangles: np.ndarray
    normal: np.ndarray
    side: str
    origin: np.ndarray
    direction: np.ndarray

    @property
    def n_segments(self) -> int:
        return len(self.segment_triangles)

    @property
    def length(self) -> float:
        return float(self.breakpoints[-1])

    @property
    def normals(self) -> np.ndarray:
        """Per-segment outward normal of the owning subdomain."""
        return np.tile(self.normal, (self.n_segments, 1))

    @property
    def vertex_ids(self) -> np.ndarray:
        """Mesh vertex at each breakpoint."""
        return np.append(self.segment_vertices[:, 0], self.segment_vertices[-1, 1])

    def to_xy(self, s) -> np.ndarray:
        """Map arclength coordinates to points of the plane."""
        s = np.asarray(s, dtype=float)
        return self.origin + s[..., None] * self.direction


def interface_trace(mesh: Mesh2D, side: str) -> InterfaceTrace:
    """Extract the interface edges of ``mesh`` on ``side`` as an ordered trace."""
    if side not in SIDES:
        raise ValueError(f"unknown side {side!r}")
    mask = (mesh.edge_sides == side) & (mesh.edge_tags == INTERFACE)
    if not mask.any():
        raise ValueError(f"mesh has no interface edges on side {side!r}")
    edges = mesh.boundary_edges[mask]

    x0, x1, y0, y1 = mesh.rect
    vertical = side in ("left", "right")
    if vertical:
        origin = np.array([x0 if side == "left" else x1, y0])
        direction = np.array([0.0, 1.0])
    else:
        origin = np.array([x0, y0 if side == "bottom" else y1])
        direction = np.array([1.0, 0.0])

    coord = mesh.vertices[:, 1] - y0 if vertical else mesh.vertices[:, 0] - x0
    # orient each edge by increasing arclength, then sort edges
    a, b = edges[:, 0], edges[:, 1]
    flip = coord[a] > coord[b]
    edges = np.where(flip[:, None], edges[:, ::-1], edges)
    edges = edges[np.argsort(coord[edges[:, 0]], kind="stable")]

    breakpoints = np.append(coord[edges[:, 0]], coord[edges[-1, 1]])
    if np.any(np.diff(breakpoints) <= 0) or np.any(edges[1:, 0] != edges[:-1, 1]):
        raise ValueError("interface edges do not form a single chain")
    breakpoints[0] = 0.0

    triangles = _edge_owner(mesh, edges)
    return InterfaceTrace(
        breakpoints=breakpoints,
        segment_vertices=edges,
        segment_triangles=triangles,
        normal=np.array(_OUTWARD[side]),
        side=side,
        origin=origin,
        direction=direction,
    )


def _edge_owner(mesh: Mesh2D, edges: np.ndarray) -> np.ndarray:
    t = np.sort(mesh.triangles, axis=1)
    lookup = {}
    for k, tri in enumerate(t):
        for i, j in ((0, 1), (1, 2), (0, 2)):
            lookup.setdefault((tri[i], tri[j]), []).append(k)
    owners = np.empty(len(edges), dtype=np.int64)
    for n, (a, b) in enumerate(np.sort(edges, axis=1)):
        tris = lookup.get((a, b), [])
        if len(tris) != 1:
            raise ValueError(f"boundary edge ({a}, {b}) has {len(tris)} owning triangles")
        owners[n] = tris[0]
    return owners


@dataclass
class MeshDiagnostics:
    min_area: float
    total_area: float
    n_edges: int
    conformity_violations: int
    boundary_mismatch: int
    euler_characteristic: int
    max_shape_ratio: float
    quasi_uniformity: float


def inscribed_diameters(mesh: Mesh2D) -> np.ndarray:
    p = mesh.vertices[mesh.triangles]
    perimeter = sum(np.linalg.norm(p[:, (k + 1) % 3] - p[:, k], axis=1) for k in range(3))
    return 4.0 * np.abs(mesh.areas()) / perimeter


def validate_mesh(mesh: Mesh2D) -> MeshDiagnostics:
    """Report geometric and topological health of a mesh.

    Conformity violations count edges shared by more than two triangles
    plus vertices lying strictly inside some edge (hanging nodes). The shape
    ratio is diameter over inscribed-ball diameter; quasi-uniformity is
    ``h / min h_K``.
    """
    areas = mesh.areas()
    edges, counts = mesh.edges()
    violations = int(np.sum(counts > 2))

    # hanging nodes: a vertex strictly inside an edge
    v = mesh.vertices
    pa, pb = v[edges[:, 0]], v[edges[:, 1]]
    d = pb - pa
    L2 = np.einsum("ij,ij->i", d, d)
    chunk = max(1, 2_000_000 // max(len(v), 1))
    for start in range(0, len(edges), chunk):
        sl = slice(start, start + chunk)
        rel = v[None, :, :] - pa[sl, None, :]
        t = np.einsum("eij,ej->ei", rel, d[sl]) / L2[sl, None]
        cross = rel[..., 0] * d[sl, None, 1] - rel[..., 1] * d[sl, None, 0]
        on_line = np.abs(cross) <= 1e-12 * L2[sl, None]
        inside = (t > 1e-12) & (t < 1 - 1e-12)
        violations += int(np.sum(on_line & inside))

    n_boundary = int(np.sum(counts == 1))
    boundary_mismatch = abs(n_boundary - len(mesh.boundary_edges))
    tagged = {tuple(e) for e in np.sort(mesh.boundary_edges, axis=1)}
    boundary_mismatch += sum(1 for e in edges[counts == 1] if tuple(e) not in tagged)

    diam = mesh.diameters()
    return MeshDiagnostics(
        min_area=float(areas.min()),
        total_area=float(areas.sum()),
        n_edges=len(edges),
        conformity_violations=violations,
        boundary_mismatch=boundary_mismatch,
        euler_characteristic=mesh.n_vertices - len(edges) + mesh.n_triangles,
        max_shape_ratio=float(np.max(diam / inscribed_diameters(mesh))),
        quasi_uniformity=float(diam.max() / diam.min()),
    )


def write_mesh(mesh: Mesh2D, path) -> None:
    """Dump as text: ``v x y``, ``t i j k`` and ``e i j tag`` lines."""
    with open(path, "w") as fh:
        for x, y in mesh.vertices:
            fh.write(f"v {float(x)!r} {float(y)!r}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"t {i} {j} {k}\n")
        for (i, j), tag in zip(mesh.boundary_edges, mesh.edge_tags):
            fh.write(f"e {i} {j} {tag}\n")


def read_mesh(path) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Parse a dump written by :func:`write_mesh` into raw arrays."""
    verts, tris, edges, tags = [], [], [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append((float(parts[1]), float(parts[2])))
            elif parts[0] == "t":
                tris.append(tuple(int(p) for p in parts[1:4]))
            elif parts[0] == "e":
                edges.append((int(parts[1]), int(parts[2])))
                tags.append(parts[3])
            else:
                raise ValueError(f"unrecognised mesh line: {line!r}")
    return (np.array(verts), np.array(tris, dtype=np.int64),
            np.array(edges, dtype=np.int64), np.array(tags))
