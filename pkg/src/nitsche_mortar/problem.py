"""Interface problem data and the two-subdomain discretization of the unit square."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .coupling import MergedPartition, MultiplierSpace, merge_partitions, multiplier_space
from .fem import FeSpace, fe_space
from .mesh import build_rect_tri_mesh

OMEGA1 = (0.0, 0.5, 0.0, 1.0)
OMEGA2 = (0.5, 1.0, 0.0, 1.0)

Field = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ProblemSpec:
    """Coefficients and data of ``-div(beta_i grad u_i) + a_i u_i = f_i`` on two subdomains.

    ``u``/``grad_u`` are optional pairs (one per subdomain) of exact fields;
    ``grad_u`` returns a ``(ux, uy)`` tuple. ``lam`` is the exact multiplier
    as a function of interface arclength, equal to ``beta_1 du_1/dnu_1`` with
    ``nu_1`` pointing from Omega_1 into Omega_2.
    """

    beta1: float
    beta2: float
    f1: Field
    f2: Field
    a1: float = 0.0
    a2: float = 0.0
    g: Field | None = None
    u: tuple[Field, Field] | None = None
    grad_u: tuple | None = None
    lam: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if not (self.beta1 > 0 and self.beta2 > 0):
            raise ValueError("diffusion coefficients must be positive")
        if self.a1 < 0 or self.a2 < 0:
            raise ValueError("reaction coefficients must be non-negative")

    def beta(self, side: int) -> float:
        return self.beta1 if side == 1 else self.beta2

    def a(self, side: int) -> float:
        return self.a1 if side == 1 else self.a2

    def f(self, side: int) -> Field:
        return self.f1 if side == 1 else self.f2


@dataclass(frozen=True)
class Discretization:
    """Meshes, P1 spaces, merged interface partition and multiplier space."""

    space1: FeSpace
    space2: FeSpace
    merged: MergedPartition
    mult: MultiplierSpace

    def space(self, side: int) -> FeSpace:
        return self.space1 if side == 1 else self.space2

    @property
    def h(self) -> float:
        return max(self.space1.mesh.h, self.space2.mesh.h)


def cells_for(h: float, width: float) -> int:
    """Number of cells of size ``h`` across ``width``; must be an integer."""
    n = width / h
    if h <= 0 or abs(n - round(n)) > 1e-9 * max(n, 1.0) or round(n) < 1:
        raise ValueError(f"cell size {h} does not tile a side of length {width}")
    return int(round(n))


def discretize(h1: float, h2: float, diagonal: str = "NE",
               endpoint_dofs: bool = False) -> Discretization:
    """Structured meshes of cell size ``h1`` on Omega_1 = (0,1/2)x(0,1) and ``h2`` on Omega_2."""
    m1 = build_rect_tri_mesh(OMEGA1, cells_for(h1, 0.5), cells_for(h1, 1.0), diagonal, "right")
    m2 = build_rect_tri_mesh(OMEGA2, cells_for(h2, 0.5), cells_for(h2, 1.0), diagonal, "left")
    s1, s2 = fe_space(m1), fe_space(m2)
    merged = merge_partitions(s1.trace, s2.trace)
    return Discretization(s1, s2, merged, multiplier_space(s2.trace, endpoint_dofs))
