"""Gauss rules on the unit segment and the reference triangle."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class QuadRule:
    """Nodes in reference coordinates and weights summing to the reference measure."""

    points: np.ndarray
    weights: np.ndarray
    degree: int


def gauss_segment(npoints: int) -> QuadRule:
    """Gauss-Legendre rule on [0, 1], exact for degree ``2 * npoints - 1``."""
    if int(npoints) != npoints or not 1 <= npoints <= 5:
        raise ValueError(f"npoints must be in 1..5, got {npoints}")
    x, w = np.polynomial.legendre.leggauss(int(npoints))
    return QuadRule(points=0.5 * (x + 1.0), weights=0.5 * w, degree=2 * int(npoints) - 1)


# Strang-Fix / Dunavant six-point rule, degree 4 (weights for area 1)
_D4_A = 0.445948490915965
_D4_B = 0.091576213509771
_D4_WA = 0.223381589678011
_D4_WB = 0.109951743655322


def gauss_triangle(degree: int) -> QuadRule:
    """Symmetric rule on the triangle (0,0), (1,0), (0,1); weights sum to 1/2."""
    if degree == 1:
        pts = np.array([[1.0 / 3.0, 1.0 / 3.0]])
        wts = np.array([0.5])
    elif degree == 2:
        pts = np.array([[0.5, 0.0], [0.5, 0.5], [0.0, 0.5]])
        wts = np.full(3, 1.0 / 6.0)
    elif degree == 4:
        a, b = _D4_A, _D4_B
        pts = np.array([
            [a, a], [1 - 2 * a, a], [a, 1 - 2 * a],
            [b, b], [1 - 2 * b, b], [b, 1 - 2 * b],
        ])
        wts = 0.5 * np.array([_D4_WA] * 3 + [_D4_WB] * 3)
    else:
        raise ValueError(f"unsupported triangle rule degree {degree}; use 1, 2 or 4")
    return QuadRule(points=pts, weights=wts, degree=degree)


def collapsed_triangle(n: int) -> QuadRule:
    """Duffy-collapsed tensor Gauss rule, exact for degree ``2n - 2``.

    Used where a reference computation needs more accuracy than the
    symmetric rules give.
    """
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    u, v = np.meshgrid(x, x, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    pts = np.column_stack([u.ravel(), (v * (1.0 - u)).ravel()])
    wts = (wu * wv * (1.0 - u)).ravel()
    return QuadRule(points=pts, weights=wts, degree=2 * n - 2)
