"""Gauss rules on the unit interval and the reference triangle.

The triangle rules are collapsed (Duffy) products of a Gauss-Legendre
rule and a Gauss-Jacobi rule carrying the (1 - t) Jacobian, so every
weight is positive and any exactness degree can be produced on demand.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import roots_jacobi

MAX_DEGREE = 60


@dataclass(frozen=True)
class QuadRule:
    points: np.ndarray   # (nq, dim) reference coordinates
    weights: np.ndarray  # (nq,)
    degree: int

    def __len__(self):
        return len(self.weights)


def _check_degree(deg):
    if int(deg) != deg or deg < 0:
        raise ValueError(f"quadrature degree must be a non-negative integer, got {deg!r}")
    if deg > MAX_DEGREE:
        raise ValueError(f"quadrature degree {deg} exceeds the supported maximum {MAX_DEGREE}")
    return int(deg)


@lru_cache(maxsize=None)
def quad_edge(deg: int) -> QuadRule:
    """Gauss-Legendre rule on [0, 1] exact for polynomials of degree ``deg``."""
    deg = _check_degree(deg)
    npts = deg // 2 + 1
    x, w = leggauss(npts)
    return QuadRule(points=(0.5 * (x + 1.0))[:, None], weights=0.5 * w, degree=2 * npts - 1)


@lru_cache(maxsize=None)
def quad_triangle(deg: int) -> QuadRule:
    """Rule on {x, y >= 0, x + y <= 1} exact for total degree ``deg``."""
    deg = _check_degree(deg)
    npts = deg // 2 + 1
    s, ws = leggauss(npts)
    s, ws = 0.5 * (s + 1.0), 0.5 * ws
    # weight (1 - x)^1 on [-1, 1]; maps to (1 - t) on [0, 1] with factor 1/4
    t, wt = roots_jacobi(npts, 1.0, 0.0)
    t, wt = 0.5 * (t + 1.0), 0.25 * wt
    S, T = np.meshgrid(s, t, indexing="ij")
    W = np.outer(ws, wt)
    x = S * (1.0 - T)
    pts = np.column_stack([x.ravel(), T.ravel()])
    return QuadRule(points=pts, weights=W.ravel(), degree=2 * npts - 1)
