"""Orthonormal polynomial bases and element/face L2 projections."""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre

from .mesh import ElementGeometry
from .quadrature import quad_edge, quad_triangle


def dim_triangle(p: int) -> int:
    return (p + 1) * (p + 2) // 2


def _exponents(p):
    return [(a, d - a) for d in range(p + 1) for a in range(d, -1, -1)]


class TriangleBasis:
    """Monomials in centred reference coordinates, orthonormalized on the
    reference triangle (unit mass matrix there).

    On a physical element K the pulled-back basis has mass matrix
    ``2 |K| I``.
    """

    def __init__(self, degree: int):
        if degree < 0:
            raise ValueError("degree must be non-negative")
        self.degree = degree
        self.dim = dim_triangle(degree)
        self._exps = np.array(_exponents(degree))
        rule = quad_triangle(2 * degree)
        M = self._monomials(rule.points)
        G = (M * rule.weights[:, None]).T @ M
        L = np.linalg.cholesky(G)
        # phi = m @ C with C = L^{-T}  =>  C^T G C = I
        self.coef = np.linalg.inv(L).T

    def _monomials(self, xhat):
        xhat = np.atleast_2d(xhat)
        x = xhat[:, 0] - 1.0 / 3.0
        y = xhat[:, 1] - 1.0 / 3.0
        a, b = self._exps[:, 0], self._exps[:, 1]
        return x[:, None] ** a * y[:, None] ** b

    def _monomial_grads(self, xhat):
        xhat = np.atleast_2d(xhat)
        x = (xhat[:, 0] - 1.0 / 3.0)[:, None]
        y = (xhat[:, 1] - 1.0 / 3.0)[:, None]
        a, b = self._exps[:, 0], self._exps[:, 1]
        dx = np.where(a > 0, a * x ** np.maximum(a - 1, 0), 0.0) * y ** b
        dy = x ** a * np.where(b > 0, b * y ** np.maximum(b - 1, 0), 0.0)
        return np.stack([dx, dy], axis=-1)

    def eval(self, xhat) -> np.ndarray:
        """Values at reference points, shape (npts, dim)."""
        return self._monomials(xhat) @ self.coef

    def grad(self, xhat) -> np.ndarray:
        """Reference gradients, shape (npts, dim, 2)."""
        return np.einsum("qmc,mj->qjc", self._monomial_grads(xhat), self.coef)


class EdgeBasis:
    """Orthonormal Legendre polynomials on [0, 1]."""

    def __init__(self, degree: int):
        self.degree = degree
        self.dim = degree + 1

    def eval(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float).ravel()
        V = legendre.legvander(2.0 * s - 1.0, self.degree)
        return V * np.sqrt(2.0 * np.arange(self.dim) + 1.0)


@lru_cache(maxsize=None)
def triangle_basis(degree: int) -> TriangleBasis:
    return TriangleBasis(degree)


@lru_cache(maxsize=None)
def edge_basis(degree: int) -> EdgeBasis:
    return EdgeBasis(degree)


def l2_project_element(f, degree: int, geom: ElementGeometry, quad_degree: int | None = None):
    """Coefficients of the L2 projection of ``f(x, y)`` onto P^degree(K).

    ``f`` may return an array with a trailing component axis for vector
    fields; coefficients then have shape (dim, ncomp).
    """
    basis = triangle_basis(degree)
    rule = quad_triangle(quad_degree if quad_degree is not None else 2 * degree + 4)
    xy = geom.map(rule.points)
    vals = np.asarray(f(xy[:, 0], xy[:, 1]), dtype=float)
    if vals.ndim == 0:
        vals = np.full(len(rule.weights), float(vals))
    phi = basis.eval(rule.points)
    # mass matrix is 2|K| I, the quadrature carries the same |det B| factor
    rhs = np.tensordot(phi * rule.weights[:, None], vals, axes=(0, 0))
    return rhs


def l2_project_face(f, degree: int, a, b, quad_degree: int | None = None):
    """Coefficients of the L2 projection of ``f(s)`` onto P^degree of the
    segment from ``a`` to ``b``; ``s`` is the arc-length fraction in [0, 1].

    ``f`` receives (s, x, y).
    """
    basis = edge_basis(degree)
    rule = quad_edge(quad_degree if quad_degree is not None else 2 * degree + 4)
    s = rule.points[:, 0]
    a, b = np.asarray(a, float), np.asarray(b, float)
    xy = a + s[:, None] * (b - a)
    vals = np.asarray(f(s, xy[:, 0], xy[:, 1]), dtype=float)
    if vals.ndim == 0:
        vals = np.full(len(s), float(vals))
    lam = basis.eval(s)
    return lam.T @ (rule.weights * vals)


def eval_element(coef, degree: int, xhat) -> np.ndarray:
    return triangle_basis(degree).eval(xhat) @ coef


def eval_face(coef, degree: int, s) -> np.ndarray:
    return edge_basis(degree).eval(s) @ coef
