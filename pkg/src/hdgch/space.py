"""Degree-of-freedom layout and per-element precomputed data.

The three discrete spaces on a mesh with polynomial order ``k`` are

* ``V_h``: vector fields, [P^k]^2 per element (``nv = 2 * dim P^k`` coefficients,
  x-component block first),
* ``W_h``: scalars, P^{k+1} per element (``nw`` coefficients),
* ``M_h``: face traces, P^k per face (``nm = k + 1`` coefficients).

Everything is stored batched over elements so local matrices can be
formed with a handful of ``einsum`` calls.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import dim_triangle, edge_basis, triangle_basis
from .mesh import Mesh
from .quadrature import quad_edge, quad_triangle


@dataclass(frozen=True)
class VolumeQuad:
    xhat: np.ndarray    # (Q, 2)
    xy: np.ndarray      # (E, Q, 2) physical points
    w: np.ndarray       # (E, Q) physical weights
    psi: np.ndarray     # (Q, nk)  P^k values
    phi: np.ndarray     # (Q, nw)  P^{k+1} values
    degree: int


class HDGSpace:
    """Layout of V_h x W_h x M_h on a mesh, with cached quadrature data.

    ``quad_bump`` raises the exactness of the rule used for the cubic
    nonlinearity above its default ``4(k+1)+2``.
    """

    def __init__(self, mesh: Mesh, k: int, quad_bump: int = 0):
        if k < 0:
            raise ValueError(f"polynomial order must be >= 0, got {k}")
        self.mesh = mesh
        self.k = k
        self.nk = dim_triangle(k)
        self.nv = 2 * self.nk
        self.nw = dim_triangle(k + 1)
        self.nm = k + 1
        self.ne = mesh.n_elements
        self.nf = mesh.n_faces
        self.basis_k = triangle_basis(k)
        self.basis_w = triangle_basis(k + 1)
        self.basis_m = edge_basis(k)

        xy = mesh.vertices[mesh.elements]                      # (E, 3, 2)
        self.B = np.stack([xy[:, 1] - xy[:, 0], xy[:, 2] - xy[:, 0]], axis=2)
        self.b = xy[:, 0]
        self.detB = np.linalg.det(self.B)
        self.Binv = np.linalg.inv(self.B)
        self.area = 0.5 * self.detB
        self.h = mesh.h
        self.tau = 1.0 / mesh.h

        # local face i joins local vertices i+1 and i+2
        tang = np.stack([xy[:, 2] - xy[:, 1], xy[:, 0] - xy[:, 2], xy[:, 1] - xy[:, 0]], axis=1)
        self.face_len = np.linalg.norm(tang, axis=2)            # (E, 3)
        self.normals = np.stack([tang[..., 1], -tang[..., 0]], axis=2) / self.face_len[..., None]

        self.quad_bilinear = self._volume_quad(2 * (k + 2))
        self.quad_cubic = self._volume_quad(4 * (k + 1) + 2 + quad_bump)
        self.quad_error = self._volume_quad(2 * (k + 2) + 8)

        # grad of P^k basis in physical coordinates at bilinear quad points
        g = self.basis_k.grad(self.quad_bilinear.xhat)           # (Q, nk, 2)
        self.grad_psi = np.einsum("qjc,ecd->eqjd", g, self.Binv)  # (E, Q, nk, 2)

        self._face_setup(2 * (k + 2))

        l2g = mesh.elem_faces[:, :, None] * self.nm + np.arange(self.nm)
        self.trace_l2g = l2g.reshape(self.ne, 3 * self.nm)       # single trace field

    @property
    def n_trace(self) -> int:
        """Unknowns of one trace field."""
        return self.nf * self.nm

    def _volume_quad(self, degree) -> VolumeQuad:
        rule = quad_triangle(degree)
        xy = np.einsum("ecd,qd->eqc", self.B, rule.points) + self.b[:, None, :]
        w = np.abs(self.detB)[:, None] * rule.weights[None, :]
        return VolumeQuad(rule.points, xy, w, self.basis_k.eval(rule.points),
                          self.basis_w.eval(rule.points), degree)

    def _face_setup(self, degree):
        mesh = self.mesh
        rule = quad_edge(degree)
        s = rule.points[:, 0]
        self.face_s = s
        self.face_wref = rule.weights
        self.lam = self.basis_m.eval(s)                           # (Qf, nm)
        f = mesh.elem_faces                                       # (E, 3)
        a = mesh.vertices[mesh.faces[f, 0]]                       # (E, 3, 2)
        d = mesh.vertices[mesh.faces[f, 1]] - a
        # points follow the global face orientation so traces need no flipping
        pts = a[:, :, None, :] + s[None, None, :, None] * d[:, :, None, :]
        self.face_xy = pts                                        # (E, 3, Qf, 2)
        xhat = np.einsum("ecd,eiqd->eiqc", self.Binv, pts - self.b[:, None, None, :])
        flat = xhat.reshape(-1, 2)
        shape = xhat.shape[:3]
        self.face_psi = self.basis_k.eval(flat).reshape(*shape, self.nk)
        self.face_phi = self.basis_w.eval(flat).reshape(*shape, self.nw)
        self.face_w = self.face_len[:, :, None] * rule.weights[None, None, :]

    # ------------------------------------------------------------------
    # field utilities

    def eval_scalar(self, coef, xhat) -> np.ndarray:
        """Evaluate a W_h field (E, nw) at reference points -> (E, npts)."""
        return coef @ self.basis_w.eval(xhat).T

    def eval_vector(self, coef, xhat) -> np.ndarray:
        """Evaluate a V_h field (E, nv) at reference points -> (E, npts, 2)."""
        psi = self.basis_k.eval(xhat)
        return np.stack([coef[:, :self.nk] @ psi.T, coef[:, self.nk:] @ psi.T], axis=-1)

    def project_scalar(self, f, degree=None, t=None) -> np.ndarray:
        """Element-wise L2 projection onto W_h (or P^degree if given)."""
        basis = self.basis_w if degree is None or degree == self.k + 1 else triangle_basis(degree)
        quad = self.quad_error
        vals = self._call(f, quad.xy, t)
        vals = np.broadcast_to(vals, quad.xy.shape[:2])
        b = basis.eval(quad.xhat)
        # mass matrix is detB * I for the orthonormal reference basis
        return np.einsum("eq,qj->ej", quad.w * vals, b) / np.abs(self.detB)[:, None]

    def project_vector(self, f, t=None) -> np.ndarray:
        """Element-wise L2 projection of a vector field onto V_h."""
        quad = self.quad_error
        vals = np.asarray(self._call(f, quad.xy, t))
        vals = np.broadcast_to(vals, quad.xy.shape[:2] + (2,))
        c = np.einsum("eqc,qj->ecj", quad.w[..., None] * vals, self.basis_k.eval(quad.xhat))
        return c.reshape(self.ne, self.nv) / np.abs(self.detB)[:, None]

    @staticmethod
    def _call(f, xy, t):
        x, y = xy[..., 0], xy[..., 1]
        return np.asarray(f(x, y) if t is None else f(x, y, t), dtype=float)

    def scalar_mass(self) -> np.ndarray:
        """Integral of each W_h basis function over its element, (E, nw)."""
        quad = self.quad_bilinear
        return quad.w @ quad.phi

    def face_projection(self, u) -> np.ndarray:
        """Pi_k^d of a W_h field on every local face, (E, 3, nm) coefficients."""
        vals = np.einsum("eiqj,ej->eiq", self.face_phi, u)
        return np.einsum("eiq,q,qm->eim", vals, self.face_wref, self.lam)

    def gather_trace(self, trace) -> np.ndarray:
        """Global single-field trace (nf*nm,) -> element-local (E, 3*nm)."""
        return trace[self.trace_l2g]
