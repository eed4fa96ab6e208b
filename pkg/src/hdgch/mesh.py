"""Conforming triangulations of axis-aligned rectangles.

Local face ``i`` of an element joins local vertices ``i+1`` and ``i+2``
(mod 3), i.e. it lies opposite vertex ``i``.  Global faces are stored as
sorted vertex pairs in lexicographic order; the global orientation of a
face runs from its smaller to its larger vertex index.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Mesh:
    vertices: np.ndarray      # (nv, 2)
    elements: np.ndarray      # (ne, 3), counterclockwise
    faces: np.ndarray         # (nf, 2), sorted vertex pairs
    elem_faces: np.ndarray    # (ne, 3) global face index of local face i
    elem_face_sign: np.ndarray  # (ne, 3) +1 if local direction matches global
    face_elems: np.ndarray    # (nf, 2), second entry -1 on the boundary
    boundary: np.ndarray      # (nf,) bool
    h: np.ndarray             # (ne,) longest edge
    face_len: np.ndarray      # (nf,)
    bbox: tuple = field(default=(0.0, 1.0, 0.0, 1.0))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def area(self) -> np.ndarray:
        return 0.5 * _signed_double_area(self.vertices, self.elements)

    def element_geometry(self, e: int) -> "ElementGeometry":
        if not 0 <= e < self.n_elements:
            raise IndexError(f"element index {e} out of range [0, {self.n_elements})")
        return ElementGeometry.from_vertices(self.vertices[self.elements[e]])


@dataclass(frozen=True)
class ElementGeometry:
    """Affine map x = B @ xhat + b from the reference triangle."""

    B: np.ndarray
    b: np.ndarray
    area: float
    normals: np.ndarray  # (3, 2) outward unit normal of local face i
    h: float

    @classmethod
    def from_vertices(cls, xy: np.ndarray) -> "ElementGeometry":
        xy = np.asarray(xy, dtype=float)
        B = np.column_stack([xy[1] - xy[0], xy[2] - xy[0]])
        det = np.linalg.det(B)
        if det <= 0:
            raise ValueError("element vertices must be counterclockwise and non-degenerate")
        normals = np.empty((3, 2))
        lengths = np.empty(3)
        for i in range(3):
            t = xy[(i + 2) % 3] - xy[(i + 1) % 3]
            lengths[i] = np.hypot(*t)
            # rotate the CCW tangent clockwise to point outward
            normals[i] = np.array([t[1], -t[0]]) / lengths[i]
        return cls(B=B, b=xy[0].copy(), area=0.5 * det, normals=normals, h=lengths.max())

    def map(self, xhat: np.ndarray) -> np.ndarray:
        return np.asarray(xhat) @ self.B.T + self.b


def _signed_double_area(vertices, elements):
    a, b, c = (vertices[elements[:, i]] for i in range(3))
    return (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])


def mesh_from_triangles(vertices, elements, bbox=(0.0, 1.0, 0.0, 1.0)) -> Mesh:
    """Build face incidence and geometry for an arbitrary CCW triangle list."""
    vertices = np.asarray(vertices, dtype=float)
    elements = np.asarray(elements, dtype=np.int64)
    if np.any(_signed_double_area(vertices, elements) <= 0):
        raise ValueError("all elements must have positive signed area")

    ne = len(elements)
    local = np.stack([elements[:, [1, 2]], elements[:, [2, 0]], elements[:, [0, 1]]], axis=1)
    sorted_pairs = np.sort(local, axis=2).reshape(-1, 2)
    faces, inverse = np.unique(sorted_pairs, axis=0, return_inverse=True)
    elem_faces = inverse.reshape(ne, 3)
    elem_face_sign = np.where(local[:, :, 0] < local[:, :, 1], 1, -1)

    nf = len(faces)
    face_elems = -np.ones((nf, 2), dtype=np.int64)
    count = np.zeros(nf, dtype=np.int64)
    for e in range(ne):
        for f in elem_faces[e]:
            if count[f] >= 2:
                raise ValueError(f"face {f} shared by more than two elements")
            face_elems[f, count[f]] = e
            count[f] += 1
    boundary = count == 1

    edge_vec = vertices[faces[:, 1]] - vertices[faces[:, 0]]
    face_len = np.hypot(edge_vec[:, 0], edge_vec[:, 1])
    h = face_len[elem_faces].max(axis=1)
    return Mesh(vertices, elements, faces, elem_faces, elem_face_sign, face_elems,
                boundary, h, face_len, tuple(float(v) for v in bbox))


def build_uniform_mesh(n: int, domain=(0.0, 1.0, 0.0, 1.0)) -> Mesh:
    """n x n squares, each cut along its (+1, +1) diagonal into two triangles."""
    if int(n) != n or n < 1:
        raise ValueError(f"number of subdivisions must be a positive integer, got {n!r}")
    n = int(n)
    x0, x1, y0, y1 = (float(v) for v in domain)
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"degenerate rectangle {domain!r}")
    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(n), np.arange(n))
    v00 = (j * (n + 1) + i).ravel()
    v10, v01, v11 = v00 + 1, v00 + n + 1, v00 + n + 2
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    elements = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return mesh_from_triangles(vertices, elements, bbox=(x0, x1, y0, y1))
