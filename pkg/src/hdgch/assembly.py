"""Element matrices of the HDG form, static condensation and the global
trace system.

The bilinear form is

    A(q, u, uh; r, w, mu) = (q, r) - (u, div r) + <uh, r.n>
                          + (div q, w) - <q.n, mu>
                          + <tau (P u - uh), P w - mu>

summed over elements, with ``tau = 1 / h_K`` and ``P`` the L2 projection
onto P^k of each face.  Element matrices use the row = test, column =
trial convention with unknowns ordered ``[V_h | W_h | three faces of M_h]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .space import HDGSpace


class SingularLocalBlock(np.linalg.LinAlgError):
    def __init__(self, element, msg=""):
        self.element = element
        super().__init__(f"singular interior block on element {element}{': ' + msg if msg else ''}")


class SingularTraceSystem(RuntimeError):
    pass


@dataclass(frozen=True)
class LocalBlocks:
    """Per-element matrices, batched over elements."""

    A: np.ndarray    # (E, na, na) full element matrix of the form A
    Mv: np.ndarray   # (E, nv, nv) V_h mass
    Mw: np.ndarray   # (E, nw, nw) W_h mass
    D: np.ndarray    # (E, nw, nv) (w, d psi / dx_c)
    C: np.ndarray    # (E, nv, 3 nm) <mu, r.n>
    P: np.ndarray    # (E, 3, nm, nw) <lambda, w>_F
    nv: int
    nw: int
    nm: int

    @property
    def iV(self):
        return np.arange(self.nv)

    @property
    def iW(self):
        return self.nv + np.arange(self.nw)

    @property
    def iM(self):
        return self.nv + self.nw + np.arange(3 * self.nm)

    def interior(self):
        return np.arange(self.nv + self.nw)


def assemble_local_A(space: HDGSpace) -> LocalBlocks:
    nk, nv, nw, nm, ne = space.nk, space.nv, space.nw, space.nm, space.ne
    quad = space.quad_bilinear
    w = quad.w
    Mk = np.einsum("eq,qi,qj->eij", w, quad.psi, quad.psi)
    Mw = np.einsum("eq,qi,qj->eij", w, quad.phi, quad.phi)
    Mv = np.zeros((ne, nv, nv))
    Mv[:, :nk, :nk] = Mk
    Mv[:, nk:, nk:] = Mk

    # D[w, (c, j)] = (phi_w, d psi_j / dx_c)
    D = np.einsum("eq,qi,eqjc->eicj", w, quad.phi, space.grad_psi).reshape(ne, nw, nv)

    fw = space.face_w
    # C[(c, j), (i, m)] = <psi_j n_c, lambda_m>_{F_i}
    C = np.einsum("eiq,eiqj,eic,qm->ecjim", fw, space.face_psi, space.normals, space.lam)
    C = C.reshape(ne, nv, 3 * nm)
    P = np.einsum("eiq,qm,eiqj->eimj", fw, space.lam, space.face_phi)

    tau = space.tau
    flen = space.face_len
    Sww = tau[:, None, None] * np.einsum("eimj,eiml->ejl", P, P / flen[:, :, None, None])
    Swm = -tau[:, None, None] * np.transpose(P, (0, 3, 1, 2)).reshape(ne, nw, 3 * nm)
    Smm = np.zeros((ne, 3 * nm, 3 * nm))
    diag = (tau[:, None] * flen).repeat(nm, axis=1)
    Smm[:, np.arange(3 * nm), np.arange(3 * nm)] = diag

    na = nv + nw + 3 * nm
    A = np.zeros((ne, na, na))
    sV, sW, sM = slice(0, nv), slice(nv, nv + nw), slice(nv + nw, na)
    A[:, sV, sV] = Mv
    A[:, sV, sW] = -np.transpose(D, (0, 2, 1))
    A[:, sV, sM] = C
    A[:, sW, sV] = D
    A[:, sW, sW] = Sww
    A[:, sW, sM] = Swm
    A[:, sM, sV] = -np.transpose(C, (0, 2, 1))
    A[:, sM, sW] = np.transpose(Swm, (0, 2, 1))
    A[:, sM, sM] = Smm
    return LocalBlocks(A=A, Mv=Mv, Mw=Mw, D=D, C=C, P=P, nv=nv, nw=nw, nm=nm)


def gather_A_vector(space: HDGSpace, v, w, trace) -> np.ndarray:
    """Stack element-local coefficients (V, W, gathered M) -> (E, na)."""
    return np.concatenate([v, w, space.gather_trace(trace)], axis=1)


def apply_form(blocks: LocalBlocks, space: HDGSpace, trial, test) -> float:
    """A(trial; test) with each argument a tuple (v, w, trace) of global fields."""
    x = gather_A_vector(space, *trial)
    y = gather_A_vector(space, *test)
    return float(np.einsum("ei,eij,ej->", y, blocks.A, x))


# ----------------------------------------------------------------------
# static condensation


@dataclass
class Condensed:
    """Result of eliminating interior unknowns element by element.

    ``X = J_II^{-1} J_IT`` and ``y = J_II^{-1} r_I`` are kept so the
    interior solution can be recovered as ``x_I = y - X x_T``.
    """

    S: np.ndarray   # (E, nt, nt) Schur complement on element traces
    g: np.ndarray   # (E, nt) condensed right-hand side
    X: np.ndarray   # (E, ni, nt)
    y: np.ndarray   # (E, ni)


def condense(J, rhs, n_interior: int, jacobian_addition=None, add_index=None) -> Condensed:
    """Condense the element systems ``J x = rhs`` onto trace unknowns.

    ``J`` is (E, n, n) with interior unknowns first; ``rhs`` is (E, n).
    ``jacobian_addition`` (E, m, m) is added to ``J`` at rows/columns
    ``add_index`` before elimination.  The condensed system reads
    ``S x_T = g`` (after summing over elements).
    """
    if jacobian_addition is not None:
        J = J.copy()
        J[:, add_index[:, None], add_index[None, :]] += jacobian_addition
    ni = n_interior
    JII, JIT = J[:, :ni, :ni], J[:, :ni, ni:]
    JTI, JTT = J[:, ni:, :ni], J[:, ni:, ni:]
    R = np.concatenate([JIT, rhs[:, :ni, None]], axis=2)
    try:
        Z = np.linalg.solve(JII, R)
    except np.linalg.LinAlgError:
        bad = _first_singular(JII)
        raise SingularLocalBlock(bad) from None
    if not np.all(np.isfinite(Z)):
        raise SingularLocalBlock(_first_singular(JII), "non-finite elimination")
    X, y = Z[:, :, :-1], Z[:, :, -1]
    S = JTT - JTI @ X
    g = rhs[:, ni:] - np.einsum("eij,ej->ei", JTI, y)
    return Condensed(S=S, g=g, X=X, y=y)


def _first_singular(JII):
    for e, M in enumerate(JII):
        if np.linalg.cond(M) > 1e15:
            return e
    return -1


def reconstruct(cond: Condensed, local_trace) -> np.ndarray:
    """Interior unknowns (E, ni) from element-local traces (E, nt)."""
    return cond.y - np.einsum("eij,ej->ei", cond.X, local_trace)


# ----------------------------------------------------------------------
# global trace system


@dataclass
class TraceSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    l2g: np.ndarray  # (E, nt) element-local to global trace index

    @property
    def shape(self):
        return self.matrix.shape


def assemble_global(l2g, S, g, n_global: int, order=None) -> TraceSystem:
    """Sum element Schur complements into one sparse matrix.

    Entries receive at most two contributions (interior faces), so the
    result does not depend on ``order`` of element traversal.
    """
    ne, nt = l2g.shape
    if S.shape != (ne, nt, nt) or g.shape != (ne, nt):
        raise ValueError(f"dimension mismatch: l2g {l2g.shape}, S {S.shape}, g {g.shape}")
    if order is not None:
        l2g, S, g = l2g[order], S[order], g[order]
    rows = np.broadcast_to(l2g[:, :, None], S.shape).ravel()
    cols = np.broadcast_to(l2g[:, None, :], S.shape).ravel()
    A = sp.csr_matrix((S.ravel(), (rows, cols)), shape=(n_global, n_global))
    A.sum_duplicates()
    A.sort_indices()
    b = np.bincount(l2g.ravel(), weights=g.ravel(), minlength=n_global)
    return TraceSystem(matrix=A, rhs=b, l2g=l2g)


def solve_trace(system: TraceSystem, hint: str = "", rtol: float = 1e-10) -> np.ndarray:
    """Sparse LU solve; raises SingularTraceSystem on breakdown.

    The pattern is structurally symmetric, so minimum degree on A^T + A is
    used with a relaxed diagonal pivot threshold.  Strict partial pivoting
    destroys that ordering when the two fields are scaled very differently
    (small eps) and inflates the fill by an order of magnitude.  If the
    residual check ||Ax - b|| <= rtol (||b|| + ||A|| ||x||) fails, the
    factorization is repeated with full partial pivoting.
    """
    A = system.matrix.tocsc()
    b = system.rhs
    if not np.any(b):
        return np.zeros_like(b)
    normA = spla.norm(A, np.inf)
    x = None
    for thresh in (0.01, 1.0):
        try:
            lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=thresh)
        except RuntimeError as exc:
            if thresh < 1.0:
                continue
            raise SingularTraceSystem(f"trace system factorization failed ({exc}){hint}") from None
        x = lu.solve(b)
        if not np.all(np.isfinite(x)):
            continue
        res = np.abs(A @ x - b).max()
        if res <= rtol * (np.abs(b).max() + normA * np.abs(x).max()):
            return x
    if x is None or not np.all(np.isfinite(x)):
        raise SingularTraceSystem(f"trace system produced non-finite values{hint}")
    raise SingularTraceSystem(f"trace system solve is inaccurate (numerically singular){hint}")
