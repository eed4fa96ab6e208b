"""Mass, discrete energy, the HDG negative norm and the discrete Laplacian."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .assembly import LocalBlocks, TraceSystem, assemble_global, condense, reconstruct, solve_trace
from .space import HDGSpace


@dataclass(frozen=True)
class EnergyReport:
    chemical: float
    gradient: float
    stabilization: float

    @property
    def total(self) -> float:
        return self.chemical + self.gradient + self.stabilization


def mass(space: HDGSpace, u) -> float:
    """(u, 1) over the domain for a W_h field."""
    return float(np.sum(space.scalar_mass() * u))


def stabilization_norm2(space: HDGSpace, w, trace) -> float:
    """|| h_K^{-1/2} (P w - trace) ||^2 over all element boundaries."""
    jump = space.face_projection(w) - space.gather_trace(trace).reshape(space.ne, 3, space.nm)
    return float(np.sum(space.tau[:, None] * space.face_len * np.sum(jump ** 2, axis=2)))


def vector_norm2(space: HDGSpace, v) -> float:
    quad = space.quad_bilinear
    nk = space.nk
    vx, vy = v[:, :nk] @ quad.psi.T, v[:, nk:] @ quad.psi.T
    return float(np.sum(quad.w * (vx ** 2 + vy ** 2)))


def energy(space: HDGSpace, u, q, uhat, eps: float) -> EnergyReport:
    quad = space.quad_cubic
    U = u @ quad.phi.T
    chem = float(np.sum(quad.w * (U ** 2 - 1.0) ** 2)) / (4.0 * eps)
    grad = 0.5 * eps * vector_norm2(space, q)
    stab = 0.5 * eps * stabilization_norm2(space, u, uhat)
    return EnergyReport(chem, grad, stab)


def state_energy(space, state, eps) -> EnergyReport:
    return energy(space, state.u, state.q, state.uhat, eps)


# ----------------------------------------------------------------------


def _sub(blocks: LocalBlocks, rows, cols):
    return blocks.A[:, rows[:, None], cols[None, :]]


def laplacian_aux(space: HDGSpace, blocks: LocalBlocks, u):
    """Solve A(q, u, uh; r, 0, mu) = 0 for (q, uh) given u.

    Returns ``(q, uh, residual)`` where residual is the max-norm of the
    r/mu equations after the solve.
    """
    iV, iW, iM = blocks.iV, blocks.iW, blocks.iM
    idx = np.concatenate([iV, iM])
    J = _sub(blocks, idx, idx)
    rhs = -np.einsum("eij,ej->ei", _sub(blocks, idx, iW), u)
    cond = condense(J, rhs, blocks.nv)
    system = assemble_global(space.trace_l2g, cond.S, cond.g, space.n_trace)
    uh = solve_trace(system)
    q = reconstruct(cond, uh[space.trace_l2g])
    x = np.concatenate([q, uh[space.trace_l2g]], axis=1)
    r = np.einsum("eij,ej->ei", J, x) - rhs
    rV = r[:, :blocks.nv]
    rM = np.bincount(space.trace_l2g.ravel(), weights=r[:, blocks.nv:].ravel(),
                     minlength=space.n_trace)
    res = max(np.abs(rV).max(initial=0.0), np.abs(rM).max(initial=0.0))
    return q, uh, res


def discrete_laplacian(space: HDGSpace, blocks: LocalBlocks, u):
    """Delta_h u in W_h:  (Delta_h u, w) = -A(q, u, uh; 0, w, 0)."""
    q, uh, _ = laplacian_aux(space, blocks, u)
    iV, iW, iM = blocks.iV, blocks.iW, blocks.iM
    Aw = (np.einsum("eij,ej->ei", _sub(blocks, iW, iV), q)
          + np.einsum("eij,ej->ei", _sub(blocks, iW, iW), u)
          + np.einsum("eij,ej->ei", _sub(blocks, iW, iM), uh[space.trace_l2g]))
    return -np.linalg.solve(blocks.Mw, Aw[..., None])[..., 0]


@dataclass(frozen=True)
class NegativeNormResult:
    value: float           # via (v, Pi_W v)
    value_energy: float    # via ||Pi_V v||^2 + stabilization
    flux: np.ndarray
    scalar: np.ndarray
    trace: np.ndarray
    multiplier: float


def hdg_inverse_laplacian(space: HDGSpace, blocks: LocalBlocks, v):
    """Find (s, z, zh) in V_h x mean-free W_h x M_h with
    A(s, z, zh; r, w, mu) = (v, w) for all test functions.

    The mean-zero condition on z is imposed by one Lagrange multiplier
    appended to the condensed trace system.
    """
    ni = blocks.nv + blocks.nw
    A = blocks.A
    AII, AIT = A[:, :ni, :ni], A[:, :ni, ni:]
    ATI = A[:, ni:, :ni]
    bI = np.zeros((space.ne, ni))
    bI[:, blocks.nv:] = np.einsum("eij,ej->ei", blocks.Mw, v)
    cI = np.zeros((space.ne, ni))
    cI[:, blocks.nv:] = space.scalar_mass()
    Z = np.linalg.solve(AII, np.concatenate([AIT, bI[..., None], cI[..., None]], axis=2))
    X, yb, zc = Z[:, :, :-2], Z[:, :, -2], Z[:, :, -1]
    S = A[:, ni:, ni:] - ATI @ X
    g = -np.einsum("eij,ej->ei", ATI, yb)
    l2g = space.trace_l2g
    nT = space.n_trace
    main = assemble_global(l2g, S, g, nT)
    col = np.bincount(l2g.ravel(), weights=(-np.einsum("eij,ej->ei", ATI, zc)).ravel(),
                      minlength=nT)
    row = np.bincount(l2g.ravel(), weights=(-np.einsum("ei,eij->ej", cI, X)).ravel(),
                      minlength=nT)
    corner = -np.sum(cI * zc)
    rhs_c = -np.sum(cI * yb)
    M = sp.bmat([[main.matrix, sp.csr_matrix(col[:, None])],
                 [sp.csr_matrix(row[None, :]), sp.csr_matrix([[corner]])]], format="csr")
    sol = solve_trace(TraceSystem(M, np.append(main.rhs, rhs_c), l2g))
    zh, lam = sol[:nT], sol[nT]
    xI = yb - np.einsum("eij,ej->ei", X, zh[l2g]) - zc * lam
    return xI[:, :blocks.nv], xI[:, blocks.nv:], zh, float(lam)


def negative_norm(space: HDGSpace, blocks: LocalBlocks, v, tol: float = 1e-10) -> NegativeNormResult:
    """HDG H^{-1} norm of a mean-zero W_h field, evaluated two ways."""
    m = mass(space, v)
    if abs(m) > tol:
        raise ValueError(f"negative norm needs a mean-zero field, got (v, 1) = {m:.3e}")
    s, z, zh, lam = hdg_inverse_laplacian(space, blocks, v)
    val2 = float(np.sum(v * np.einsum("eij,ej->ei", blocks.Mw, z)))
    val1 = vector_norm2(space, s) + stabilization_norm2(space, z, zh)
    return NegativeNormResult(value=np.sqrt(max(val2, 0.0)), value_energy=np.sqrt(val1),
                              flux=s, scalar=z, trace=zh, multiplier=lam)
