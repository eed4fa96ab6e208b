"""Time stepping of the HDG Cahn-Hilliard system.

Each step solves, for (p, phi, phih) and (q, u, uh),

    ((u - u_prev)/dt, w1) + A(p, phi, phih; r1, w1, mu1)            = (g1, w1)
    (f_n(u)/eps, w2) + eps A(q, u, uh; r2, w2, mu2) - (phi, w2)    = (g2, w2)

by Newton's method on the statically condensed trace system, with
f_n(u) = u^3 - u (fully implicit) or u^3 - u_prev (convex splitting).
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from .assembly import (SingularLocalBlock, SingularTraceSystem, assemble_global,
                       assemble_local_A, condense, reconstruct, solve_trace)
from .space import HDGSpace

log = logging.getLogger(__name__)

STEP_RESTRICTION = ("the fully implicit scheme is only guaranteed to be uniquely solvable "
                    "for dt <= C eps^3; try a smaller time step or the convex-splitting scheme")


class Scheme(str, Enum):
    FULLY_IMPLICIT = "fi"
    CONVEX_SPLITTING = "cs"

    @classmethod
    def parse(cls, value) -> "Scheme":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"fi": cls.FULLY_IMPLICIT, "fully_implicit": cls.FULLY_IMPLICIT,
                   "be": cls.FULLY_IMPLICIT, "backward_euler": cls.FULLY_IMPLICIT,
                   "cs": cls.CONVEX_SPLITTING, "convex_splitting": cls.CONVEX_SPLITTING,
                   "energy_splitting": cls.CONVEX_SPLITTING}
        if key not in aliases:
            raise ValueError(f"unknown scheme {value!r}; expected one of fi, cs")
        return aliases[key]


class SolverError(RuntimeError):
    """Newton failure, blow-up or a singular linear system during a step."""

    def __init__(self, msg, step=None, residual=None):
        self.step = step
        self.residual = residual
        super().__init__(msg)


@dataclass(frozen=True)
class SchemeConfig:
    scheme: Scheme = Scheme.CONVEX_SPLITTING
    eps: float = 1.0
    dt: float = 0.01
    T: float = 1.0
    newton_atol: float = 1e-10
    newton_rtol: float = 0.0
    newton_maxit: int = 30
    quad_bump: int = 0

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme.parse(self.scheme))
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")
        if not (self.newton_atol > 0 and self.newton_rtol >= 0 and self.newton_maxit >= 1):
            raise ValueError("Newton tolerances must be positive and maxit >= 1")
        if abs(self.N * self.dt - self.T) > 1e-12 * max(1.0, self.T):
            raise ValueError(f"T={self.T} is not an integer multiple of dt={self.dt}")

    @property
    def N(self) -> int:
        return int(round(self.T / self.dt))


Source = Callable[[np.ndarray, np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class SourcePair:
    """Forcing g1 (mass equation) and g2 (chemical potential equation)."""

    g1: Optional[Source] = None
    g2: Optional[Source] = None


@dataclass(frozen=True)
class State:
    n: int
    t: float
    p: np.ndarray      # (E, nv)
    phi: np.ndarray    # (E, nw)
    q: np.ndarray      # (E, nv)
    u: np.ndarray      # (E, nw)
    phihat: np.ndarray  # (nf * nm,)
    uhat: np.ndarray    # (nf * nm,)
    newton_iters: int = 0
    residuals: tuple = ()


class CahnHilliardHDG:
    """Discrete Cahn-Hilliard operator on a fixed mesh and order.

    Element unknowns are ordered ``[p, phi, q, u | phih (3 faces), uh (3 faces)]``.
    """

    def __init__(self, space: HDGSpace, cfg: SchemeConfig):
        self.space = space
        self.cfg = cfg
        self.blocks = assemble_local_A(space)
        nv, nw, nm = space.nv, space.nw, space.nm
        self.n1 = nv + nw                   # interior size of one field
        self.ni = 2 * self.n1
        self.nt = 6 * nm
        ni = self.ni
        self.iV1 = np.arange(nv)
        self.iW1 = nv + np.arange(nw)
        self.iV2 = self.n1 + np.arange(nv)
        self.iW2 = self.n1 + nv + np.arange(nw)
        self.iM1 = ni + np.arange(3 * nm)
        self.iM2 = ni + 3 * nm + np.arange(3 * nm)
        self.l2g = np.concatenate([space.trace_l2g, space.trace_l2g + space.n_trace], axis=1)
        self.n_global = 2 * space.n_trace
        self.K = self._linear_matrix()
        quad = space.quad_cubic
        self._cubic_phi = quad.phi
        self._cubic_w = quad.w
        nw = space.nw
        self._cubic_outer = np.einsum("qi,qj->qij", quad.phi, quad.phi).reshape(-1, nw * nw)

    # ------------------------------------------------------------------
    def _linear_matrix(self):
        cfg, bl = self.cfg, self.blocks
        n = self.ni + self.nt
        K = np.zeros((self.space.ne, n, n))
        f1 = np.concatenate([self.iV1, self.iW1, self.iM1])
        f2 = np.concatenate([self.iV2, self.iW2, self.iM2])
        K[:, f1[:, None], f1[None, :]] += bl.A
        K[:, f2[:, None], f2[None, :]] += cfg.eps * bl.A
        K[:, self.iW1[:, None], self.iW2[None, :]] += bl.Mw / cfg.dt
        K[:, self.iW2[:, None], self.iW1[None, :]] -= bl.Mw
        return K

    def pack(self, state: State):
        xi = np.concatenate([state.p, state.phi, state.q, state.u], axis=1)
        xt = np.concatenate([state.phihat, state.uhat])
        return xi, xt

    def unpack(self, xi, xt, n, t, **kw) -> State:
        sp = self.space
        nv, nw = sp.nv, sp.nw
        o = np.cumsum([0, nv, nw, nv, nw])
        return State(n=n, t=t, p=xi[:, o[0]:o[1]].copy(), phi=xi[:, o[1]:o[2]].copy(),
                     q=xi[:, o[2]:o[3]].copy(), u=xi[:, o[3]:o[4]].copy(),
                     phihat=xt[:sp.n_trace].copy(), uhat=xt[sp.n_trace:].copy(), **kw)

    def zero_state(self) -> State:
        sp = self.space
        z = np.zeros
        return State(0, 0.0, z((sp.ne, sp.nv)), z((sp.ne, sp.nw)), z((sp.ne, sp.nv)),
                     z((sp.ne, sp.nw)), z(sp.n_trace), z(sp.n_trace))

    def source_vectors(self, sources: SourcePair, t: float):
        """(g1(t), w) and (g2(t), w) per element, each (E, nw)."""
        quad = self.space.quad_error
        out = []
        for g in (sources.g1, sources.g2):
            if g is None:
                out.append(np.zeros((self.space.ne, self.space.nw)))
                continue
            vals = np.broadcast_to(np.asarray(g(quad.xy[..., 0], quad.xy[..., 1], t), float),
                                   quad.w.shape)
            out.append((quad.w * vals) @ quad.phi)
        return out

    def _nonlinear(self, u, u_prev):
        """eps^{-1}(f_n(u), w) and its Jacobian eps^{-1}(f_n'(u) v, w)."""
        cfg = self.cfg
        Phi, w = self._cubic_phi, self._cubic_w
        U = u @ Phi.T
        if cfg.scheme is Scheme.FULLY_IMPLICIT:
            f = U ** 3 - U
            df = 3.0 * U ** 2 - 1.0
        else:
            f = U ** 3 - u_prev @ Phi.T
            df = 3.0 * U ** 2
        F = (w * f) @ Phi / cfg.eps
        J = ((w * df) @ self._cubic_outer).reshape(-1, Phi.shape[1], Phi.shape[1]) / cfg.eps
        return F, J

    def rhs_vector(self, prev: State, G1, G2):
        b = np.zeros((self.space.ne, self.ni + self.nt))
        b[:, self.iW1] = G1 + np.einsum("eij,ej->ei", self.blocks.Mw, prev.u) / self.cfg.dt
        b[:, self.iW2] = G2
        return b

    def residual_and_jacobian(self, xi, xt, prev: State, G1, G2):
        """Element residual vectors (E, ni + nt) and nonlinear Jacobian
        additions (E, nw, nw) acting on the u/w2 block.

        The global residual is the interior part plus the trace part summed
        into global trace rows (see :meth:`global_residual`).
        """
        x = np.concatenate([xi, xt[self.l2g]], axis=1)
        u = xi[:, self.iW2]
        F, J = self._nonlinear(u, prev.u)
        r = (self.K @ x[..., None])[..., 0] - self.rhs_vector(prev, G1, G2)
        r[:, self.iW2] += F
        if not np.all(np.isfinite(r)):
            raise SolverError("non-finite residual: the iteration diverged")
        return r, J

    def global_residual(self, r):
        ri = r[:, :self.ni]
        rt = np.bincount(self.l2g.ravel(), weights=r[:, self.ni:].ravel(),
                         minlength=self.n_global)
        return ri, rt

    def full_jacobian(self, J):
        """Element Jacobians including the nonlinear block, (E, n, n)."""
        K = self.K.copy()
        K[:, self.iW2[:, None], self.iW2[None, :]] += J
        return K

    # ------------------------------------------------------------------
    def step(self, prev: State, sources: SourcePair = SourcePair(), step_index=None) -> State:
        cfg = self.cfg
        t = prev.t + cfg.dt
        n = prev.n + 1
        G1, G2 = self.source_vectors(sources, t)
        xi, xt = self.pack(prev)
        hist = []
        hint = f"; {STEP_RESTRICTION}" if cfg.scheme is Scheme.FULLY_IMPLICIT else ""
        norm0 = None
        for it in range(cfg.newton_maxit + 1):
            r, J = self.residual_and_jacobian(xi, xt, prev, G1, G2)
            ri, rt = self.global_residual(r)
            rn = float(np.sqrt(np.sum(ri ** 2) + np.sum(rt ** 2)))
            hist.append(rn)
            if norm0 is None:
                norm0 = rn
            if rn <= max(cfg.newton_atol, cfg.newton_rtol * norm0):
                return self.unpack(xi, xt, n, t, newton_iters=it, residuals=tuple(hist))
            if it == cfg.newton_maxit:
                break
            try:
                dxi, dxt = self._newton_update(r, J)
            except (SingularLocalBlock, SingularTraceSystem) as exc:
                raise SolverError(f"step {n}: {exc}{hint}", step=n, residual=rn) from None
            xi = xi + dxi
            xt = xt + dxt
        raise SolverError(f"step {n}: Newton did not converge in {cfg.newton_maxit} iterations "
                          f"(last residual {hist[-1]:.3e}){hint}", step=n, residual=hist[-1])

    def _newton_update(self, r, J):
        Jfull = self.full_jacobian(J)
        cond = condense(Jfull, -r, self.ni)
        sys = assemble_global(self.l2g, cond.S, cond.g, self.n_global)
        dxt = solve_trace(sys)
        dxi = reconstruct(cond, dxt[self.l2g])
        return dxi, dxt

    def solve_linear_monolithic(self, r, J):
        """Dense solve of the uncondensed Newton system (small meshes only)."""
        Jfull = self.full_jacobian(J)
        ne, ni = self.space.ne, self.ni
        n = ne * ni + self.n_global
        Ad = np.zeros((n, n))
        b = np.zeros(n)
        gidx = np.concatenate([(np.arange(ne) * ni)[:, None] + np.arange(ni)[None, :],
                               ne * ni + self.l2g], axis=1)
        for e in range(ne):
            Ad[np.ix_(gidx[e], gidx[e])] += Jfull[e]
            b[gidx[e]] += -r[e]
        x = np.linalg.solve(Ad, b)
        return x[:ne * ni].reshape(ne, ni), x[ne * ni:]

    # ------------------------------------------------------------------
    def run(self, initial: State, sources: SourcePair = SourcePair(),
            observers: Sequence[Callable[[State], None]] = (), progress=None):
        """Advance N = T/dt steps; returns (final state, per-step records)."""
        state = initial
        records = []
        for obs in observers:
            obs(state)
        for i in range(self.cfg.N):
            t0 = time.perf_counter()
            try:
                state = self.step(state, sources)
            except SolverError as exc:
                if exc.step is None:
                    exc.step = i + 1
                raise
            records.append({"n": state.n, "t": state.t, "newton_iters": state.newton_iters,
                            "residual": state.residuals[-1],
                            "seconds": time.perf_counter() - t0})
            for obs in observers:
                obs(state)
            if progress is not None:
                progress(state)
        return state, records


def initial_state(problem: CahnHilliardHDG, u0, t0: float = 0.0) -> State:
    """L2 projection of ``u0(x, y)`` (or W_h coefficients, used as given)
    with auxiliary fields from the local problem.

    ``q`` and ``uh`` solve A(q, u, uh; r, 0, mu) = 0, the relation every
    later time level satisfies, so the discrete energy of step 0 is the one
    the energy law refers to.  ``p``, ``phi`` and ``phih`` start at zero;
    they are never read by the scheme.
    """
    from .diagnostics import laplacian_aux

    sp = problem.space
    u = np.array(u0, dtype=float) if isinstance(u0, np.ndarray) else sp.project_scalar(u0)
    if u.shape != (sp.ne, sp.nw):
        raise ValueError(f"initial coefficients must have shape {(sp.ne, sp.nw)}, got {u.shape}")
    q, uh, _ = laplacian_aux(sp, problem.blocks, u)
    z = problem.zero_state()
    return replace(z, t=t0, u=u, q=q, uhat=uh)
