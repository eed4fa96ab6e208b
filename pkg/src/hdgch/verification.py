"""Manufactured solutions, L2 errors and observed convergence orders."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .mesh import build_uniform_mesh
from .solver import (CahnHilliardHDG, Scheme, SchemeConfig, SolverError, SourcePair, State,
                     initial_state)
from .space import HDGSpace

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExactSolution:
    """Closed-form (u, phi) with the derivatives the forcing needs.

    All callables take ``(x, y, t)`` and broadcast over arrays; gradients
    return a trailing axis of length 2.
    """

    u: Callable
    phi: Callable
    grad_u: Callable
    grad_phi: Callable
    lap_u: Callable
    lap_phi: Callable
    u_t: Callable

    def q(self, x, y, t):
        return -self.grad_u(x, y, t)

    def p(self, x, y, t):
        return -self.grad_phi(x, y, t)


def example1() -> ExactSolution:
    """u = phi = exp(-t) x^2 y^2 (1-x)^2 (1-y)^2 on the unit square."""
    s = lambda z: z ** 2 * (1 - z) ** 2
    ds = lambda z: 2 * z * (1 - z) * (1 - 2 * z)
    dds = lambda z: 2 - 12 * z + 12 * z ** 2

    def u(x, y, t):
        return np.exp(-t) * s(x) * s(y)

    def grad(x, y, t):
        e = np.exp(-t)
        return np.stack(np.broadcast_arrays(e * ds(x) * s(y), e * s(x) * ds(y)), axis=-1)

    def lap(x, y, t):
        return np.exp(-t) * (dds(x) * s(y) + s(x) * dds(y))

    def u_t(x, y, t):
        return -u(x, y, t)

    return ExactSolution(u=u, phi=u, grad_u=grad, grad_phi=grad, lap_u=lap, lap_phi=lap, u_t=u_t)


def constant_solution(c: float) -> ExactSolution:
    zero = lambda x, y, t: np.zeros(np.broadcast(x, y).shape)
    const = lambda x, y, t: np.full(np.broadcast(x, y).shape, float(c))
    zgrad = lambda x, y, t: np.zeros(np.broadcast(x, y).shape + (2,))
    return ExactSolution(u=const, phi=const, grad_u=zgrad, grad_phi=zgrad,
                         lap_u=zero, lap_phi=zero, u_t=zero)


def f_cubic(u):
    return u ** 3 - u


def manufactured_sources(exact: ExactSolution, eps: float, scheme=None, dt=None) -> SourcePair:
    """Forcing that makes ``exact`` solve the forced Cahn-Hilliard system.

    g1 = u_t - lap(phi),  g2 = -eps lap(u) + f(u)/eps - phi.

    With ``dt`` given, the time derivative is replaced by the backward
    difference (u(t) - u(t - dt)) / dt and, for the convex-splitting scheme,
    f(u) by u(t)^3 - u(t - dt).  The exact solution then also solves the
    semi-discrete-in-time problem and only the spatial error remains.
    """
    if dt is None:
        def g1(x, y, t):
            return exact.u_t(x, y, t) - exact.lap_phi(x, y, t)

        def g2(x, y, t):
            return -eps * exact.lap_u(x, y, t) + f_cubic(exact.u(x, y, t)) / eps - exact.phi(x, y, t)

        return SourcePair(g1, g2)

    scheme = Scheme.parse(scheme if scheme is not None else Scheme.FULLY_IMPLICIT)

    def g1d(x, y, t):
        return (exact.u(x, y, t) - exact.u(x, y, t - dt)) / dt - exact.lap_phi(x, y, t)

    def g2d(x, y, t):
        un = exact.u(x, y, t)
        lagged = un if scheme is Scheme.FULLY_IMPLICIT else exact.u(x, y, t - dt)
        return -eps * exact.lap_u(x, y, t) + (un ** 3 - lagged) / eps - exact.phi(x, y, t)

    return SourcePair(g1d, g2d)


def pde_residuals(exact: ExactSolution, sources: SourcePair, eps: float, x, y, t):
    """Pointwise residuals of the forced equations at the exact solution."""
    r1 = exact.u_t(x, y, t) - exact.lap_phi(x, y, t) - sources.g1(x, y, t)
    r2 = (-eps * exact.lap_u(x, y, t) + f_cubic(exact.u(x, y, t)) / eps
          - exact.phi(x, y, t) - sources.g2(x, y, t))
    return r1, r2


# ----------------------------------------------------------------------


def l2_error(space: HDGSpace, coef, exact_fn, t=None, vector=False) -> float:
    """|| exact - field ||_{L2} with the high-order error quadrature."""
    quad = space.quad_error
    xy = quad.xy
    ex = np.asarray(exact_fn(xy[..., 0], xy[..., 1]) if t is None
                    else exact_fn(xy[..., 0], xy[..., 1], t), dtype=float)
    if vector:
        vals = space.eval_vector(coef, quad.xhat)
        ex = np.broadcast_to(ex, vals.shape)
        d2 = np.sum((ex - vals) ** 2, axis=-1)
    else:
        vals = space.eval_scalar(coef, quad.xhat)
        d2 = (np.broadcast_to(ex, vals.shape) - vals) ** 2
    return float(np.sqrt(np.sum(quad.w * d2)))


def eoc(errors: Sequence[float], hs: Sequence[float]) -> list[float]:
    """Observed orders log(e_i/e_{i+1}) / log(h_i/h_{i+1})."""
    errors = np.asarray(errors, dtype=float)
    hs = np.asarray(hs, dtype=float)
    if len(errors) != len(hs):
        raise ValueError("errors and hs must have equal length")
    if np.any(errors <= 0):
        raise ValueError("errors must be positive (a zero error means exact reproduction)")
    if np.any(np.diff(hs) >= 0) or np.any(hs <= 0):
        raise ValueError("mesh sizes must be positive and strictly decreasing")
    return list(np.log(errors[:-1] / errors[1:]) / np.log(hs[:-1] / hs[1:]))


FIELDS = ("q", "p", "u", "phi")


@dataclass
class ConvergenceRow:
    level: int
    h: float
    errors: dict
    orders: dict = field(default_factory=dict)
    dt: float = float("nan")
    steps: int = 0
    seconds: float = 0.0
    max_mass_drift: float = 0.0


def dt_for_level(n: int, k: int, rule: str = "h^{k+1}", dt: float | None = None) -> float:
    """Time step for level ``n`` (mesh spacing 1/n, element diameter sqrt(2)/n)."""
    if dt is not None:
        return float(dt)
    rule = rule.replace(" ", "")
    if rule in ("h^{k+1}", "h^(k+1)", "h^k+1"):
        return (1.0 / n) ** (k + 1)
    if rule in ("h^{k+3}", "h^(k+3)"):
        return (1.0 / n) ** (k + 3)
    if rule in ("h", "h^1"):
        return 1.0 / n
    if rule in ("h^2", "h^{2}"):
        return (1.0 / n) ** 2
    raise ValueError(f"unknown dt rule {rule!r}")


@dataclass
class ExampleRun:
    problem: CahnHilliardHDG
    initial: State
    final: State
    records: list
    max_mass_balance_error: float


def solve_example(n: int, k: int, scheme, dt: float, T: float = 1.0, eps: float = 1.0,
                  exact: ExactSolution | None = None, time_consistent: bool = True,
                  newton_atol: float = 1e-10, newton_maxit: int = 30,
                  observers=()) -> ExampleRun:
    """Run the manufactured problem on an n x n mesh.

    The discrete mass must follow (u^n, 1) = (u^{n-1}, 1) + dt (g1(t_n), 1);
    the largest deviation from that balance is returned with the run.
    """
    from .diagnostics import mass

    exact = exact or example1()
    cfg = SchemeConfig(scheme=scheme, eps=eps, dt=dt, T=T, newton_atol=newton_atol,
                       newton_maxit=newton_maxit)
    space = HDGSpace(build_uniform_mesh(n), k)
    problem = CahnHilliardHDG(space, cfg)
    sources = manufactured_sources(exact, eps, cfg.scheme, dt if time_consistent else None)
    init = initial_state(problem, lambda x, y: exact.u(x, y, 0.0))
    quad = space.quad_error
    balance = {"expected": mass(space, init.u), "worst": 0.0}

    def track(state):
        if state.n > 0:
            g = sources.g1(quad.xy[..., 0], quad.xy[..., 1], state.t)
            balance["expected"] += dt * float(np.sum(quad.w * g))
        balance["worst"] = max(balance["worst"], abs(mass(space, state.u) - balance["expected"]))

    final, records = problem.run(init, sources, observers=[track, *observers])
    return ExampleRun(problem, init, final, records, balance["worst"])


def field_errors(space: HDGSpace, state: State, exact: ExactSolution, t: float) -> dict:
    return {
        "q": l2_error(space, state.q, exact.q, t, vector=True),
        "p": l2_error(space, state.p, exact.p, t, vector=True),
        "u": l2_error(space, state.u, exact.u, t),
        "phi": l2_error(space, state.phi, exact.phi, t),
    }


def run_convergence(k: int, scheme, levels: Sequence[int] = (4, 8, 16, 32, 64),
                    dt_rule: str = "h^{k+1}", dt: float | None = None, T: float = 1.0,
                    eps: float = 1.0, time_consistent: bool = True,
                    newton_atol: float = 1e-10, newton_maxit: int = 30,
                    exact: ExactSolution | None = None) -> list[ConvergenceRow]:
    """Errors at time T on each mesh level for a manufactured solution."""
    exact = exact or example1()
    levels = list(levels)
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("levels must be strictly increasing")
    rows = []
    for n in levels:
        step = dt_for_level(n, k, dt_rule, dt)
        t0 = time.perf_counter()
        try:
            run = solve_example(n, k, scheme, step, T, eps, exact, time_consistent,
                                newton_atol, newton_maxit)
        except SolverError as exc:
            raise SolverError(f"level n={n}: {exc}", step=exc.step, residual=exc.residual) from exc
        errs = field_errors(run.problem.space, run.final, exact, run.final.t)
        row = ConvergenceRow(level=n, h=math.sqrt(2.0) / n, errors=errs, dt=step,
                             steps=len(run.records), seconds=time.perf_counter() - t0,
                             max_mass_drift=run.max_mass_balance_error)
        rows.append(row)
        log.info("level %d: %s (%.1fs)", n, {f: f"{e:.4e}" for f, e in errs.items()}, row.seconds)
    for prev, row in zip(rows, rows[1:]):
        for f in FIELDS:
            row.orders[f] = eoc([prev.errors[f], row.errors[f]], [prev.h, row.h])[0]
    return rows
