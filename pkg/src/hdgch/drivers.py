"""Experiment drivers behind the command-line subcommands."""
from __future__ import annotations

import logging
import math
from pathlib import Path

import numpy as np

from . import io, verification
from .config import RunConfig
from .diagnostics import mass, state_energy
from .mesh import build_uniform_mesh
from .solver import CahnHilliardHDG, Scheme, SchemeConfig, SourcePair, initial_state
from .space import HDGSpace

log = logging.getLogger(__name__)


def scheme_config(cfg: RunConfig, dt: float) -> SchemeConfig:
    return SchemeConfig(scheme=cfg.scheme, eps=cfg.eps, dt=dt, T=cfg.T,
                        newton_atol=cfg.newton_atol, newton_maxit=cfg.newton_maxit,
                        quad_bump=cfg.quad_bump)


def warn_step_restriction(cfg: RunConfig, dt: float) -> None:
    if cfg.scheme is Scheme.FULLY_IMPLICIT and dt > cfg.eps ** 3:
        log.warning("fully implicit scheme with dt=%g > eps^3=%g: unique solvability is only "
                    "guaranteed for dt <= C eps^3 (C unknown)", dt, cfg.eps ** 3)


class DiagnosticsObserver:
    """Writes mass/energy per accepted step and tracks the mass balance.

    ``source_mass(t)`` returns (g1(t), 1); the expected mass at step n is
    the initial mass plus dt times the accumulated source mass.
    """

    def __init__(self, problem: CahnHilliardHDG, writer=None, source_mass=None):
        self.problem = problem
        self.writer = writer
        self.source_mass = source_mass
        self.mass0 = None
        self.expected = None
        self.max_drift = 0.0
        self.energies = []

    def __call__(self, state):
        sp, cfg = self.problem.space, self.problem.cfg
        m = mass(sp, state.u)
        if self.mass0 is None:
            self.mass0 = self.expected = m
        elif self.source_mass is not None:
            self.expected += cfg.dt * self.source_mass(state.t)
        self.max_drift = max(self.max_drift, abs(m - self.expected))
        e = state_energy(sp, state, cfg.eps)
        self.energies.append(e.total)
        if self.writer is not None:
            self.writer.write(state.n, state.t, m, e, state.newton_iters)


def source_mass_fn(problem: CahnHilliardHDG, sources: SourcePair):
    if sources.g1 is None:
        return None
    return lambda t: float(np.sum(_source_integral(problem, sources.g1, t)))


def _source_integral(problem, g, t):
    quad = problem.space.quad_error
    vals = np.broadcast_to(np.asarray(g(quad.xy[..., 0], quad.xy[..., 1], t), float), quad.w.shape)
    return np.sum(quad.w * vals, axis=1)


def spinodal_initial(space: HDGSpace, seed: int, amplitude: float = 0.05) -> np.ndarray:
    """Element-wise uniform random values in [-amplitude, amplitude], mean removed."""
    rng = np.random.default_rng(seed)
    c = rng.uniform(-amplitude, amplitude, size=space.ne)
    c -= np.sum(c * space.area) / np.sum(space.area)
    ref_mass = space.scalar_mass() / np.abs(space.detB)[:, None]
    return c[:, None] * ref_mass


def run_spinodal(cfg: RunConfig, out=None) -> dict:
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    dt = cfg.dt if cfg.dt is not None else verification.dt_for_level(cfg.n, cfg.k, cfg.dt_rule)
    warn_step_restriction(cfg, dt)
    space = HDGSpace(build_uniform_mesh(cfg.n), cfg.k, cfg.quad_bump)
    problem = CahnHilliardHDG(space, scheme_config(cfg, dt))
    init = initial_state(problem, spinodal_initial(space, cfg.seed))

    io.write_manifest(cfg, out / "manifest.txt", {"dt": repr(dt), "n_elements": space.ne,
                                                  "n_trace_unknowns": problem.n_global})
    snaps = []

    def snapshot(state):
        if cfg.snapshot_every and state.n % cfg.snapshot_every == 0:
            snaps.append(io.emit_fields_vtk(space, state, out / f"u_{state.n:06d}.vtk"))

    with io.DiagnosticsWriter(out / "diagnostics.csv") as writer:
        obs = DiagnosticsObserver(problem, writer)
        final, records = problem.run(init, SourcePair(), observers=[obs, snapshot])
    vtk = io.emit_fields_vtk(space, final, out / "final.vtk")
    summary = {"steps": len(records), "max_mass_drift": obs.max_drift,
               "energy_increase": float(np.max(np.diff(obs.energies), initial=-np.inf)),
               "snapshots": [str(s) for s in snaps], "final_vtk": str(vtk)}
    if cfg.plots:
        from . import plotting
        diag = io.read_diagnostics_csv(out / "diagnostics.csv")
        summary["figures"] = [str(plotting.plot_diagnostics(diag, out / "diagnostics.png")),
                              str(plotting.plot_field(space, final.u, out / "final_u.png",
                                                      f"u at t={final.t:.4g}"))]
    return summary


def run_convergence_study(cfg: RunConfig, out=None) -> tuple[list, dict]:
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_manifest(cfg, out / "manifest.txt")
    rows = verification.run_convergence(
        cfg.k, cfg.scheme, cfg.levels, dt_rule=cfg.dt_rule or "h^{k+1}", dt=cfg.dt, T=cfg.T,
        eps=cfg.eps, time_consistent=cfg.sources == "consistent",
        newton_atol=cfg.newton_atol, newton_maxit=cfg.newton_maxit)
    path = io.emit_convergence_csv(rows, out / "convergence.csv")
    files = {"csv": str(path)}
    if cfg.plots:
        from . import plotting
        files["figure"] = str(plotting.plot_convergence(
            rows, out / "convergence.png", cfg.k, f"k={cfg.k}, scheme={cfg.scheme.value}"))
    return rows, files


def run_single(cfg: RunConfig, out=None) -> dict:
    """Manufactured problem on one mesh level with full diagnostics."""
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    n = cfg.n
    dt = verification.dt_for_level(n, cfg.k, cfg.dt_rule or "h^{k+1}", cfg.dt)
    warn_step_restriction(cfg, dt)
    exact = verification.example1()
    space = HDGSpace(build_uniform_mesh(n), cfg.k, cfg.quad_bump)
    problem = CahnHilliardHDG(space, scheme_config(cfg, dt))
    sources = verification.manufactured_sources(
        exact, cfg.eps, cfg.scheme, dt if cfg.sources == "consistent" else None)
    init = initial_state(problem, lambda x, y: exact.u(x, y, 0.0))
    io.write_manifest(cfg, out / "manifest.txt", {"dt": repr(dt)})
    with io.DiagnosticsWriter(out / "diagnostics.csv") as writer:
        obs = DiagnosticsObserver(problem, writer, source_mass_fn(problem, sources))
        final, records = problem.run(init, sources, observers=[obs])
    errs = verification.field_errors(space, final, exact, final.t)
    row = verification.ConvergenceRow(level=n, h=math.sqrt(2.0) / n, errors=errs, dt=dt,
                                      steps=len(records), max_mass_drift=obs.max_drift)
    io.emit_convergence_csv([row], out / "errors.csv")
    io.emit_fields_vtk(space, final, out / "final.vtk")
    summary = {"errors": errs, "steps": len(records), "max_mass_balance_error": obs.max_drift}
    if cfg.plots:
        from . import plotting
        diag = io.read_diagnostics_csv(out / "diagnostics.csv")
        summary["figures"] = [str(plotting.plot_diagnostics(diag, out / "diagnostics.png")),
                              str(plotting.plot_field(space, final.u, out / "final_u.png"))]
    return summary
