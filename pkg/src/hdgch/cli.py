"""Command-line entry point: ``hdgch {convergence,spinodal,single} [flags]``.

Flags mirror the ``key=value`` configuration keys; a config file given with
``--config`` is read first and flags override it.

Exit codes: 0 success, 2 configuration error, 3 solver failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .assembly import SingularLocalBlock, SingularTraceSystem
from .config import ConfigError, parse_config
from .solver import SolverError

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3

log = logging.getLogger("hdgch")

# flag name -> config key; values are passed through as strings and parsed
# by the config layer so both routes share one set of checks
FLAGS = {
    "k": "k", "scheme": "scheme", "eps": "eps", "T": "T", "dt": "dt", "dt_rule": "dt_rule",
    "levels": "levels", "newton_atol": "newton_atol", "newton_maxit": "newton_maxit",
    "quad_bump": "quad_bump", "out": "out", "seed": "seed",
    "snapshot_every": "snapshot_every", "sources": "sources",
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hdgch", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"hdgch {__version__}")
    sub = p.add_subparsers(dest="mode", required=True)
    helps = {
        "convergence": "manufactured-solution convergence table over mesh levels",
        "spinodal": "spinodal decomposition from random data (energy/mass diagnostics)",
        "single": "manufactured problem on one level with per-step diagnostics",
    }
    for mode, text in helps.items():
        s = sub.add_parser(mode, help=text, description=text)
        s.add_argument("--config", type=Path, help="key=value configuration file")
        s.add_argument("-k", "--k", dest="k", help="polynomial degree (0, 1 or 2)")
        s.add_argument("--scheme", help="fi (fully implicit) or cs (convex splitting)")
        s.add_argument("--eps", help="interface parameter epsilon")
        s.add_argument("-T", "--T", dest="T", help="final time")
        s.add_argument("--dt", help="explicit time step (excludes --dt-rule)")
        s.add_argument("--dt-rule", dest="dt_rule", help="h^{k+1}, h^{k+3}, h or h^2")
        s.add_argument("--levels", "-n", help="comma-separated mesh subdivisions, e.g. 4,8,16")
        s.add_argument("--newton-atol", dest="newton_atol")
        s.add_argument("--newton-maxit", dest="newton_maxit")
        s.add_argument("--quad-bump", dest="quad_bump", help="extra degree for the cubic term")
        s.add_argument("-o", "--out", help="output directory")
        s.add_argument("--seed", help="random seed (spinodal)")
        s.add_argument("--snapshot-every", dest="snapshot_every", help="VTK snapshot interval")
        s.add_argument("--sources", help="consistent (default) or continuous forcing")
        s.add_argument("--no-plots", action="store_true", help="skip PNG figures")
        s.add_argument("-v", "--verbose", action="count", default=0)
    return p


def config_from_args(args):
    text = args.config.read_text() if args.config else ""
    overrides = {key: getattr(args, flag) for flag, key in FLAGS.items()}
    overrides["mode"] = args.mode
    if args.no_plots:
        overrides["plots"] = "false"
    if overrides.get("dt") is not None and overrides.get("dt_rule") is None:
        # an explicit step on the command line replaces a rule from the file
        text += "\ndt_rule=none"
    elif overrides.get("dt_rule") is not None and overrides.get("dt") is None:
        text += "\ndt=none"
    return parse_config(text, overrides)


def _report_convergence(rows, files):
    from .io import fmt_order, fmt_sci
    from .verification import FIELDS

    print("level        h  " + "  ".join(f"{'err_' + f:>10} {'ord':>6}" for f in FIELDS))
    for r in rows:
        cells = [f"{fmt_sci(r.errors[f]):>10} {fmt_order(r.orders[f]) if f in r.orders else '-':>6}"
                 for f in FIELDS]
        print(f"{r.level:5d} {fmt_sci(r.h)}  " + "  ".join(cells))
    print(f"max mass balance error: {max(r.max_mass_drift for r in rows):.3e}")
    for kind, path in files.items():
        print(f"{kind}: {path}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    from . import drivers

    try:
        if cfg.mode == "convergence":
            rows, files = drivers.run_convergence_study(cfg)
            _report_convergence(rows, files)
        elif cfg.mode == "spinodal":
            summary = drivers.run_spinodal(cfg)
            print(f"steps: {summary['steps']}")
            print(f"max mass drift: {summary['max_mass_drift']:.3e}")
            print(f"max energy increase: {summary['energy_increase']:.3e}")
            for f in summary.get("figures", []):
                print(f"figure: {f}")
        else:
            summary = drivers.run_single(cfg)
            for f, e in summary["errors"].items():
                print(f"err_{f}: {e:.4E}")
            print(f"steps: {summary['steps']}")
            print(f"max mass balance error: {summary['max_mass_balance_error']:.3e}")
    except (SolverError, SingularLocalBlock, SingularTraceSystem) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    print(f"output: {Path(cfg.out).resolve()}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
