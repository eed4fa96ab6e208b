"""CSV, VTK and manifest writers."""
from __future__ import annotations

import csv
import hashlib
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .verification import FIELDS, ConvergenceRow

CONVERGENCE_HEADER = ["level", "h"] + [c for f in FIELDS for c in (f"err_{f}", f"ord_{f}")]
DIAGNOSTICS_HEADER = ["n", "t", "mass", "E_total", "E_chem", "E_grad", "E_stab", "newton_iters"]


def fmt_sci(x: float) -> str:
    """Five significant digits, e.g. 1.0501E-06."""
    return f"{x:.4E}"


def fmt_order(x: float) -> str:
    return f"{x:#.5g}"


def emit_convergence_csv(rows: Sequence[ConvergenceRow], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CONVERGENCE_HEADER)
        for row in rows:
            out = [str(row.level), fmt_sci(row.h)]
            for f in FIELDS:
                out.append(fmt_sci(row.errors[f]))
                out.append(fmt_order(row.orders[f]) if f in row.orders else "-")
            w.writerow(out)
    return path


def read_convergence_csv(path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append({k: (None if v == "-" else (int(v) if k == "level" else float(v)))
                         for k, v in rec.items()})
    return rows


def _g(x) -> str:
    return repr(float(x))


class DiagnosticsWriter:
    """Streams per-step diagnostics rows; values written at full precision."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", newline="")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(DIAGNOSTICS_HEADER)

    def write(self, n, t, mass, energy, newton_iters):
        self._w.writerow([str(n), _g(t), _g(mass), _g(energy.total), _g(energy.chemical),
                          _g(energy.gradient), _g(energy.stabilization), str(newton_iters)])
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_diagnostics_csv(path) -> dict:
    with open(path, newline="") as fh:
        recs = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in recs]) for k in DIAGNOSTICS_HEADER}


def vertex_values(space, coef) -> np.ndarray:
    """Element polynomials evaluated at vertices, averaged over incident elements."""
    mesh = space.mesh
    vals = space.eval_scalar(coef, np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
    acc = np.bincount(mesh.elements.ravel(), weights=vals.ravel(), minlength=mesh.n_vertices)
    cnt = np.bincount(mesh.elements.ravel(), minlength=mesh.n_vertices)
    return acc / np.maximum(cnt, 1)


def element_means(space, coef) -> np.ndarray:
    return (space.scalar_mass() * coef).sum(axis=1) / space.area


def emit_fields_vtk(space, state, path, title="hdgch fields") -> Path:
    """Legacy ASCII unstructured grid of triangles."""
    mesh = space.mesh
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["# vtk DataFile Version 3.0", title[:255], "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {mesh.n_vertices} double"]
    lines += [f"{_g(x)} {_g(y)} 0.0" for x, y in mesh.vertices]
    ne = mesh.n_elements
    lines.append(f"CELLS {ne} {4 * ne}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.elements]
    lines.append(f"CELL_TYPES {ne}")
    lines += ["5"] * ne
    lines.append(f"CELL_DATA {ne}")
    for name, coef in (("u_mean", state.u), ("phi_mean", state.phi)):
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [_g(v) for v in element_means(space, coef)]
    lines.append(f"POINT_DATA {mesh.n_vertices}")
    lines += ["SCALARS u double 1", "LOOKUP_TABLE default"]
    lines += [_g(v) for v in vertex_values(space, state.u)]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_vtk(path) -> dict:
    """Minimal reader for the files written above (structure check and tests)."""
    tokens = Path(path).read_text().split("\n")
    if not tokens[0].startswith("# vtk DataFile"):
        raise ValueError("not a legacy VTK file")
    if tokens[2].strip() != "ASCII" or tokens[3].strip() != "DATASET UNSTRUCTURED_GRID":
        raise ValueError("expected ASCII unstructured grid")
    out = {"cell_data": {}, "point_data": {}}
    i = 4
    section = None
    while i < len(tokens):
        line = tokens[i].strip()
        if not line:
            i += 1
            continue
        head = line.split()
        if head[0] == "POINTS":
            n = int(head[1])
            out["points"] = np.array([[float(v) for v in tokens[i + 1 + j].split()] for j in range(n)])
            i += 1 + n
        elif head[0] == "CELLS":
            n = int(head[1])
            cells = [[int(v) for v in tokens[i + 1 + j].split()] for j in range(n)]
            if any(c[0] != 3 or len(c) != 4 for c in cells):
                raise ValueError("non-triangle cell")
            if sum(len(c) for c in cells) != int(head[2]):
                raise ValueError("CELLS size mismatch")
            out["cells"] = np.array([c[1:] for c in cells])
            i += 1 + n
        elif head[0] == "CELL_TYPES":
            n = int(head[1])
            out["cell_types"] = np.array([int(tokens[i + 1 + j]) for j in range(n)])
            i += 1 + n
        elif head[0] in ("CELL_DATA", "POINT_DATA"):
            section = ("cell_data" if head[0] == "CELL_DATA" else "point_data", int(head[1]))
            i += 1
        elif head[0] == "SCALARS":
            kind, n = section
            out[kind][head[1]] = np.array([float(tokens[i + 2 + j]) for j in range(n)])
            i += 2 + n
        else:
            raise ValueError(f"unexpected line {line!r}")
    return out


def write_manifest(cfg, path, extra: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = f"version={__version__}\n" + cfg.as_text()
    for k, v in (extra or {}).items():
        text += f"{k}={v}\n"
    path.write_text(text)
    return path


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
