"""Report figures written next to the CSV output."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import matplotlib.tri as mtri  # noqa: E402
import numpy as np  # noqa: E402

from .verification import FIELDS  # noqa: E402

LABELS = {"q": r"$\|q-q_h\|$", "p": r"$\|p-p_h\|$", "u": r"$\|u-u_h\|$", "phi": r"$\|\phi-\phi_h\|$"}


def plot_convergence(rows, path, k=None, title=None) -> Path:
    h = np.array([r.h for r in rows])
    fig, ax = plt.subplots(figsize=(5.5, 4.2))
    for f, marker in zip(FIELDS, "osD^"):
        ax.loglog(h, [r.errors[f] for r in rows], marker=marker, label=LABELS[f])
    if k is not None and len(h) > 1:
        for order, ls in ((k + 1, ":"), (k + 2, "--")):
            ref = rows[-1].errors["u" if order == k + 2 else "q"] * (h / h[-1]) ** order
            ax.loglog(h, ref, "k" + ls, lw=0.8, label=f"$h^{order}$")
    ax.set_xlabel("h")
    ax.set_ylabel(r"$L^2$ error at final time")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", lw=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_diagnostics(diag: dict, path) -> Path:
    t = diag["t"]
    fig, (a1, a2) = plt.subplots(2, 1, figsize=(5.5, 5.5), sharex=True)
    a1.plot(t, diag["E_total"], "k-", label="total")
    a1.plot(t, diag["E_chem"], label="chemical")
    a1.plot(t, diag["E_grad"], label="gradient")
    a1.plot(t, diag["E_stab"], label="stabilization")
    a1.set_ylabel("discrete energy")
    a1.legend(fontsize=8)
    a2.plot(t, diag["mass"] - diag["mass"][0])
    a2.set_ylabel("mass drift")
    a2.set_xlabel("t")
    for a in (a1, a2):
        a.grid(True, lw=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_field(space, coef, path, title="u") -> Path:
    from .io import vertex_values

    mesh = space.mesh
    tri = mtri.Triangulation(mesh.vertices[:, 0], mesh.vertices[:, 1], mesh.elements)
    fig, ax = plt.subplots(figsize=(4.8, 4.2))
    pc = ax.tripcolor(tri, vertex_values(space, coef), shading="gouraud", cmap="RdBu_r")
    fig.colorbar(pc, ax=ax)
    ax.set_aspect("equal")
    ax.set_title(title)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
