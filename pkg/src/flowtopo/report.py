"""Matplotlib figure rendering for run reports.

Figures are rendered to files next to the delimited outputs; no
interactive backend is required.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.tri import Triangulation  # noqa: E402


def _triangulation(mesh):
    return Triangulation(mesh.vertices[:, 0], mesh.vertices[:, 1],
                         mesh.triangles)


def save_field_figures(mesh, psi, u, u_s, outdir) -> list:
    """Render the final shape and the raw/smoothed speed fields to PNG."""
    os.makedirs(outdir, exist_ok=True)
    tri = _triangulation(mesh)
    nv = mesh.n_vertices
    paths = []

    fluid = (np.asarray(psi)[mesh.triangles].mean(axis=1) < 0.0).astype(float)
    fig, ax = plt.subplots(figsize=(4.0, 4.0))
    ax.tripcolor(tri, facecolors=fluid, cmap="Blues", vmin=0.0, vmax=1.3)
    ax.set_aspect("equal")
    ax.set_title("fluid (dark) / solid layout")
    path = os.path.join(outdir, "shape.png")
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    paths.append(path)

    for name, field in (("speed", u), ("speed_smoothed", u_s)):
        mag = np.linalg.norm(np.asarray(field)[:nv], axis=1)
        fig, ax = plt.subplots(figsize=(4.6, 4.0))
        im = ax.tripcolor(tri, mag, shading="gouraud", cmap="viridis")
        fig.colorbar(im, ax=ax, shrink=0.85)
        ax.set_aspect("equal")
        ax.set_title(f"|{'u_s' if name.endswith('smoothed') else 'u'}|")
        path = os.path.join(outdir, f"{name}.png")
        fig.savefig(path, dpi=150, bbox_inches="tight")
        plt.close(fig)
        paths.append(path)
    return paths


def save_convergence_figure(record, outdir) -> str:
    """Objective and optimality-angle history on a shared iteration axis."""
    os.makedirs(outdir, exist_ok=True)
    iters = record.column("iter")
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(5.0, 5.0), sharex=True)
    ax1.semilogy(iters, record.column("J"), "o-", ms=3)
    ax1.set_ylabel("objective")
    ax1.grid(alpha=0.3)
    theta = record.column("theta")
    ax2.plot(iters, theta, "o-", ms=3)
    ax2.set_ylabel("angle [rad]")
    ax2.set_xlabel("iteration")
    ax2.grid(alpha=0.3)
    path = os.path.join(outdir, "convergence.png")
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path
