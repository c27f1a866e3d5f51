"""Uniformity metrics, field export/import and configuration parsing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Quadrature, TriMesh, p1_at_quadrature, p2_at_quadrature, triangle_rule
from .optimizer import RunConfig, fluid_volume


@dataclass
class CoverageReport:
    """Fractions of the domain / fluid region meeting the velocity threshold."""

    coverage_D: float
    coverage_Omega: float


def coverage_smoothed(mesh: TriMesh, u_s: np.ndarray, u_t: float,
                      quad: Quadrature | None = None) -> float:
    """Fraction of |D| where the smoothed speed reaches the threshold.

    The indicator is sampled at the assembly quadrature points; the
    threshold comparison is inclusive.
    """
    quad = quad if quad is not None else triangle_rule(4)
    speed = np.linalg.norm(p2_at_quadrature(mesh, u_s, quad), axis=-1)
    hit = (speed >= u_t).astype(float)
    return float(np.einsum("q,eq,e->", quad.weights, hit, mesh.det))


def coverage_fluid(mesh: TriMesh, u: np.ndarray, u_t: float,
                   psi: np.ndarray, quad: Quadrature | None = None) -> float:
    """Fraction of the fluid region where the raw speed reaches the threshold.

    Returns NaN when the fluid volume vanishes.
    """
    quad = quad if quad is not None else triangle_rule(4)
    volume = fluid_volume(psi, mesh)
    if volume <= 0.0:
        return float("nan")
    speed = np.linalg.norm(p2_at_quadrature(mesh, u, quad), axis=-1)
    in_fluid = p1_at_quadrature(mesh, psi, quad) < 0.0
    hit = ((speed >= u_t) & in_fluid).astype(float)
    measure = float(np.einsum("q,eq,e->", quad.weights, hit, mesh.det))
    return measure / volume


def coverage_report(mesh: TriMesh, u: np.ndarray, u_s: np.ndarray,
                    psi: np.ndarray, u_t: float,
                    quad: Quadrature | None = None) -> CoverageReport:
    return CoverageReport(
        coverage_D=coverage_smoothed(mesh, u_s, u_t, quad),
        coverage_Omega=coverage_fluid(mesh, u, u_t, psi, quad))


# ---------------------------------------------------------------------------
# Field export / import
# ---------------------------------------------------------------------------

def export_fields(mesh: TriMesh, psi: np.ndarray, flow, u_s, outdir) -> dict:
    """Write fields.vtk (P1 view) and fields.csv (lossless P2 data).

    The legacy VTK file carries vertex-restricted point data for
    external viewers; the CSV keeps the full quadratic nodal data with
    round-trip-exact formatting.
    """
    import os

    u = np.asarray(flow.u if hasattr(flow, "u") else flow)
    p = np.asarray(flow.p) if hasattr(flow, "p") else np.zeros(mesh.n_vertices)
    us = np.asarray(u_s.u_s if hasattr(u_s, "u_s") else u_s)
    os.makedirs(outdir, exist_ok=True)
    vtk_path = os.path.join(outdir, "fields.vtk")
    csv_path = os.path.join(outdir, "fields.csv")
    try:
        _write_vtk(vtk_path, mesh, psi, u, p, us)
        _write_csv(csv_path, mesh, psi, u, p, us)
    except OSError as exc:
        raise OSError(f"field export to {outdir!r} failed: {exc}") from exc
    return {"vtk": vtk_path, "csv": csv_path}


def _write_vtk(path, mesh, psi, u, p, us):
    nv, nt = mesh.n_vertices, mesh.n_triangles
    speed = np.linalg.norm(u[:nv], axis=1)
    speed_s = np.linalg.norm(us[:nv], axis=1)
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write("flowtopo fields\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {nv} double\n")
        for x, y in mesh.vertices:
            fh.write(f"{x:.17g} {y:.17g} 0\n")
        fh.write(f"CELLS {nt} {4 * nt}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"3 {a} {b} {c}\n")
        fh.write(f"CELL_TYPES {nt}\n")
        fh.write("5\n" * nt)
        fh.write(f"POINT_DATA {nv}\n")
        fh.write("SCALARS psi double 1\nLOOKUP_TABLE default\n")
        fh.writelines(f"{v:.17g}\n" for v in psi)
        fh.write("VECTORS u double\n")
        for vx, vy in u[:nv]:
            fh.write(f"{vx:.17g} {vy:.17g} 0\n")
        fh.write("SCALARS p double 1\nLOOKUP_TABLE default\n")
        fh.writelines(f"{v:.17g}\n" for v in p)
        fh.write("SCALARS speed double 1\nLOOKUP_TABLE default\n")
        fh.writelines(f"{v:.17g}\n" for v in speed)
        fh.write("SCALARS speed_smoothed double 1\nLOOKUP_TABLE default\n")
        fh.writelines(f"{v:.17g}\n" for v in speed_s)


def _write_csv(path, mesh, psi, u, p, us):
    nv = mesh.n_vertices
    coords = mesh.p2_coords
    with open(path, "w") as fh:
        fh.write(f"# n_div={mesh.n_div}\n")
        fh.write("node,x,y,ux,uy,us_x,us_y,psi,p\n")
        for i in range(mesh.n_p2):
            row = [str(i)] + [f"{v:.17g}" for v in
                              (coords[i, 0], coords[i, 1],
                               u[i, 0], u[i, 1], us[i, 0], us[i, 1])]
            if i < nv:
                row += [f"{psi[i]:.17g}", f"{p[i]:.17g}"]
            else:
                row += ["", ""]
            fh.write(",".join(row) + "\n")


def import_fields(path) -> dict:
    """Read a fields.csv back into nodal arrays (exact round trip)."""
    import csv as _csv

    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("# n_div="):
            raise ValueError(f"{path}: missing n_div header line")
        n_div = int(header.split("=", 1)[1])
        reader = _csv.reader(fh)
        next(reader)  # column header
        rows = list(reader)
    n_p2 = len(rows)
    nv = (n_div + 1) ** 2
    u = np.empty((n_p2, 2))
    us = np.empty((n_p2, 2))
    psi = np.empty(nv)
    p = np.empty(nv)
    for row in rows:
        i = int(row[0])
        u[i] = (float(row[3]), float(row[4]))
        us[i] = (float(row[5]), float(row[6]))
        if i < nv:
            psi[i] = float(row[7])
            p[i] = float(row[8])
    return {"n_div": n_div, "u": u, "u_s": us, "psi": psi, "p": p}


# ---------------------------------------------------------------------------
# Configuration files
# ---------------------------------------------------------------------------

#: keys accepted in flat key=value configuration files
CONFIG_KEYS = ("alpha_L", "alpha_U", "u_t", "dt", "V_L", "V_U", "eps_theta",
               "eps_c", "n_div", "max_iter", "kappa_min", "output_dir",
               "snapshot_every")

_INT_KEYS = {"n_div", "max_iter", "snapshot_every"}
_STR_KEYS = {"output_dir"}


def parse_config(path) -> RunConfig:
    """Parse a flat key=value config file, applying defaults for absent keys."""
    overrides = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, "
                                 f"got {line!r}")
            key, _, raw = line.partition("=")
            key = key.strip()
            raw = raw.strip()
            if key not in CONFIG_KEYS:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            if key in _STR_KEYS:
                overrides[key] = raw
            elif key in _INT_KEYS:
                overrides[key] = int(raw)
            else:
                overrides[key] = float(raw)
    return RunConfig(**overrides).validate()


def serialize_config(config: RunConfig, path):
    """Write a config back to the flat key=value format (parse round trip)."""
    with open(path, "w") as fh:
        for key in CONFIG_KEYS:
            value = getattr(config, key)
            if isinstance(value, float):
                fh.write(f"{key}={value!r}\n")
            else:
                fh.write(f"{key}={value}\n")
