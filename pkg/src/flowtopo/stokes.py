"""Stokes-Brinkman saddle-point solver with Taylor-Hood elements.

The weak problem on the tagged unit-square mesh reads: find (u, p) with
u = u_in on the inlet, u = 0 on the walls, such that

    int grad(u):grad(w) + int alpha u.w - int p div(w) = int f.w
    int q div(u) = 0

for all admissible (w, q).  The do-nothing outflow condition is natural
and adds no boundary term.  Velocity uses quadratic Lagrange elements,
pressure linear ones; Dirichlet rows are eliminated symmetrically so
the reduced system stays symmetric indefinite.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .assembly import ElementTables
from .mesh import (BoundaryTag, FLOW_WINDOW, GEOM_TOL, Quadrature, TriMesh,
                   p1_at_quadrature)


class SingularSystemError(RuntimeError):
    """Raised when the flow system has no outlet and pressure is undetermined."""


class SolverBreakdownError(RuntimeError):
    """Raised when the linear solve fails to reach the residual tolerance."""


@dataclass
class AlphaField:
    """Inverse permeability sampled at the assembly quadrature points."""

    values: np.ndarray  # (n_triangles, nq), entries in {alpha_L, alpha_U}
    alpha_L: float
    alpha_U: float

    def __post_init__(self):
        # equality is allowed so the psi-independence property is testable
        if not self.alpha_L <= self.alpha_U:
            raise ValueError("alpha_L must not exceed alpha_U")


@dataclass
class FlowState:
    """Taylor-Hood velocity/pressure pair with its algebraic residual."""

    u: np.ndarray  # (n_p2, 2)
    p: np.ndarray  # (n_vertices,)
    residual: float
    solve_time: float = 0.0


@dataclass
class StokesSystem:
    """Assembled saddle-point system with symmetric Dirichlet elimination."""

    matrix: sparse.csr_matrix
    rhs: np.ndarray
    free: np.ndarray
    fixed: np.ndarray
    fixed_values: np.ndarray
    n_p2: int
    n_vertices: int
    mesh: TriMesh = field(repr=False)


def inflow_profile(y):
    """Parabolic inlet velocity, unit peak at the window center.

    Accepts a scalar or an array of y coordinates inside the inlet
    window and returns the corresponding (2,) or (n, 2) velocity.
    """
    y = np.asarray(y, dtype=float)
    lo, hi = FLOW_WINDOW
    if np.any(y < lo - GEOM_TOL) or np.any(y > hi + GEOM_TOL):
        raise ValueError("inflow profile evaluated outside the inlet window")
    ux = -(400.0 / 9.0) * (y - lo) * (y - hi)
    out = np.stack([ux, np.zeros_like(ux)], axis=-1)
    return out


def alpha_from_levelset(psi: np.ndarray, mesh: TriMesh, quad: Quadrature,
                        alpha_L: float, alpha_U: float) -> AlphaField:
    """Binary inverse-permeability field from the sign of the level set.

    The P1 interpolant of psi is evaluated at every quadrature point;
    negative values mark fluid (alpha_L), the tie psi = 0 counts as
    solid (alpha_U) for determinism.
    """
    psi = np.asarray(psi, dtype=float)
    if psi.shape != (mesh.n_vertices,):
        raise ValueError("psi must be a P1 nodal field on the mesh")
    psi_q = p1_at_quadrature(mesh, psi, quad)
    values = np.where(psi_q < 0.0, alpha_L, alpha_U)
    return AlphaField(values=values, alpha_L=alpha_L, alpha_U=alpha_U)


class StokesSolver:
    """Caches the geometry-dependent operators of the flow system.

    The viscous block, divergence coupling and Dirichlet bookkeeping
    depend only on the mesh; only the alpha-weighted mass block changes
    between optimizer iterations.
    """

    def __init__(self, mesh: TriMesh, quad: Quadrature | None = None):
        if not mesh.boundary_tags:
            raise ValueError("mesh must be boundary-tagged before solving")
        self.mesh = mesh
        self.tables = ElementTables(mesh, quad)
        self.quad = self.tables.quad
        self.stiffness = self.tables.p2_stiffness()
        self.mass = self.tables.p2_mass()
        self.bx, self.by = self.tables.divergence_blocks()

        inlet_nodes: set[int] = set()
        dirichlet_nodes: set[int] = set()
        nv = mesh.n_vertices
        for eid, tag in mesh.boundary_tags.items():
            if tag is BoundaryTag.OUTLET:
                continue
            v0, v1 = mesh.edges[eid]
            nodes = (int(v0), int(v1), int(nv + eid))
            dirichlet_nodes.update(nodes)
            if tag is BoundaryTag.INLET:
                inlet_nodes.update(nodes)
        self.dirichlet_nodes = np.array(sorted(dirichlet_nodes), dtype=np.int64)
        self.inlet_nodes = np.array(sorted(inlet_nodes), dtype=np.int64)
        self.has_outlet = any(t is BoundaryTag.OUTLET
                              for t in mesh.boundary_tags.values())

    # -- Dirichlet data -------------------------------------------------

    def dirichlet_values(self, kind="inflow") -> np.ndarray:
        """Velocity values at the constrained P2 nodes, shape (nd, 2).

        ``kind`` is "inflow" (inlet parabola, zero walls), "zero", or a
        callable (x, y) -> (2,) for manufactured solutions.
        """
        coords = self.mesh.p2_coords[self.dirichlet_nodes]
        vals = np.zeros((self.dirichlet_nodes.size, 2))
        if kind == "zero":
            return vals
        if kind == "inflow":
            # inlet facet endpoints may sit just outside the window on
            # non-aligned meshes; the profile extends there by zero
            mask = np.isin(self.dirichlet_nodes, self.inlet_nodes)
            if mask.any():
                yy = np.clip(coords[mask, 1], *FLOW_WINDOW)
                vals[mask] = inflow_profile(yy)
            return vals
        if callable(kind):
            for k, (x, y) in enumerate(coords):
                vals[k] = kind(x, y)
            return vals
        raise ValueError(f"unknown Dirichlet specification {kind!r}")

    # -- assembly -------------------------------------------------------

    def assemble(self, alpha: AlphaField, body_force: np.ndarray | None = None,
                 dirichlet="inflow") -> StokesSystem:
        """Assemble the saddle-point system for a given alpha field.

        ``body_force`` is an optional P2 nodal vector field added to the
        momentum right-hand side (defaults to zero, as in the flow
        model); it also carries the adjoint source.
        """
        mesh = self.mesh
        n2, nv = mesh.n_p2, mesh.n_vertices
        if alpha.values.shape != (mesh.n_triangles, self.quad.weights.size):
            raise ValueError("alpha field does not match mesh and quadrature")

        a_block = self.stiffness + self.tables.weighted_p2_mass(alpha.values)
        matrix = sparse.bmat(
            [[a_block, None, self.bx.T],
             [None, a_block, self.by.T],
             [self.bx, self.by, None]], format="csr")

        rhs = np.zeros(2 * n2 + nv)
        if body_force is not None:
            f = np.asarray(body_force, dtype=float)
            if f.shape != (n2, 2):
                raise ValueError("body force must be a P2 vector field")
            rhs[:n2] = self.mass @ f[:, 0]
            rhs[n2:2 * n2] = self.mass @ f[:, 1]

        vals = self.dirichlet_values(dirichlet)
        fixed = np.concatenate([self.dirichlet_nodes,
                                self.dirichlet_nodes + n2])
        fixed_values = np.concatenate([vals[:, 0], vals[:, 1]])
        free = np.setdiff1d(np.arange(2 * n2 + nv), fixed,
                            assume_unique=True)
        return StokesSystem(matrix=matrix, rhs=rhs, free=free, fixed=fixed,
                            fixed_values=fixed_values, n_p2=n2,
                            n_vertices=nv, mesh=mesh)

    def solve(self, system: StokesSystem, rtol: float = 1e-10) -> FlowState:
        """Direct sparse solve of the assembled system."""
        if not self.has_outlet:
            raise SingularSystemError(
                "no outlet facet: pressure is determined only up to a constant")
        return solve_flow(system, rtol=rtol)


def solve_flow(system: StokesSystem, rtol: float = 1e-10) -> FlowState:
    """Solve the reduced system and rebuild the full velocity/pressure pair."""
    t0 = time.perf_counter()
    k = system.matrix
    free, fixed = system.free, system.fixed
    k_free = k[free][:, free].tocsc()
    rhs_free = system.rhs[free]
    if fixed.size:
        rhs_free = rhs_free - k[free][:, fixed] @ system.fixed_values
    try:
        lu = splu(k_free)
        x_free = lu.solve(rhs_free)
    except RuntimeError as exc:
        raise SolverBreakdownError(f"sparse factorization failed: {exc}") from exc

    denom = max(np.linalg.norm(rhs_free), 1.0)
    residual = np.linalg.norm(k_free @ x_free - rhs_free) / denom
    if not np.isfinite(residual) or residual > rtol:
        raise SolverBreakdownError(
            f"relative residual {residual:.3e} exceeds tolerance {rtol:.1e}")

    x = np.zeros(2 * system.n_p2 + system.n_vertices)
    x[free] = x_free
    x[fixed] = system.fixed_values
    n2 = system.n_p2
    u = np.column_stack([x[:n2], x[n2:2 * n2]])
    p = x[2 * n2:]
    return FlowState(u=u, p=p, residual=float(residual),
                     solve_time=time.perf_counter() - t0)


def boundary_flux(mesh: TriMesh, u: np.ndarray):
    """Net outward boundary flux of a P2 velocity field and per-tag split.

    Facet integrals use Simpson's rule on the three P2 trace nodes,
    which is exact for the quadratic trace.
    """
    if not mesh.boundary_tags:
        raise ValueError("mesh must be boundary-tagged")
    nv = mesh.n_vertices
    total = 0.0
    per_tag = {tag: 0.0 for tag in BoundaryTag}
    for eid, tag in mesh.boundary_tags.items():
        v0, v1 = mesh.edges[eid]
        mx, my = mesh.edge_midpoints[eid]
        if abs(mx) <= GEOM_TOL:
            normal = np.array([-1.0, 0.0])
        elif abs(mx - 1.0) <= GEOM_TOL:
            normal = np.array([1.0, 0.0])
        elif abs(my) <= GEOM_TOL:
            normal = np.array([0.0, -1.0])
        else:
            normal = np.array([0.0, 1.0])
        length = np.linalg.norm(mesh.vertices[v1] - mesh.vertices[v0])
        un = (u[v0] @ normal, u[nv + eid] @ normal, u[v1] @ normal)
        flux = length / 6.0 * (un[0] + 4.0 * un[1] + un[2])
        total += flux
        per_tag[tag] += flux
    return total, per_tag
