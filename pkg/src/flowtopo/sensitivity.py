"""Threshold-velocity objective, adjoint solves and topological derivative.

The objective penalizes smoothed-velocity magnitudes below the target
threshold,

    J = int_D min(0, |u_s| - u_t)^2 dx,

so J vanishes exactly when the whole domain is covered.  Its gradient
with respect to the design enters through two adjoint solves (the
smoothing adjoint and the flow adjoint) and the pointwise derivative

    D_T(z) = -(alpha_U - alpha_L) * u(z) . v(z).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Quadrature, TriMesh, p2_at_quadrature, triangle_rule
from .smoothing import SmoothedVelocity, VelocitySmoother
from .stokes import AlphaField, FlowState, StokesSolver

#: below this smoothed-speed magnitude the adjoint source direction is
#: undefined and set to zero
SPEED_GUARD = 1e-10


@dataclass
class AdjointState:
    """Adjoint of the smoothed velocity plus the flow adjoint pair."""

    v_s: np.ndarray  # (n_p2, 2)
    v: np.ndarray    # (n_p2, 2)
    q: np.ndarray    # (n_vertices,)


def _shortfall(u_s_q: np.ndarray, u_t: float):
    """Speed and clamped threshold shortfall at quadrature points."""
    speed = np.linalg.norm(u_s_q, axis=-1)
    return speed, np.minimum(0.0, speed - u_t)


def objective(mesh: TriMesh, u_s: np.ndarray, u_t: float,
              quad: Quadrature | None = None) -> float:
    """Moreau-Yosida threshold objective evaluated by quadrature."""
    if u_t <= 0.0:
        raise ValueError("threshold velocity must be positive")
    quad = quad if quad is not None else triangle_rule(4)
    u_s_q = p2_at_quadrature(mesh, u_s, quad)
    _, short = _shortfall(u_s_q, u_t)
    cell = np.einsum("q,eq->e", quad.weights, short ** 2)
    return float(cell @ mesh.det)


def adjoint_source(mesh: TriMesh, u_s: np.ndarray, u_t: float,
                   quad: Quadrature) -> np.ndarray:
    """Quadrature-point values of 2 (u_s/|u_s|) min(0, |u_s| - u_t)."""
    u_s_q = p2_at_quadrature(mesh, u_s, quad)
    speed, short = _shortfall(u_s_q, u_t)
    safe = np.where(speed > SPEED_GUARD, speed, 1.0)
    factor = np.where(speed > SPEED_GUARD, 2.0 * short / safe, 0.0)
    return factor[..., None] * u_s_q


def heat_adjoint(smoother: VelocitySmoother, u_s: SmoothedVelocity | np.ndarray,
                 u_t: float, dt: float) -> np.ndarray:
    """Adjoint of the smoothed velocity (screened-Poisson solve)."""
    field = u_s.u_s if isinstance(u_s, SmoothedVelocity) else np.asarray(u_s)
    source = adjoint_source(smoother.mesh, field, u_t, smoother.tables.quad)
    if not np.any(source):
        return np.zeros((smoother.mesh.n_p2, 2))
    load = smoother.tables.p2_load(source)
    return np.column_stack(
        [smoother.solve_weak(load[:, c], dt) for c in range(2)])


def stokes_adjoint(solver: StokesSolver, v_s: np.ndarray, alpha: AlphaField,
                   dt: float, rtol: float = 1e-10):
    """Flow adjoint: same operator as the state, source (1/dt) v_s,
    homogeneous Dirichlet data on inlet and walls."""
    if dt <= 0.0:
        raise ValueError(f"step length must be positive, got {dt}")
    system = solver.assemble(alpha, body_force=np.asarray(v_s) / dt,
                             dirichlet="zero")
    state = solver.solve(system, rtol=rtol)
    return state.u, state.p


def topological_derivative(u: np.ndarray, v: np.ndarray, alpha_L: float,
                           alpha_U: float) -> np.ndarray:
    """Nodal topological derivative -(alpha_U - alpha_L) u . v on P2 nodes."""
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape != v.shape:
        raise ValueError("u and v must live on the same P2 space")
    return -(alpha_U - alpha_L) * np.einsum("ic,ic->i", u, v)


def solve_adjoints(solver: StokesSolver, smoother: VelocitySmoother,
                   flow: FlowState, u_s: SmoothedVelocity, alpha: AlphaField,
                   u_t: float, rtol: float = 1e-10) -> AdjointState:
    """Full adjoint chain for one state: smoothing adjoint, then flow adjoint."""
    v_s = heat_adjoint(smoother, u_s, u_t, u_s.dt)
    if not np.any(v_s):
        n2 = solver.mesh.n_p2
        return AdjointState(v_s=v_s, v=np.zeros((n2, 2)),
                            q=np.zeros(solver.mesh.n_vertices))
    v, q = stokes_adjoint(solver, v_s, alpha, u_s.dt, rtol=rtol)
    return AdjointState(v_s=v_s, v=v, q=q)
