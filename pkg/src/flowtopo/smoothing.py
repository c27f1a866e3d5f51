"""One-step implicit-Euler velocity smoothing (screened-Poisson solves).

Smoothing a velocity component amounts to solving

    (1/dt) w - Lap(w) = (1/dt) u      in D,
    grad(w) . n = 0                   on the boundary,

which is a symmetric positive-definite system per component.  The same
left-hand operator also drives the smoothing adjoint, so the factorized
system matrix is cached per step length and shared.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import splu

from .assembly import ElementTables
from .mesh import Quadrature, TriMesh


@dataclass
class SmoothedVelocity:
    """P2 smoothed velocity together with the step length that produced it."""

    u_s: np.ndarray  # (n_p2, 2)
    dt: float


class VelocitySmoother:
    """Screened-Poisson kernel with a cached factorization per step length."""

    def __init__(self, mesh: TriMesh, quad: Quadrature | None = None,
                 rtol: float = 1e-10):
        self.mesh = mesh
        self.tables = ElementTables(mesh, quad)
        self.mass = self.tables.p2_mass()
        self.stiffness = self.tables.p2_stiffness()
        self.rtol = rtol
        self._factors: dict[float, object] = {}
        self._matrices: dict[float, object] = {}

    def _factor(self, dt: float):
        if dt <= 0.0:
            raise ValueError(f"smoothing step length must be positive, got {dt}")
        key = float(dt)
        if key not in self._factors:
            system = (self.mass / key + self.stiffness).tocsc()
            self._matrices[key] = system
            self._factors[key] = splu(system)
        return self._factors[key]

    def solve_weak(self, load: np.ndarray, dt: float) -> np.ndarray:
        """Solve (1/dt) w - Lap(w) = rhs given the assembled weak load."""
        lu = self._factor(dt)
        w = lu.solve(load)
        system = self._matrices[float(dt)]
        denom = max(np.linalg.norm(load), 1.0)
        residual = np.linalg.norm(system @ w - load) / denom
        if residual > self.rtol:
            raise RuntimeError(
                f"screened-Poisson residual {residual:.3e} exceeds "
                f"{self.rtol:.1e}")
        return w

    def screened_poisson_solve(self, rhs: np.ndarray, dt: float) -> np.ndarray:
        """Solve (1/dt) w - Lap(w) = rhs for a P2 nodal right-hand side."""
        rhs = np.asarray(rhs, dtype=float)
        return self.solve_weak(self.mass @ rhs, dt)

    def smooth(self, u: np.ndarray, dt: float) -> SmoothedVelocity:
        """One implicit Euler step of the heat equation applied to u."""
        u = np.asarray(u, dtype=float)
        if u.ndim != 2 or u.shape[1] != 2:
            raise ValueError("u must be a P2 vector field of shape (n_p2, 2)")
        if dt <= 0.0:
            raise ValueError(f"smoothing step length must be positive, got {dt}")
        u_s = np.column_stack(
            [self.screened_poisson_solve(u[:, c] / dt, dt) for c in range(2)])
        return SmoothedVelocity(u_s=u_s, dt=float(dt))
