"""Level-set topology optimization driven by the topological derivative.

Each iteration solves the flow, smooths the velocity, evaluates the
threshold objective and its adjoints, forms the sign-adjusted search
direction g, and rotates the level set toward g/|g| on the L2 unit
sphere.  The rotation amount kappa comes from a backtracking line
search that accepts only strict objective decrease; every trial shape
is projected back into the admissible volume band by a bisection shift
of the level set.  The loop stops when the L2 angle between psi and g
drops below the configured tolerance.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .mesh import TriMesh, build_unit_square_mesh, tag_boundary
from .sensitivity import objective, solve_adjoints, topological_derivative
from .smoothing import VelocitySmoother
from .stokes import StokesSolver, alpha_from_levelset


class StagnationError(RuntimeError):
    """Line search found no objective decrease above the minimal step."""

    def __init__(self, message: str, trials: int = 0):
        super().__init__(message)
        self.trials = trials


class VolumeBracketError(RuntimeError):
    """Bisection could not reach the target fluid volume."""

    def __init__(self, message: str, achieved: float):
        super().__init__(message)
        self.achieved = achieved


@dataclass
class RunConfig:
    """All scalar parameters of the optimization problem.

    Defaults reproduce the reference bipolar-plate setup: unit-square
    domain at n_div = 70 (9800 elements), binary inverse permeability
    alpha_L = 2.5/125^2 and alpha_U = 2.5/0.008^2, threshold velocity
    0.1, smoothing step 1e-3, fluid-volume band [0.5, 0.7] and angle
    tolerance 0.035 (about 2 degrees).
    """

    alpha_L: float = 2.5 / 125.0 ** 2
    alpha_U: float = 2.5 / 0.008 ** 2
    u_t: float = 0.1
    dt: float = 1e-3
    V_L: float = 0.5
    V_U: float = 0.7
    eps_theta: float = 0.035
    eps_c: float = 1e-4
    n_div: int = 70
    max_iter: int = 400
    kappa_min: float = 2.0 ** -10
    solver_rtol: float = 1e-10
    output_dir: str = "out"
    snapshot_every: int = 0

    def validate(self) -> "RunConfig":
        if not 0.0 < self.V_L <= self.V_U <= 1.0:
            raise ValueError(
                f"volume bounds must satisfy 0 < V_L <= V_U <= 1, "
                f"got V_L={self.V_L}, V_U={self.V_U}")
        if self.alpha_L <= 0.0 or self.alpha_U < self.alpha_L:
            raise ValueError("need 0 < alpha_L <= alpha_U")
        for name in ("u_t", "dt", "eps_theta", "eps_c", "kappa_min",
                     "solver_rtol"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.n_div < 2:
            raise ValueError("n_div must be at least 2")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.snapshot_every < 0:
            raise ValueError("snapshot_every must be nonnegative")
        return self

    def replace(self, **kwargs) -> "RunConfig":
        return replace(self, **kwargs).validate()


#: ordered CSV columns of the per-iteration optimization trace
RECORD_COLUMNS = ("iter", "J", "theta", "kappa", "volume",
                  "coverage_D", "coverage_Omega", "wall_time_s")


@dataclass
class ConvergenceRecord:
    """Per-iteration trace of the optimization loop."""

    rows: list = field(default_factory=list)

    def append(self, **kwargs):
        self.rows.append(tuple(kwargs[c] for c in RECORD_COLUMNS))

    def column(self, name: str) -> np.ndarray:
        idx = RECORD_COLUMNS.index(name)
        return np.array([row[idx] for row in self.rows])

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(RECORD_COLUMNS)
            writer.writerows(self.rows)


@dataclass
class OptimizeResult:
    psi: np.ndarray
    flow: object
    u_s: object
    record: ConvergenceRecord
    reason: str  # "converged" | "degenerate" | "stagnation" | "max_iter"
    iterations: int
    objective: float


# ---------------------------------------------------------------------------
# L2 geometry on the level-set sphere
# ---------------------------------------------------------------------------

def l2_inner(mesh: TriMesh, f: np.ndarray, h: np.ndarray) -> float:
    """Mass-matrix-weighted L2 inner product of two P1 fields."""
    return float(f @ (mesh.mass_matrix_p1() @ h))


def l2_norm(mesh: TriMesh, f: np.ndarray) -> float:
    return float(np.sqrt(max(l2_inner(mesh, f, f), 0.0)))


def compute_theta(mesh: TriMesh, g: np.ndarray, psi: np.ndarray) -> float:
    """L2 angle between the level set and the search direction."""
    ng = l2_norm(mesh, g)
    npsi = l2_norm(mesh, psi)
    if ng == 0.0 or npsi == 0.0:
        raise ValueError("cannot form an angle with a zero-norm field")
    cos = l2_inner(mesh, g, psi) / (ng * npsi)
    return float(np.arccos(np.clip(cos, -1.0, 1.0)))


def slerp_update(mesh: TriMesh, psi: np.ndarray, g: np.ndarray,
                 theta: float, kappa: float) -> np.ndarray:
    """Norm-preserving spherical interpolation between psi and g/|g|."""
    if not 0.0 < theta < np.pi:
        raise ValueError(
            f"slerp requires theta strictly inside (0, pi), got {theta}")
    if not 0.0 <= kappa <= 1.0:
        raise ValueError(f"kappa must lie in [0, 1], got {kappa}")
    ng = l2_norm(mesh, g)
    if ng == 0.0:
        raise ValueError("search direction has zero norm")
    return (np.sin((1.0 - kappa) * theta) * psi
            + np.sin(kappa * theta) * g / ng) / np.sin(theta)


# ---------------------------------------------------------------------------
# Fluid volume and its projection
# ---------------------------------------------------------------------------

def fluid_volume(psi: np.ndarray, mesh: TriMesh) -> float:
    """Exact area of {psi < 0} for the P1 interpolant of psi.

    Each triangle is clipped at the zero level of its linear
    interpolant, so half-plane level sets give exact areas.
    """
    vals = np.sort(np.asarray(psi, dtype=float)[mesh.triangles], axis=1)
    a, b, c = vals[:, 0], vals[:, 1], vals[:, 2]
    frac = np.zeros(mesh.n_triangles)
    frac[c < 0.0] = 1.0
    one_neg = (a < 0.0) & (b >= 0.0)
    if one_neg.any():
        frac[one_neg] = (a[one_neg] / (a[one_neg] - b[one_neg])
                         * a[one_neg] / (a[one_neg] - c[one_neg]))
    two_neg = (b < 0.0) & (c >= 0.0)
    if two_neg.any():
        frac[two_neg] = 1.0 - (c[two_neg] / (c[two_neg] - a[two_neg])
                               * c[two_neg] / (c[two_neg] - b[two_neg]))
    return float(frac @ (mesh.det / 2.0))


def project_volume(psi: np.ndarray, mesh: TriMesh, V_L: float, V_U: float,
                   eps_c: float = 1e-4, max_bisect: int = 200) -> np.ndarray:
    """Shift-and-renormalize projection onto the admissible volume band.

    Admissible level sets are returned unchanged.  Otherwise a constant
    c is found by bisection so that the shifted level set hits the
    violated bound within ``eps_c``; the shift breaks the unit L2 norm,
    so the result is renormalized (a positive scaling, which leaves the
    fluid region untouched).
    """
    psi = np.asarray(psi, dtype=float)
    vol = fluid_volume(psi, mesh)
    if V_L <= vol <= V_U:
        return psi
    target = V_U if vol > V_U else V_L
    span = float(np.max(np.abs(psi))) + 1.0
    lo, hi = (0.0, span) if vol > V_U else (-span, 0.0)
    # fluid volume decreases as the shift grows
    shift = 0.0
    for _ in range(max_bisect):
        shift = 0.5 * (lo + hi)
        vol = fluid_volume(psi + shift, mesh)
        if abs(vol - target) <= eps_c:
            break
        if vol > target:
            lo = shift
        else:
            hi = shift
    else:
        raise VolumeBracketError(
            f"bisection failed to reach volume {target} "
            f"(achieved {vol:.6f})", achieved=vol)
    shifted = psi + shift
    return shifted / l2_norm(mesh, shifted)


# ---------------------------------------------------------------------------
# Line search and main loop
# ---------------------------------------------------------------------------

@dataclass
class LineSearchResult:
    kappa: float
    psi: np.ndarray
    J: float
    aux: object
    trials: int


def line_search(mesh: TriMesh, psi: np.ndarray, g: np.ndarray, theta: float,
                evaluate, J_current: float, kappa_prev: float = 1.0,
                kappa_min: float = 2.0 ** -10, V_L: float = 0.5,
                V_U: float = 0.7, eps_c: float = 1e-4) -> LineSearchResult:
    """Backtracking search on the slerp step size.

    ``evaluate`` maps a trial level set to (J, aux); aux carries the
    solved state so the accepted trial can be reused.  The first trial
    uses min(1, 2 * kappa_prev) and each rejection halves kappa; no
    decrease above ``kappa_min`` raises ``StagnationError``.
    """
    kappa = min(1.0, 2.0 * kappa_prev)
    trials = 0
    while kappa >= kappa_min:
        trial = project_volume(slerp_update(mesh, psi, g, theta, kappa),
                               mesh, V_L, V_U, eps_c)
        J_trial, aux = evaluate(trial)
        trials += 1
        if J_trial < J_current:
            return LineSearchResult(kappa=kappa, psi=trial, J=J_trial,
                                    aux=aux, trials=trials)
        kappa *= 0.5
    raise StagnationError(
        f"no objective decrease found after {trials} trials "
        f"(J = {J_current:.6e})", trials=trials)


def initial_levelset(mesh: TriMesh, kind: str = "crossflow") -> np.ndarray:
    """Normalized, volume-admissible starting level set.

    "crossflow" seeds a y-symmetric sinusoidal solid/fluid pattern whose
    fluid area sits inside the default volume band; "slab" fills the
    domain from the inlet side.  A constant all-fluid start cannot be
    volume-projected (the shifted volume jumps from 1 to 0), so some
    spatial variation is required.
    """
    x = mesh.vertices[:, 0]
    y = mesh.vertices[:, 1]
    if kind == "crossflow":
        psi = np.cos(3.0 * np.pi * x) * np.cos(4.0 * np.pi * y) - 0.3
    elif kind == "slab":
        psi = x - 0.99
    else:
        raise ValueError(f"unknown initial level-set kind {kind!r}")
    psi = psi / l2_norm(mesh, psi)
    psi = project_volume(psi, mesh, 0.5, 0.7)
    return psi / l2_norm(mesh, psi)


@dataclass
class _TrialState:
    flow: object
    u_s: object
    alpha: object
    J: float


def optimize(config: RunConfig, psi0: np.ndarray | None = None,
             mesh: TriMesh | None = None, callback=None) -> OptimizeResult:
    """Run the full topology-optimization loop.

    ``psi0`` defaults to the seeded starting level set; a supplied one
    is normalized and volume-projected first.  ``callback`` (optional)
    receives (iteration, psi, trial_state) after every accepted step.
    """
    from .analysis import coverage_fluid, coverage_smoothed

    config.validate()
    if mesh is None:
        mesh = tag_boundary(build_unit_square_mesh(config.n_div))
    solver = StokesSolver(mesh)
    smoother = VelocitySmoother(mesh, rtol=config.solver_rtol)
    quad = solver.quad

    if psi0 is None:
        psi = initial_levelset(mesh)
    else:
        psi = np.asarray(psi0, dtype=float)
        psi = psi / l2_norm(mesh, psi)
    psi = project_volume(psi, mesh, config.V_L, config.V_U, config.eps_c)
    nrm = l2_norm(mesh, psi)
    if abs(nrm - 1.0) > 1e-12:
        psi = psi / nrm

    def evaluate(trial_psi):
        alpha = alpha_from_levelset(trial_psi, mesh, quad,
                                    config.alpha_L, config.alpha_U)
        flow = solver.solve(solver.assemble(alpha), rtol=config.solver_rtol)
        u_s = smoother.smooth(flow.u, config.dt)
        J = objective(mesh, u_s.u_s, config.u_t, quad)
        return J, _TrialState(flow=flow, u_s=u_s, alpha=alpha, J=J)

    t_start = time.perf_counter()
    record = ConvergenceRecord()
    _, state = evaluate(psi)
    kappa_prev = 1.0
    reason = "max_iter"
    iteration = 0

    for iteration in range(1, config.max_iter + 1):
        adj = solve_adjoints(solver, smoother, state.flow, state.u_s,
                             state.alpha, config.u_t, rtol=config.solver_rtol)
        dt_field = topological_derivative(state.flow.u, adj.v,
                                          config.alpha_L, config.alpha_U)
        # restrict to P1 vertices and flip sign on the fluid branch
        dt_vertices = dt_field[:mesh.n_vertices]
        g = np.where(psi < 0.0, -dt_vertices, dt_vertices)

        vol = fluid_volume(psi, mesh)
        cov_d = coverage_smoothed(mesh, state.u_s.u_s, config.u_t, quad)
        cov_omega = coverage_fluid(mesh, state.flow.u, config.u_t, psi, quad)
        wall = time.perf_counter() - t_start

        if l2_norm(mesh, g) == 0.0:
            record.append(iter=iteration, J=state.J, theta=np.nan,
                          kappa=np.nan, volume=vol, coverage_D=cov_d,
                          coverage_Omega=cov_omega, wall_time_s=wall)
            reason = "degenerate"
            break

        theta = compute_theta(mesh, g, psi)
        if theta < config.eps_theta:
            record.append(iter=iteration, J=state.J, theta=theta,
                          kappa=np.nan, volume=vol, coverage_D=cov_d,
                          coverage_Omega=cov_omega, wall_time_s=wall)
            reason = "converged"
            break

        try:
            result = line_search(
                mesh, psi, g, theta,
                lambda trial: evaluate(trial), state.J,
                kappa_prev=kappa_prev, kappa_min=config.kappa_min,
                V_L=config.V_L, V_U=config.V_U, eps_c=config.eps_c)
        except StagnationError:
            record.append(iter=iteration, J=state.J, theta=theta,
                          kappa=np.nan, volume=vol, coverage_D=cov_d,
                          coverage_Omega=cov_omega, wall_time_s=wall)
            reason = "stagnation"
            break

        record.append(iter=iteration, J=state.J, theta=theta,
                      kappa=result.kappa, volume=vol, coverage_D=cov_d,
                      coverage_Omega=cov_omega, wall_time_s=wall)
        psi = result.psi
        state = result.aux
        kappa_prev = result.kappa
        if callback is not None:
            callback(iteration, psi, state)

    return OptimizeResult(psi=psi, flow=state.flow, u_s=state.u_s,
                          record=record, reason=reason,
                          iterations=iteration, objective=state.J)
