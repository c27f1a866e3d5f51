"""Topology optimization for uniform flow distribution in a bipolar plate.

Solves a Stokes-Brinkman flow on the unit square and evolves a level
set with topological-derivative updates so that the (smoothed) velocity
magnitude meets a target threshold on as much of the domain as
possible, subject to a fluid-volume band.
"""

from .analysis import (CoverageReport, coverage_fluid, coverage_report,
                       coverage_smoothed, export_fields, import_fields,
                       parse_config, serialize_config)
from .mesh import (BoundaryTag, Quadrature, TriMesh, build_unit_square_mesh,
                   interpolate_p1, interpolate_p2, tag_boundary, triangle_rule)
from .optimizer import (ConvergenceRecord, OptimizeResult, RunConfig,
                        StagnationError, compute_theta, fluid_volume,
                        initial_levelset, l2_inner, l2_norm, line_search,
                        optimize, project_volume, slerp_update)
from .sensitivity import (AdjointState, heat_adjoint, objective,
                          solve_adjoints, stokes_adjoint,
                          topological_derivative)
from .smoothing import SmoothedVelocity, VelocitySmoother
from .stokes import (AlphaField, FlowState, SingularSystemError,
                     SolverBreakdownError, StokesSolver, alpha_from_levelset,
                     boundary_flux, inflow_profile, solve_flow)

__version__ = "0.1.0"
