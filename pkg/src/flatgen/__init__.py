"""Minimum-snap trajectory generation and flatness-based feasibility for tailsitters."""
from .errors import (DegenerateAttitudeError, DegenerateForceError, DomainError, FlatgenError,
                     InfeasibleError, SimulationDiverged, SingularConstraintError,
                     SingularEffectivenessError)
from .feasibility import check_trajectory, min_feasible_scale
from .flatness import FlatSample, flat_to_full, flat_to_full_batch
from .maneuvers import ManeuverRecipe, build_recipe
from .minsnap import (PiecewisePolynomialTrajectory, Waypoint, optimize_segment_times,
                      solve_min_snap)
from .vehicle import ControlInput, VehicleParams, VehicleState, load_params, nominal_params

__all__ = [
    "ControlInput", "DegenerateAttitudeError", "DegenerateForceError", "DomainError",
    "FlatSample", "FlatgenError", "InfeasibleError", "ManeuverRecipe",
    "PiecewisePolynomialTrajectory", "SimulationDiverged", "SingularConstraintError",
    "SingularEffectivenessError", "VehicleParams", "VehicleState", "Waypoint", "build_recipe",
    "check_trajectory", "flat_to_full", "flat_to_full_batch", "load_params", "min_feasible_scale",
    "nominal_params", "optimize_segment_times", "solve_min_snap",
]
__version__ = "0.1.0"
