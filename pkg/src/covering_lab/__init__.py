"""Numerical verification of sphere covering inequalities and their relatives."""

__version__ = "0.1.0"

from .conformal_geometry import (CapField, ConformalMetric, ConstantField, Disk, LevelSetDomain,
                                 Rectangle, SphereCapSpec, cap_area, cap_field, gauss_curvature)
from .levelset import MonotoneParams, compute_profile, monotone_functional, monotonicity_verdict
from .solver import (RadialProblem, RadialRequest, Solve2DProblem, SolverError, solve_2d,
                     solve_radial)
from .verifiers import (ScenarioSpec, Tolerances, VerificationReport, compute_theta,
                        isoperimetric_scan, verify, weight_substitution)

__all__ = [
    "CapField", "ConformalMetric", "ConstantField", "Disk", "LevelSetDomain", "Rectangle",
    "SphereCapSpec", "cap_area", "cap_field", "gauss_curvature", "MonotoneParams",
    "compute_profile", "monotone_functional", "monotonicity_verdict", "RadialProblem",
    "RadialRequest", "Solve2DProblem", "SolverError", "solve_2d", "solve_radial", "ScenarioSpec",
    "Tolerances", "VerificationReport", "compute_theta", "isoperimetric_scan", "verify",
    "weight_substitution",
]
