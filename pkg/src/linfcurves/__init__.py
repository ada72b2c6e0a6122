"""Curves of minimal L-infinity acceleration on E^m, spheres and SO(3).

Extremal initial-value problems, closed forms in Euclidean space, SO(3)
reduction and reconstruction, shooting for boundary-value problems and the
diagnostics that check the necessary conditions along a sampled curve.
"""
__version__ = "0.1.0"

from .manifolds import ManifoldId
from .integrator import (CubicState, ExtremalState, SO3ReducedState, SphereExtremalState,
                         Trajectory, integrate)
from .diagnostics import DiagnosticsReport, analyze, compare, j_infinity
from .euclid import EuclideanExtremal, NaturalCubicSpline, solve_euclid_bvp
from .lie import classify_null, conserved, reconstruct, solve_reduced
from .shooting import ShootingProblem, ShootingSolver, check_multipoint, solve
from .validation import BoundaryData

__all__ = [
    "ManifoldId", "CubicState", "ExtremalState", "SO3ReducedState", "SphereExtremalState",
    "Trajectory", "integrate", "DiagnosticsReport", "analyze", "compare", "j_infinity",
    "EuclideanExtremal", "NaturalCubicSpline", "solve_euclid_bvp", "classify_null",
    "conserved", "reconstruct", "solve_reduced", "ShootingProblem", "ShootingSolver",
    "check_multipoint", "solve", "BoundaryData",
]
