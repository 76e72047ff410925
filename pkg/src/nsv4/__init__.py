"""Pseudo-spectral simulator and attractor-dimension toolkit for the limiting
Navier-Stokes-Voigt system on the 4-torus."""

__version__ = "0.1.0"

from .spectral import (SpectralVectorField, WaveGrid, h1dot_inner, hminus1_norm, leray_project,
                       make_grid, nonlinear_term)
from .solver import ForcingSpec, SolverConfig, TrajectoryLog, rhs, simulate, step
from .tangent import TangentFrame, TraceReport, dimension_crossing, orthonormalize, q_estimate, trace_n
from .inequalities import constants, dimension_bound

__all__ = [
    "SpectralVectorField", "WaveGrid", "h1dot_inner", "hminus1_norm", "leray_project", "make_grid",
    "nonlinear_term", "ForcingSpec", "SolverConfig", "TrajectoryLog", "rhs", "simulate", "step",
    "TangentFrame", "TraceReport", "dimension_crossing", "orthonormalize", "q_estimate", "trace_n",
    "constants", "dimension_bound",
]
