"""Linearized saddle-point solver and nonlinear energy minimization on Q1 grids."""

from .linear import (
    LinearizedProblem,
    LinearOperators,
    SaddleSolution,
    linearized_energy,
    load_functional,
    saddle_solve,
    solve_linearized,
    solve_shifted,
)
from .nonlinear import (
    AugmentedLagrangian,
    ConvergenceRecord,
    EnergyReport,
    LineSearchError,
    MinimizeReport,
    NonlinearProblem,
    OptimizerOptions,
    Penalty,
    minimize_nonlinear,
    nonlinear_energy,
    shifted_functionals,
)
from .q1 import FastLaplacian, Q1Grid

__all__ = [
    "LinearizedProblem",
    "LinearOperators",
    "SaddleSolution",
    "linearized_energy",
    "load_functional",
    "saddle_solve",
    "solve_linearized",
    "solve_shifted",
    "AugmentedLagrangian",
    "ConvergenceRecord",
    "EnergyReport",
    "LineSearchError",
    "MinimizeReport",
    "NonlinearProblem",
    "OptimizerOptions",
    "Penalty",
    "minimize_nonlinear",
    "nonlinear_energy",
    "shifted_functionals",
    "FastLaplacian",
    "Q1Grid",
]
