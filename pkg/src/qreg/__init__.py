"""Sparse regression for linear models with q-normal errors."""

from .qcore import QNormal, q_exp, q_log, density, normalizing_constant, sample
from .solver import (
    Coefficients, Design, PathConfig, Penalty, PenaltySpec, SolutionPath,
    coordinate_descent, lambda_max, penalty_value, predict, scalar_update,
    solve_path, standardize,
)

__version__ = "0.1.0"
