"""
Numerical services for the Chaotic Walk Lab.
"""
from .symbolic_dynamics import SymbolicDynamicsService
from .skew_products import SkewProductService
from .poisson_solver import PoissonSolverService
from .stopping_lab import StoppingLabService
from .intermittency_stats import IntermittencyStatsService
from .experiment_service import ExperimentService

__all__ = [
    'SymbolicDynamicsService',
    'SkewProductService',
    'PoissonSolverService',
    'StoppingLabService',
    'IntermittencyStatsService',
    'ExperimentService'
]
