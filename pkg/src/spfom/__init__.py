"""Stochastic primal-dual solver for sales-based assortment LPs."""

from .errors import (ConfigurationError, ConsistencyError, DataError, InfeasibleError,
                     NumericalError, SpfomError, StructuralError, UsageError)
from .instance import (BundleInstance, GenerationConfig, Instance, MultiPeriodInstance,
                       generate_uniform, stack_periods, validate)
from .solver import (DualPrices, PrimalState, SolveReport, SolverParams, spfom_solve,
                     spfom_solve_parallel)

__version__ = "0.1.0"

__all__ = [
    "BundleInstance", "ConfigurationError", "ConsistencyError", "DataError", "DualPrices",
    "GenerationConfig", "InfeasibleError", "Instance", "MultiPeriodInstance", "NumericalError",
    "PrimalState", "SolveReport", "SolverParams", "SpfomError", "StructuralError",
    "UsageError", "generate_uniform", "spfom_solve", "spfom_solve_parallel", "stack_periods",
    "validate",
]
