"""Fluid model of the many-server queue with abandonment under a time-varying arrival rate."""

from .dist import DistributionModel, RateFunction
from .elapsed import ElapsedInitialCondition, equivalence, equivalence_report, to_residual_ic
from .errors import (ConfigurationError, CorrespondenceError, DivergenceError, DomainError,
                     InternalConsistencyError, ScenarioError, TvFluidError)
from .invariants import check_invariants
from .kernel import ConstantRateKernel, Grid, KernelCache, constant_rate_h
from .processes import balance_residuals, flow_ledger
from .scenario import Scenario, load, load_bundled, parse
from .sim import SimEnsemble, SimScenario, compare, simulate
from .solver import (FluidSolution, InitialCondition, SolverConfig, renewal_function, renewal_integral,
                     residual, solve, time_shift)

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError", "ConstantRateKernel", "CorrespondenceError", "DistributionModel", "DivergenceError",
    "DomainError", "ElapsedInitialCondition", "FluidSolution", "Grid", "InitialCondition",
    "InternalConsistencyError", "KernelCache", "RateFunction", "Scenario", "ScenarioError", "SimEnsemble",
    "SimScenario", "SolverConfig", "TvFluidError", "balance_residuals", "check_invariants", "compare",
    "constant_rate_h", "equivalence", "equivalence_report", "flow_ledger", "load", "load_bundled", "parse",
    "renewal_function", "renewal_integral", "residual", "simulate", "solve", "time_shift", "to_residual_ic",
]
