"""Coordinated parking of autonomous vehicles at V2G facilities.

Exact and price-coordinated (dual decomposition) solvers for assigning AVs
to parking facilities over a slotted horizon, with a lossy message-passing
simulator and an experiment harness.
"""
from .baseline import solve_greedy
from .coordinator import RunParams, RunReport, run_distributed
from .errors import (AvInfeasibleError, AvParkError, GenerationError, InstanceInfeasibleError,
                     InvalidConfigError, OracleLimitError, RecoveryFailedError)
from .instance import (AvSpec, DistanceMatrix, FacilitySpec, GeneratorConfig, Instance,
                       TimeHorizon, TravelPlan, generate_instance, rescale_time)
from .model import Assignment, Violation, check_feasibility, export_lp, objective
from .netsim import ChannelModel
from .oracle import solve_exact, verify_optimal
from .recovery import recover_primal
from .subproblem import PriceVector, brute_subproblem, solve_subproblem

__version__ = "0.1.0"

__all__ = [
    "Assignment", "AvInfeasibleError", "AvParkError", "AvSpec", "ChannelModel",
    "DistanceMatrix", "FacilitySpec", "GenerationError", "GeneratorConfig", "Instance",
    "InstanceInfeasibleError", "InvalidConfigError", "OracleLimitError", "PriceVector",
    "RecoveryFailedError", "RunParams", "RunReport", "TimeHorizon", "TravelPlan", "Violation",
    "brute_subproblem", "check_feasibility", "export_lp", "generate_instance", "objective",
    "recover_primal", "rescale_time", "run_distributed", "solve_exact", "solve_greedy",
    "solve_subproblem", "verify_optimal",
]
