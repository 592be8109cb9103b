"""Tabular laboratory for offline constrained RL with primal-dual
occupancy-measure methods."""
from .core import (
    Cmdp,
    CmdpFormatError,
    OccupancyMeasure,
    Policy,
    ValueFunctions,
    cmdp_from_json,
    extract_policy_from_occupancy,
    extract_policy_from_weights,
    policy_distance_inf1,
    softmax_policy,
    validate_cmdp,
)
from .oracle import (
    LpSolution,
    concentrability,
    evaluate_policy,
    exact_lagrangian,
    exact_lagrangian_decomposed,
    occupancy_of_policy,
    slater_margin,
    solve_constrained_lp,
)
from .solvers import SolverConfig, SolverProblem, evaluate_mixture, run_pdocrl, run_pdorl

__version__ = "0.1.0"
