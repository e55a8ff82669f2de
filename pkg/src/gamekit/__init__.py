"""Feedback Nash equilibria of linear-quadratic games from offline input/output data."""
from .behavior import (AssumptionReport, BehaviorBasis, HankelBlocks, PredictorFamily,
                       behavior_basis, check_assumption1, hankel, partition, predictors)
from .errors import (Diverged, GamekitError, InconsistentInitialData, InvalidInput,
                     NoConvergence, NotObservable, PreconditionError, RankShortfall,
                     SingularMatrix, SingularStageMatrix)
from .fne_dd import (FneSolution, StageSystem, assemble_stage, best_response_check,
                     rollout_fne, solve_finite_fne, value_function, verify_solution_residuals)
from .fne_known import (KnownFneSolution, cross_check_theorem1, infinite_horizon_known,
                        solve_finite_fne_known)
from .game import GameSpec, make_spec, stage_cost, total_cost
from .lti import (LtiSystem, Trajectory, generate_offline_data, is_controllable, lag,
                  match_initial_state, simulate)
from .numerics import BlockLayout, numerical_rank, pinv, solve_square
from .receding import (SweepResult, convergence_report, evaluate_costs, first_stage_gain,
                       run_receding_horizon, sweep_horizons)

__all__ = [
    "AssumptionReport", "BehaviorBasis", "HankelBlocks", "PredictorFamily", "behavior_basis",
    "check_assumption1", "hankel", "partition", "predictors", "Diverged", "GamekitError",
    "InconsistentInitialData", "InvalidInput", "NoConvergence", "NotObservable",
    "PreconditionError", "RankShortfall", "SingularMatrix", "SingularStageMatrix",
    "FneSolution", "StageSystem", "assemble_stage", "best_response_check", "rollout_fne",
    "solve_finite_fne", "value_function", "verify_solution_residuals", "KnownFneSolution",
    "cross_check_theorem1", "infinite_horizon_known", "solve_finite_fne_known", "GameSpec",
    "make_spec", "stage_cost", "total_cost", "LtiSystem", "Trajectory", "generate_offline_data",
    "is_controllable", "lag", "match_initial_state", "simulate", "BlockLayout",
    "numerical_rank", "pinv", "solve_square", "SweepResult", "convergence_report",
    "evaluate_costs", "first_stage_gain", "run_receding_horizon", "sweep_horizons",
]

__version__ = "0.1.0"
