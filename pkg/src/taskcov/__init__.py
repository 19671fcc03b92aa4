"""taskcov: joint training of per-task linear models and their
inter-task covariance, with a synchronous parameter-server runtime,
a duality-gap certificate, an HTTP service, and a CLI."""

from .core import (TaskData, MultiTaskProblem, TaskCovariance, DualState,
                   RunConfig, FeatureMap, validate_problem, EngineError)
from .losses import INFEASIBLE, loss_eval, loss_conjugate, coordinate_delta
from .objectives import (ObjectiveReport, quad_form, weights_from_duals,
                         primal_objective, dual_objective, duality_gap)
from .local_solver import (LocalRoundInput, LocalRoundOutput, local_sdca,
                           local_subproblem_objective, estimate_theta,
                           suggested_iterations)
from .server import (AggregationState, aggregate_round, omega_step, rho_bound,
                     theoretical_round_bound)
from .runtime import (run_dmtrl, run_stl, run_ssdca, run_w_step, RoundTrace,
                      WorkerUpdateMsg, ServerBroadcastMsg, encode_msg,
                      decode_msg, rounds_to_gap)
from .data import (SyntheticSpec, gen_synthetic, presets, load_problem,
                   write_problem, evaluate, EvalReport)

__version__ = "0.1.0"

__all__ = [
    "TaskData", "MultiTaskProblem", "TaskCovariance", "DualState", "RunConfig",
    "FeatureMap", "validate_problem", "EngineError", "INFEASIBLE", "loss_eval",
    "loss_conjugate", "coordinate_delta", "ObjectiveReport", "quad_form",
    "weights_from_duals", "primal_objective", "dual_objective", "duality_gap",
    "LocalRoundInput", "LocalRoundOutput", "local_sdca",
    "local_subproblem_objective", "estimate_theta", "suggested_iterations",
    "AggregationState", "aggregate_round", "omega_step", "rho_bound",
    "theoretical_round_bound", "run_dmtrl", "run_stl", "run_ssdca",
    "run_w_step", "RoundTrace", "WorkerUpdateMsg", "ServerBroadcastMsg",
    "encode_msg", "decode_msg", "rounds_to_gap", "SyntheticSpec",
    "gen_synthetic", "presets", "load_problem", "write_problem", "evaluate",
    "EvalReport",
]
