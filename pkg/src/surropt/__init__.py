"""Optimization of neural-network surrogate objectives.

The package trains a surrogate network for an analytic objective, then
optimizes it by extending the surrogate's own graph: a trainable diagonal
starting-point layer supplies the candidate inputs, penalty-activation
constraint neurons add violation terms, and ordinary gradient descent on
the summed output moves the candidate. Classical baselines and a
brute-force Pareto oracle provide ground truth for comparison.
"""

from .net import (Activation, DenseLayer, BranchLayer, FuncBranch, NetBranch,
                  Network, TrainConfig, TrainingDiverged, activation_eval,
                  load, save, train)
from .surrogate import (FitReport, SurrogateModel, default_fit_config,
                        fit_surrogate, generate_grid, holdout_grid)
from .engine import (Constraint, DescentConfig, DivergenceError, NoFeasibleStart,
                     OptimizeResult, Solution, box_to_constraints,
                     build_descent_net, dedup_minima, optimize, run_descent,
                     select_starting_points)
from .moo import MooProblem, ParetoPoint, pareto_filter, pareto_indices, \
    solve_bounded, sweep_pareto
from .baselines import (OracleFront, PenalizedObjective, differential_evolution,
                        grid_pareto_oracle, nelder_mead, particle_swarm)
from .problems import ProblemSpec, get_problem, list_problems, load_problem_file

__all__ = [
    "Activation", "DenseLayer", "BranchLayer", "FuncBranch", "NetBranch",
    "Network", "TrainConfig", "TrainingDiverged", "activation_eval", "load",
    "save", "train",
    "FitReport", "SurrogateModel", "default_fit_config", "fit_surrogate",
    "generate_grid", "holdout_grid",
    "Constraint", "DescentConfig", "DivergenceError", "NoFeasibleStart",
    "OptimizeResult", "Solution", "box_to_constraints", "build_descent_net",
    "dedup_minima", "optimize", "run_descent", "select_starting_points",
    "MooProblem", "ParetoPoint", "pareto_filter", "pareto_indices",
    "solve_bounded", "sweep_pareto",
    "OracleFront", "PenalizedObjective", "differential_evolution",
    "grid_pareto_oracle", "nelder_mead", "particle_swarm",
    "ProblemSpec", "get_problem", "list_problems", "load_problem_file",
]

__version__ = "0.1.0"
