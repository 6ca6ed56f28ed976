"""Solving engines: greedy best-buddy placement, GA, and flow matching."""

from .flow import (
    AssignmentState,
    CfmLoss,
    ConstantScorer,
    FlowConfig,
    FlowResult,
    FlowTrainingExample,
    LinearScorer,
    LinearScorerParams,
    NeighborCompatScorer,
    OracleScorer,
    TrainResult,
    cfm_gradient,
    cfm_loss,
    feature_tensor,
    flow_solve,
    greedy_assignment,
    sample_interpolant,
    train_linear_scorer,
)
from .genetic import GaConfig, GaResult, ga_solve, layout_fitness, pmx_crossover
from .greedy import GreedyResult, greedy_solve

__all__ = [
    "AssignmentState",
    "CfmLoss",
    "ConstantScorer",
    "FlowConfig",
    "FlowResult",
    "FlowTrainingExample",
    "GaConfig",
    "GaResult",
    "GreedyResult",
    "LinearScorer",
    "LinearScorerParams",
    "NeighborCompatScorer",
    "OracleScorer",
    "TrainResult",
    "cfm_gradient",
    "cfm_loss",
    "feature_tensor",
    "flow_solve",
    "ga_solve",
    "greedy_assignment",
    "greedy_solve",
    "layout_fitness",
    "pmx_crossover",
    "sample_interpolant",
    "train_linear_scorer",
]
