"""Enumerative world-model agent: Turing-machine worlds, exact model search,
lexicographic grade planning and randomness-extended models."""

from artifact.grades import RewardMap, distance, set_sum, success, tolerance_select
from artifact.planner import PlannerConfig, choose_action, oracle_expectimax
from artifact.search import History, ModelSet, find_min_k, find_models, refine_models
from artifact.stochastic import (
    find_stoch_models,
    natural_extension,
    stoch_choose_action,
)
from artifact.turing import (
    CapacityError,
    DetWorldModel,
    TransitionTable,
    eval_world_step,
)

__version__ = "0.1.0"

__all__ = [
    "CapacityError",
    "DetWorldModel",
    "History",
    "ModelSet",
    "PlannerConfig",
    "RewardMap",
    "TransitionTable",
    "choose_action",
    "distance",
    "eval_world_step",
    "find_min_k",
    "find_models",
    "find_stoch_models",
    "natural_extension",
    "oracle_expectimax",
    "refine_models",
    "set_sum",
    "stoch_choose_action",
    "success",
    "tolerance_select",
]
