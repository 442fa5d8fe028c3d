"""Adversarial imitation learning by gradient boosting in occupancy space, on tabular MDPs."""
from .baselines import DacConfig, behavior_cloning, run_dac, run_gail_onpolicy
from .boosting import AilboostConfig, IterationMetrics, run_ailboost, weak_learner_update
from .divergence import (
    Discriminator,
    ExpertDataset,
    optimal_discriminator,
    reverse_kl,
    train_discriminator,
    variational_objective,
)
from .ensemble import PolicyEnsemble, ensemble_occupancy, evaluate_ensemble, init_ensemble, mix_in
from .estimators import DAC, GAIL, AILBoost, BehaviorCloning
from .mdp import (
    MarkovPolicy,
    OccupancyMeasure,
    TabularMdp,
    exact_occupancy,
    policy_return,
    rollout,
    soft_value_iteration,
    validate_mdp,
    value_iteration,
)
from .replay import TransitionDataset, WeightedReplayBuffer

__version__ = "0.1.0"

__all__ = [
    "AILBoost",
    "AilboostConfig",
    "BehaviorCloning",
    "DAC",
    "DacConfig",
    "Discriminator",
    "ExpertDataset",
    "GAIL",
    "IterationMetrics",
    "MarkovPolicy",
    "OccupancyMeasure",
    "PolicyEnsemble",
    "TabularMdp",
    "TransitionDataset",
    "WeightedReplayBuffer",
    "behavior_cloning",
    "ensemble_occupancy",
    "evaluate_ensemble",
    "exact_occupancy",
    "init_ensemble",
    "mix_in",
    "optimal_discriminator",
    "policy_return",
    "reverse_kl",
    "rollout",
    "run_ailboost",
    "run_dac",
    "run_gail_onpolicy",
    "soft_value_iteration",
    "train_discriminator",
    "validate_mdp",
    "value_iteration",
    "variational_objective",
    "weak_learner_update",
]
