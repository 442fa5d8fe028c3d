"""Expert construction and demonstration sampling."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np

from ..divergence import ExpertDataset
from ..mdp import (
    MarkovPolicy,
    OccupancyMeasure,
    TabularMdp,
    Trajectory,
    exact_occupancy,
    policy_return,
    rollouts,
    value_iteration,
)


@dataclass
class ExpertStats:
    policy: MarkovPolicy
    occupancy: OccupancyMeasure
    expert_return: float
    random_return: float


def expert_policy(mdp: TabularMdp) -> MarkovPolicy:
    if mdp.env_reward is None:
        raise ValueError("expert construction needs env_reward")
    return value_iteration(mdp, mdp.env_reward, tol=1e-12).greedy_policy


def expert_stats(mdp: TabularMdp) -> ExpertStats:
    pi = expert_policy(mdp)
    return ExpertStats(
        pi,
        exact_occupancy(mdp, pi),
        policy_return(mdp, pi, mdp.env_reward),
        policy_return(mdp, MarkovPolicy.uniform(*mdp.shape), mdp.env_reward),
    )


def finite_horizon_return(mdp: TabularMdp, policy: MarkovPolicy, reward, horizon: int) -> float:
    """Exact ``E[sum_{t<horizon} gamma^t r_t]`` by propagating the state distribution."""
    r = np.asarray(reward, dtype=float)
    P_pi = np.einsum("sa,sat->st", policy.probs, mdp.transition)
    r_pi = np.sum(policy.probs * r, axis=1)
    dist = np.array(mdp.init_dist, dtype=float)
    total = 0.0
    for t in range(horizon):
        total += mdp.discount**t * float(dist @ r_pi)
        dist = dist @ P_pi
    return total


def generate_expert(mdp: TabularMdp, n_trajectories: int, termination: str = "geometric", horizon: int = 200, seed=None):
    """Roll out the value-iteration expert.

    Returns ``(dataset, trajectories, stats)`` where the stats hold exact
    discounted returns of the expert and of the uniform-random policy.
    """
    if n_trajectories < 1:
        raise ValueError("n_trajectories must be at least 1")
    stats = expert_stats(mdp)
    trajs: List[Trajectory] = rollouts(mdp, stats.policy, n_trajectories, termination, horizon, seed)
    data = ExpertDataset.from_trajectories(trajs, provenance=f"value_iteration_expert seed={seed}")
    return data, trajs, stats
