"""The boosting loop: collect, fit the discriminator, fit a weak learner, mix.

Each round rolls out the newest weak learner, adds its samples to the
replay buffer, fits ``g`` on the buffer weighted by the current ensemble
weights, trains the next weak learner on reward ``-g`` and mixes it into
the ensemble at rate ``mix_weight``. With ``oracle_mode`` the two inner
fits are replaced by their exact solutions, which turns the loop into
Frank-Wolfe on the occupancy polytope.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from ._rng import as_generator
from .divergence import (
    DEFAULT_CLIP,
    Discriminator,
    ExpertDataset,
    discriminator_reward,
    empirical_variational_objective,
    optimal_discriminator,
    reverse_kl,
    train_discriminator,
)
from .ensemble import PolicyEnsemble, ensemble_occupancy, init_ensemble, mix_in
from .mdp import (
    MarkovPolicy,
    OccupancyMeasure,
    TabularMdp,
    check_mdp,
    collect_steps,
    exact_occupancy,
    occupancy_return,
    policy_return,
    soft_value,
    soft_value_iteration,
    softmax_policy,
)
from .replay import TransitionDataset, WeightedReplayBuffer

KL_SMOOTHING = 1e-6


@dataclass
class AilboostConfig:
    rounds: int = 100
    samples_per_round: int = 1000
    mix_weight: float = 0.05
    disc_steps: int = 100
    policy_steps: int = 1000
    disc_lr: float = 0.5
    batch_size: int = 256
    temperature: float = 0.05
    td_lr: float = 0.1
    clip_bound: float = DEFAULT_CLIP
    termination: str = "geometric"
    horizon: int = 500
    seed: int = 0
    oracle_mode: bool = False
    oracle_temperature: float = 1e-6
    oracle_iters: int = 20000
    weight_sync: str = "ensemble"
    disc_warm_start: bool = True
    max_components: Optional[int] = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("rounds", "samples_per_round", "batch_size", "horizon", "oracle_iters"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("disc_steps", "policy_steps"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0.0 < self.mix_weight < 1.0:
            raise ValueError("mix_weight must lie in (0, 1)")
        for name in ("disc_lr", "temperature", "td_lr", "clip_bound", "oracle_temperature"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.termination not in ("geometric", "horizon"):
            raise ValueError(f"unknown termination {self.termination!r}")
        if self.weight_sync not in ("ensemble", "lagged"):
            raise ValueError(f"unknown weight_sync {self.weight_sync!r}")

    def replace(self, **changes) -> "AilboostConfig":
        return dataclasses.replace(self, **changes)


# optimisation schedules swept for robustness: (policy updates, discriminator updates)
SCHEDULES = {
    "p1000_d100": (1000, 100),
    "p1000_d10": (1000, 10),
    "p1000_d1": (1000, 1),
    "p100_d100": (100, 100),
}
SCHEDULE_LABELS = {
    "p1000_d100": "1000 policy updates per 100 discriminator updates",
    "p1000_d10": "1000 policy updates per 10 discriminator updates",
    "p1000_d1": "1000 policy updates per 1 discriminator update",
    "p100_d100": "100 policy updates per 100 discriminator updates",
}


@dataclass(frozen=True)
class IterationMetrics:
    round: int
    env_steps: int
    reverse_kl: float
    disc_objective: float
    mean_return: float
    normalized_score: float
    fw_gap: float


class NonFiniteError(FloatingPointError):
    """Raised when ``g``, ``Q`` or the weights stop being finite; keeps the metrics so far."""

    def __init__(self, message: str, metrics: List[IterationMetrics], dump: dict):
        super().__init__(message)
        self.metrics = metrics
        self.dump = dump


def normalized_score(mean_return: float, expert_return: float, random_return: float) -> float:
    denom = expert_return - random_return
    if denom == 0 or not math.isfinite(denom):
        raise ValueError("expert and random returns coincide; score is undefined")
    return (mean_return - random_return) / denom


@dataclass
class SoftQResult:
    policy: MarkovPolicy
    q_values: np.ndarray


def weak_learner_update(
    mdp: TabularMdp,
    policy_init: MarkovPolicy,
    buffer: WeightedReplayBuffer,
    reward_table,
    policy_steps: int,
    temperature: float,
    lr_q: float = 0.1,
    seed=None,
    q_init: Optional[np.ndarray] = None,
    batch_size: int = 256,
) -> SoftQResult:
    """Tabular soft Q-learning on uniform replay samples.

    ``Q`` starts from ``q_init`` or, failing that, from
    ``temperature * log(policy_init)``, whose softmax is ``policy_init``.
    Each step draws ``batch_size`` transitions uniformly from the buffer,
    looks their rewards up in ``reward_table`` (so stored rewards always
    reflect the latest table) and moves every touched ``Q(s, a)`` by
    ``lr_q`` times its mean TD error. Returns ``softmax(Q / temperature)``.
    """
    if not buffer.datasets:
        raise ValueError("replay buffer is empty")
    reward = np.asarray(reward_table, dtype=float)
    if q_init is None:
        with np.errstate(divide="ignore"):
            q = temperature * np.log(policy_init.probs)
        q = np.maximum(q, -1e6)
    else:
        q = np.array(q_init, dtype=float)
    if policy_steps == 0:
        return SoftQResult(policy_init, q)
    rng = as_generator(seed)
    S, A = mdp.shape
    gamma = mdp.discount
    flat_q = q.reshape(-1)
    # all draws up front: row k is the minibatch of step k
    b = buffer.sample_uniform(policy_steps * batch_size, rng)
    cells = (b.states * A + b.actions).reshape(policy_steps, batch_size)
    rewards = reward[b.states, b.actions].reshape(policy_steps, batch_size)
    next_states = b.next_states.reshape(policy_steps, batch_size)
    live = gamma * ~b.terminals.reshape(policy_steps, batch_size)
    for k in range(policy_steps):
        c = cells[k]
        td = rewards[k] + live[k] * soft_value(q, temperature)[next_states[k]] - flat_q[c]
        count = np.bincount(c, minlength=S * A)
        total = np.bincount(c, weights=td, minlength=S * A)
        hit = count > 0
        flat_q[hit] += lr_q * total[hit] / count[hit]
    if not np.all(np.isfinite(q)):
        raise FloatingPointError("soft Q-learning diverged")
    return SoftQResult(softmax_policy(q, temperature), q)


def collect_dataset(mdp, policy, config, rng, learner_round) -> TransitionDataset:
    trajs = collect_steps(mdp, policy, config.samples_per_round, config.termination, config.horizon, rng)
    return TransitionDataset.from_trajectories(trajs, learner_round)


def _buffer_weights(ensemble: PolicyEnsemble, mode: str) -> np.ndarray:
    """Per-dataset weights for round ``t``, when the buffer holds ``D_1..D_t``.

    ``"ensemble"``: the current ensemble weights, so ``D_i`` carries the
    weight of the policy that produced it and the weighted buffer estimates
    the current mixture occupancy. ``"lagged"`` (ablation): the previous
    round's weights on ``D_1..D_{t-1}`` and zero on the newest dataset.
    """
    w = ensemble.weight_array
    if mode == "lagged" and len(w) > 1:
        old = w[:-1] / w[:-1].sum()
        w = np.append(old, 0.0)
    return w


def reference_returns(mdp: TabularMdp, expert_occupancy: OccupancyMeasure):
    """Exact discounted returns of the expert and of the uniform policy (NaN without env reward)."""
    if mdp.env_reward is None:
        return float("nan"), float("nan")
    expert = occupancy_return(mdp, expert_occupancy, mdp.env_reward)
    rand = policy_return(mdp, MarkovPolicy.uniform(*mdp.shape), mdp.env_reward)
    return expert, rand


def score_occupancy(mdp, occupancy, expert_occupancy, expert_return, random_return):
    kl = reverse_kl(occupancy, expert_occupancy, KL_SMOOTHING)
    if mdp.env_reward is None:
        return kl, float("nan"), float("nan")
    ret = occupancy_return(mdp, occupancy, mdp.env_reward)
    try:
        score = normalized_score(ret, expert_return, random_return)
    except ValueError:
        score = float("nan")
    return kl, ret, score


def _guard(arrays: dict, metrics, round_index):
    for name, arr in arrays.items():
        if arr is not None and not np.all(np.isfinite(arr)):
            raise NonFiniteError(
                f"non-finite values in {name} at round {round_index}",
                list(metrics),
                {k: (None if v is None else np.array(v)) for k, v in arrays.items()},
            )


def run_ailboost(
    mdp: TabularMdp,
    expert_data: ExpertDataset,
    expert_occupancy: Optional[OccupancyMeasure] = None,
    config: Optional[AilboostConfig] = None,
    callback: Optional[Callable[[IterationMetrics], None]] = None,
    initial_policy: Optional[MarkovPolicy] = None,
    trace: Optional[list] = None,
):
    """Run the boosting loop and return ``(ensemble, metrics)``.

    ``callback`` receives each round's metrics as soon as they exist.
    ``trace``, if a list, receives a dict per round with the discriminator,
    the buffer weights used to fit it and the incremental occupancy.
    Without ``expert_occupancy`` the KL, return and score columns are NaN
    (and oracle mode is unavailable).
    """
    config = config or AilboostConfig()
    config.validate()
    check_mdp(mdp)
    S, A = mdp.shape
    expert_data.check(S, A)
    if config.oracle_mode and expert_occupancy is None:
        raise ValueError("oracle mode needs the exact expert occupancy")
    rng = as_generator(config.seed)
    if expert_occupancy is None:
        expert_return = random_return = float("nan")
    else:
        expert_return, random_return = reference_returns(mdp, expert_occupancy)

    policy = initial_policy or MarkovPolicy.uniform(S, A)
    ensemble = init_ensemble(policy)
    occupancy = exact_occupancy(mdp, policy).mass
    buffer = WeightedReplayBuffer()
    q = np.zeros((S, A))
    v_oracle = None
    g = None
    metrics: List[IterationMetrics] = []

    for t in range(1, config.rounds + 1):
        buffer.append_dataset(collect_dataset(mdp, policy, config, rng, t))
        buffer.set_weights(_buffer_weights(ensemble, config.weight_sync))

        if config.oracle_mode:
            disc = optimal_discriminator(occupancy, expert_occupancy, config.clip_bound)
        else:
            disc = train_discriminator(
                expert_data,
                buffer,
                config.disc_steps,
                config.disc_lr,
                config.batch_size,
                config.clip_bound,
                rng,
                init=g if config.disc_warm_start else None,
                shape=(S, A),
            )
        g = disc.g
        reward = discriminator_reward(disc)

        if config.oracle_mode:
            sol = soft_value_iteration(
                mdp, reward, config.oracle_temperature, iters=config.oracle_iters, tol=1e-12, v_init=v_oracle
            )
            v_oracle = sol.v_values
            new_policy = sol.greedy_policy
        else:
            res = weak_learner_update(
                mdp, policy, buffer, reward, config.policy_steps, config.temperature, config.td_lr, rng, q_init=q,
                batch_size=config.batch_size,
            )
            q, new_policy = res.q_values, res.policy
        _guard({"g": g, "Q": q, "weights": ensemble.weight_array}, metrics, t)

        new_occ = exact_occupancy(mdp, new_policy).mass
        fw_gap = float(np.sum((occupancy - new_occ) * g))
        disc_obj = empirical_variational_objective(disc, expert_data, buffer)

        ensemble = mix_in(ensemble, new_policy, config.mix_weight, config.max_components)
        if config.max_components is None:
            occupancy = (1 - config.mix_weight) * occupancy + config.mix_weight * new_occ
        else:
            occupancy = ensemble_occupancy(mdp, ensemble).mass
        if trace is not None:
            trace.append(
                {"round": t, "g": g, "buffer_weights": buffer.weights.copy(), "occupancy": occupancy.copy(),
                 "new_occupancy": new_occ, "new_policy": new_policy}
            )
        policy = new_policy

        if expert_occupancy is None:
            kl = ret = score = float("nan")
        else:
            kl, ret, score = score_occupancy(mdp, occupancy, expert_occupancy, expert_return, random_return)
        m = IterationMetrics(t, t * config.samples_per_round, kl, disc_obj, ret, score, fw_gap)
        metrics.append(m)
        if callback is not None:
            callback(m)
    return ensemble, metrics
