"""Baselines sharing the boosting loop's machinery.

``run_dac`` trains a logistic discriminator on the unweighted replay buffer
and keeps a single policy, ``run_gail_onpolicy`` trains it on the newest
round's data only, and ``behavior_cloning`` fits the smoothed empirical
conditional. Rollouts, soft Q-learning and metrics are the same code paths
as in :mod:`ailboost.boosting`, so comparisons isolate how discriminator
data is used.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np
from scipy.special import expit, log_expit

from ._rng import as_generator
from .boosting import (
    AilboostConfig,
    IterationMetrics,
    _guard,
    collect_dataset,
    reference_returns,
    score_occupancy,
    weak_learner_update,
)
from .divergence import ExpertDataset
from .mdp import MarkovPolicy, OccupancyMeasure, TabularMdp, check_mdp, exact_occupancy
from .replay import WeightedReplayBuffer

LOGIT_CLIP = 10.0


@dataclass(frozen=True, eq=False)
class BinaryDiscriminator:
    """Logit table; ``D = sigmoid(logits)`` with buffer samples labelled 1 and expert samples 0."""

    logits: np.ndarray

    def __post_init__(self):
        z = np.array(self.logits, dtype=float)
        if not np.all(np.isfinite(z)):
            raise FloatingPointError("non-finite logits")
        z = np.clip(z, -LOGIT_CLIP, LOGIT_CLIP)
        z.setflags(write=False)
        object.__setattr__(self, "logits", z)

    @property
    def prob(self) -> np.ndarray:
        return expit(self.logits)

    def reward(self, form: str = "airl") -> np.ndarray:
        """``log(1 - D) - log D`` (``"airl"``, equal to ``-logits``) or ``-log D`` (``"neg_log_d"``)."""
        if form == "airl":
            return -self.logits
        if form == "neg_log_d":
            return -log_expit(self.logits)
        raise ValueError(f"unknown reward form {form!r}")


def logistic_objective(logits, expert_table: np.ndarray, buffer_table: np.ndarray) -> float:
    """``E_buffer[log D] + E_expert[log(1 - D)]`` from empirical tables."""
    z = np.asarray(logits, dtype=float)
    return float(np.sum(buffer_table * log_expit(z)) + np.sum(expert_table * log_expit(-z)))


def logistic_gradient(logits, expert_table: np.ndarray, buffer_table: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    return buffer_table * expit(-z) - expert_table * expit(z)


def train_binary_discriminator(
    expert_data: ExpertDataset,
    buffer: WeightedReplayBuffer,
    steps: int,
    lr: float,
    batch_size: Optional[int] = 256,
    seed=None,
    init=None,
    shape=None,
) -> BinaryDiscriminator:
    """Gradient ascent on the logistic objective with uniform buffer samples.

    ``batch_size=None`` uses the exact full-batch gradient.
    """
    if len(expert_data) == 0:
        raise ValueError("expert dataset is empty")
    if not buffer.datasets:
        raise ValueError("replay buffer is empty")
    S, A = shape
    z = np.zeros(shape) if init is None else np.array(init, dtype=float)
    rng = as_generator(seed)
    if batch_size is None:
        q_hat = expert_data.empirical(S, A)
        p_hat = buffer.uniform_counts(S, A)
    for _ in range(steps):
        if batch_size is None:
            grad = logistic_gradient(z, q_hat, p_hat)
        else:
            e_idx = rng.integers(0, len(expert_data), size=batch_size)
            es, ea = expert_data.states[e_idx], expert_data.actions[e_idx]
            b = buffer.sample_uniform(batch_size, rng)
            grad = np.zeros(shape)
            np.add.at(grad, (b.states, b.actions), expit(-z[b.states, b.actions]) / batch_size)
            np.add.at(grad, (es, ea), -expit(z[es, ea]) / batch_size)
        z = np.clip(z + lr * grad, -LOGIT_CLIP, LOGIT_CLIP)
    return BinaryDiscriminator(z)


def behavior_cloning(expert_data: ExpertDataset, num_states: int, num_actions: int, smoothing: float = 0.0) -> MarkovPolicy:
    """``pi(a|s) = (count(s, a) + k) / (count(s) + k A)``; unvisited states get the uniform policy."""
    if smoothing < 0:
        raise ValueError("smoothing must be non-negative")
    expert_data.check(num_states, num_actions)
    counts = np.zeros((num_states, num_actions))
    np.add.at(counts, (expert_data.states, expert_data.actions), 1.0)
    counts += smoothing
    totals = counts.sum(axis=1, keepdims=True)
    probs = np.full(counts.shape, 1.0 / num_actions)
    seen = totals[:, 0] > 0
    probs[seen] = counts[seen] / totals[seen]
    return MarkovPolicy(probs)


@dataclass
class DacConfig(AilboostConfig):
    reward_form: str = "airl"

    def validate(self):
        super().validate()
        if self.reward_form not in ("airl", "neg_log_d"):
            raise ValueError(f"unknown reward_form {self.reward_form!r}")


def _single_policy_loop(
    mdp: TabularMdp,
    expert_data: ExpertDataset,
    expert_occupancy: Optional[OccupancyMeasure],
    config: DacConfig,
    on_policy: bool,
    callback: Optional[Callable[[IterationMetrics], None]],
    sizes: Optional[list],
):
    config.validate()
    check_mdp(mdp)
    S, A = mdp.shape
    expert_data.check(S, A)
    rng = as_generator(config.seed)
    if expert_occupancy is None:
        expert_return = random_return = float("nan")
    else:
        expert_return, random_return = reference_returns(mdp, expert_occupancy)
    q_hat = expert_data.empirical(S, A)

    policy = MarkovPolicy.uniform(S, A)
    occupancy = exact_occupancy(mdp, policy).mass
    buffer = WeightedReplayBuffer()
    q = np.zeros((S, A))
    z = None
    metrics: List[IterationMetrics] = []
    for t in range(1, config.rounds + 1):
        data = collect_dataset(mdp, policy, config, rng, t)
        if on_policy:
            buffer = WeightedReplayBuffer()
        buffer.append_dataset(data)
        if sizes is not None:
            sizes.append(buffer.n_records)
        disc = train_binary_discriminator(
            expert_data, buffer, config.disc_steps, config.disc_lr, config.batch_size, rng,
            init=z if config.disc_warm_start else None, shape=(S, A),
        )
        z = disc.logits
        res = weak_learner_update(
            mdp, policy, buffer, disc.reward(config.reward_form), config.policy_steps, config.temperature,
            config.td_lr, rng, q_init=q, batch_size=config.batch_size,
        )
        q, new_policy = res.q_values, res.policy
        _guard({"logits": z, "Q": q}, metrics, t)

        new_occ = exact_occupancy(mdp, new_policy).mass
        fw_gap = float(np.sum((occupancy - new_occ) * z))
        disc_obj = logistic_objective(z, q_hat, buffer.uniform_counts(S, A))
        policy, occupancy = new_policy, new_occ
        if expert_occupancy is None:
            kl = ret = score = float("nan")
        else:
            kl, ret, score = score_occupancy(mdp, occupancy, expert_occupancy, expert_return, random_return)
        m = IterationMetrics(t, t * config.samples_per_round, kl, disc_obj, ret, score, fw_gap)
        metrics.append(m)
        if callback is not None:
            callback(m)
    return policy, metrics


def run_dac(
    mdp: TabularMdp,
    expert_data: ExpertDataset,
    expert_occupancy: Optional[OccupancyMeasure] = None,
    config: Optional[DacConfig] = None,
    callback=None,
):
    """Off-policy adversarial imitation with an unweighted replay buffer. Returns ``(policy, metrics)``."""
    return _single_policy_loop(mdp, expert_data, expert_occupancy, config or DacConfig(), False, callback, None)


def run_gail_onpolicy(
    mdp: TabularMdp,
    expert_data: ExpertDataset,
    expert_occupancy: Optional[OccupancyMeasure] = None,
    config: Optional[DacConfig] = None,
    callback=None,
    sizes: Optional[list] = None,
):
    """Same loop, but discriminator and weak learner only ever see the newest round's samples.

    If ``sizes`` is a list, the number of records available to the
    discriminator in each round is appended to it.
    """
    return _single_policy_loop(mdp, expert_data, expert_occupancy, config or DacConfig(), True, callback, sizes)
