"""Weighted policy ensembles.

An ensemble is executed by drawing one component with probability equal
to its weight at the start of an episode and following it for the whole
episode. Its occupancy is therefore the weight-convex combination of the
component occupancies.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ._rng import as_generator
from .mdp import (
    MarkovPolicy,
    OccupancyMeasure,
    TabularMdp,
    _rollout,
    _Sampler,
    check_mdp,
    check_policy,
    check_reward,
    exact_occupancy,
)

WEIGHT_TOL = 1e-12


class InvalidEnsembleError(ValueError):
    pass


def weight_violations(weights) -> list:
    w = np.asarray(weights, dtype=float)
    out = []
    if w.ndim != 1 or w.size == 0:
        return ["weights must be a non-empty vector"]
    if not np.all(np.isfinite(w)):
        out.append("weights contain non-finite values")
    if (w < 0).any():
        out.append(f"negative weights at {np.flatnonzero(w < 0).tolist()}")
    if abs(w.sum() - 1.0) > WEIGHT_TOL:
        out.append(f"weights sum to {w.sum():.15g}, not 1")
    return out


@dataclass(frozen=True, eq=False)
class PolicyEnsemble:
    weights: Tuple[float, ...]
    policies: Tuple[MarkovPolicy, ...]

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "policies", tuple(self.policies))
        if len(self.weights) != len(self.policies):
            raise InvalidEnsembleError("weights and policies differ in length")

    def __len__(self):
        return len(self.policies)

    @property
    def components(self):
        return list(zip(self.weights, self.policies))

    @property
    def weight_array(self) -> np.ndarray:
        return np.array(self.weights)

    def check(self) -> None:
        problems = weight_violations(self.weights)
        if problems:
            raise InvalidEnsembleError("; ".join(problems))


def init_ensemble(policy: MarkovPolicy) -> PolicyEnsemble:
    check_policy(policy)
    return PolicyEnsemble((1.0,), (policy,))


def mix_in(
    ensemble: PolicyEnsemble,
    new_policy: MarkovPolicy,
    alpha: float,
    max_components: Optional[int] = None,
) -> PolicyEnsemble:
    """Scale existing weights by ``1 - alpha`` and append ``new_policy`` at weight ``alpha``.

    Weights are renormalised after the update so the simplex invariant
    survives hundreds of rounds of floating-point drift. With
    ``max_components`` set, only the newest components are kept.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"mixing weight must lie in (0, 1), got {alpha}")
    ensemble.check()
    weights = np.append(np.array(ensemble.weights) * (1.0 - alpha), alpha)
    policies = ensemble.policies + (new_policy,)
    if max_components is not None and len(policies) > max_components:
        weights = weights[-max_components:]
        policies = policies[-max_components:]
    weights = weights / weights.sum()
    return PolicyEnsemble(tuple(weights), policies)


def closed_form_weights(n_components: int, alpha: float) -> np.ndarray:
    """Weights after ``n_components - 1`` mixes at rate ``alpha`` starting from one policy."""
    T = n_components
    i = np.arange(1, T + 1)
    w = alpha * (1 - alpha) ** (T - i)
    w[0] = (1 - alpha) ** (T - 1)
    return w


def sample_component(ensemble: PolicyEnsemble, seed=None) -> int:
    problems = weight_violations(ensemble.weights)
    if problems:
        raise InvalidEnsembleError("; ".join(problems))
    rng = as_generator(seed)
    return _draw_component(np.cumsum(ensemble.weights), rng)


def _draw_component(cdf: np.ndarray, rng) -> int:
    return min(int(np.searchsorted(cdf, rng.random(), side="right")), len(cdf) - 1)


def ensemble_occupancy(mdp: TabularMdp, ensemble: PolicyEnsemble) -> OccupancyMeasure:
    ensemble.check()
    mass = np.zeros(mdp.shape)
    for w, pi in ensemble.components:
        if w > 0:
            mass += w * exact_occupancy(mdp, pi).mass
    return OccupancyMeasure(mass)


@dataclass(frozen=True)
class EvaluationResult:
    """Monte-Carlo evaluation summary.

    ``mean_return`` estimates the discounted return from ``init_dist``.
    ``mean_episode_sum`` is the plain undiscounted reward sum per episode.
    """

    mean_return: float
    std_error: float
    mean_episode_sum: float
    std_error_episode_sum: float
    n_episodes: int


def ensemble_rollouts(
    mdp: TabularMdp,
    ensemble: PolicyEnsemble,
    n_episodes: int,
    termination: str = "geometric",
    horizon: int = 200,
    seed=None,
):
    """Yield ``(component_index, trajectory)`` pairs, one component per episode."""
    check_mdp(mdp)
    ensemble.check()
    rng = as_generator(seed)
    cdf = np.cumsum(ensemble.weights)
    samplers = {}
    for _ in range(n_episodes):
        i = _draw_component(cdf, rng)
        if i not in samplers:
            check_policy(ensemble.policies[i], mdp)
            samplers[i] = _Sampler(mdp, ensemble.policies[i])
        yield i, _rollout(samplers[i], mdp.discount, termination, horizon, rng)


def evaluate_ensemble(
    mdp: TabularMdp,
    ensemble: PolicyEnsemble,
    reward=None,
    n_episodes: int = 1000,
    termination: str = "geometric",
    horizon: int = 200,
    seed=None,
) -> EvaluationResult:
    """Monte-Carlo return of the ensemble.

    With geometric termination the undiscounted episode sum is already an
    unbiased estimate of the discounted return, so it is used as is; with
    a fixed horizon the rewards are discounted explicitly.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be at least 1")
    if reward is None:
        if mdp.env_reward is None:
            raise ValueError("no reward given and the MDP has no env_reward")
        reward = mdp.env_reward
    reward = check_reward(mdp, reward)
    disc, plain = [], []
    for _, traj in ensemble_rollouts(mdp, ensemble, n_episodes, termination, horizon, seed):
        r = reward[traj.states, traj.actions]
        plain.append(r.sum())
        if termination == "geometric":
            disc.append(r.sum())
        else:
            disc.append(np.sum(r * mdp.discount ** np.arange(len(r))))
    disc, plain = np.array(disc), np.array(plain)
    return EvaluationResult(float(disc.mean()), _std_error(disc), float(plain.mean()), _std_error(plain), n_episodes)


def _std_error(x: np.ndarray) -> float:
    return float(x.std(ddof=1) / np.sqrt(len(x))) if len(x) > 1 else 0.0
