"""Scikit-learn style wrappers.

Each imitator is constructed with the environment and its hyperparameters,
fitted on expert ``(states, actions)`` pairs, and then behaves like a
classifier from states to actions: ``predict_proba`` returns the action
distribution of the learned (mixture) policy at each state and ``predict``
its most likely action. ``get_params``/``set_params``/``clone`` work as for
any estimator because ``__init__`` only stores arguments.

>>> from ailboost.harness.envs import chain
>>> from ailboost.estimators import BehaviorCloning
>>> bc = BehaviorCloning(env=chain(4)).fit([0, 1, 2], [1, 1, 1])
>>> bc.predict([0, 1, 2]).tolist()
[1, 1, 1]
"""
from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .baselines import DacConfig, behavior_cloning, run_dac, run_gail_onpolicy
from .boosting import AilboostConfig, run_ailboost
from .divergence import ExpertDataset
from .ensemble import ensemble_occupancy, init_ensemble
from .mdp import OccupancyMeasure, TabularMdp, check_mdp, exact_occupancy


def check_env(env) -> TabularMdp:
    if not isinstance(env, TabularMdp):
        raise TypeError(f"env must be a TabularMdp, got {type(env).__name__}")
    check_mdp(env)
    return env


def check_states(states, env: TabularMdp) -> np.ndarray:
    """1-d integer state indices inside the environment."""
    s = np.asarray(states)
    if s.ndim == 2 and s.shape[1] == 1:
        s = s[:, 0]
    if s.ndim != 1:
        raise ValueError(f"states must be 1-d, got shape {s.shape}")
    if s.size and not np.all(np.equal(np.mod(s, 1), 0)):
        raise ValueError("states must be integer indices")
    s = s.astype(np.int64)
    if s.size and (s.min() < 0 or s.max() >= env.num_states):
        raise ValueError(f"state index outside [0, {env.num_states})")
    return s


def check_demonstrations(states, actions, env: TabularMdp):
    """Validate paired expert states and actions; returns integer arrays."""
    s = check_states(states, env)
    a = np.asarray(actions)
    if a.ndim != 1 or a.shape != s.shape:
        raise ValueError(f"actions must be 1-d with the same length as states ({s.size}), got shape {a.shape}")
    if s.size == 0:
        raise ValueError("no demonstrations given")
    if not np.all(np.equal(np.mod(a, 1), 0)):
        raise ValueError("actions must be integer indices")
    a = a.astype(np.int64)
    if a.min() < 0 or a.max() >= env.num_actions:
        raise ValueError(f"action index outside [0, {env.num_actions})")
    return s, a


def _check_occupancy(occ, env: TabularMdp) -> Optional[OccupancyMeasure]:
    if occ is None:
        return None
    occ = occ if isinstance(occ, OccupancyMeasure) else OccupancyMeasure(np.asarray(occ, dtype=float))
    if occ.mass.shape != env.shape:
        raise ValueError(f"expert occupancy has shape {occ.mass.shape}, expected {env.shape}")
    return occ


class _Imitator(ClassifierMixin, BaseEstimator):
    """Shared prediction side: state -> action distribution of ``policy_``."""

    def predict_proba(self, states) -> np.ndarray:
        check_is_fitted(self, "policy_")
        return self.policy_.probs[check_states(states, self.env)]

    def predict(self, states) -> np.ndarray:
        return np.argmax(self.predict_proba(states), axis=1)

    def _finish(self, env, ensemble, metrics):
        self.ensemble_ = ensemble
        self.metrics_ = metrics
        self.occupancy_ = ensemble_occupancy(env, ensemble)
        # a mixture executed per episode has the same occupancy as this Markov policy
        self.policy_ = self.occupancy_.conditional_policy()
        self.classes_ = np.arange(env.num_actions)
        return self


class AILBoost(_Imitator):
    """Boosted adversarial imitation; the fitted object is a weighted policy ensemble."""

    def __init__(
        self,
        env=None,
        rounds=100,
        samples_per_round=1000,
        mix_weight=0.05,
        disc_steps=100,
        policy_steps=1000,
        disc_lr=0.5,
        batch_size=256,
        temperature=0.05,
        td_lr=0.1,
        clip_bound=10.0,
        oracle_mode=False,
        random_state=None,
    ):
        self.env = env
        self.rounds = rounds
        self.samples_per_round = samples_per_round
        self.mix_weight = mix_weight
        self.disc_steps = disc_steps
        self.policy_steps = policy_steps
        self.disc_lr = disc_lr
        self.batch_size = batch_size
        self.temperature = temperature
        self.td_lr = td_lr
        self.clip_bound = clip_bound
        self.oracle_mode = oracle_mode
        self.random_state = random_state

    def _config(self) -> AilboostConfig:
        params = self.get_params()
        params.pop("env")
        seed = params.pop("random_state")
        return AilboostConfig(seed=seed, **params)

    def fit(self, states, actions, expert_occupancy=None):
        env = check_env(self.env)
        s, a = check_demonstrations(states, actions, env)
        occ = _check_occupancy(expert_occupancy, env)
        ens, metrics = run_ailboost(env, ExpertDataset(s, a, "fit"), occ, self._config())
        return self._finish(env, ens, metrics)


class DAC(_Imitator):
    """Single-policy adversarial imitation with an unweighted replay buffer."""

    _on_policy = False

    def __init__(
        self,
        env=None,
        rounds=100,
        samples_per_round=1000,
        disc_steps=100,
        policy_steps=1000,
        disc_lr=0.5,
        batch_size=256,
        temperature=0.05,
        td_lr=0.1,
        reward_form="airl",
        random_state=None,
    ):
        self.env = env
        self.rounds = rounds
        self.samples_per_round = samples_per_round
        self.disc_steps = disc_steps
        self.policy_steps = policy_steps
        self.disc_lr = disc_lr
        self.batch_size = batch_size
        self.temperature = temperature
        self.td_lr = td_lr
        self.reward_form = reward_form
        self.random_state = random_state

    def fit(self, states, actions, expert_occupancy=None):
        env = check_env(self.env)
        s, a = check_demonstrations(states, actions, env)
        occ = _check_occupancy(expert_occupancy, env)
        params = self.get_params()
        params.pop("env")
        cfg = DacConfig(seed=params.pop("random_state"), **params)
        runner = run_gail_onpolicy if self._on_policy else run_dac
        policy, metrics = runner(env, ExpertDataset(s, a, "fit"), occ, cfg)
        return self._finish(env, init_ensemble(policy), metrics)


class GAIL(DAC):
    """Like :class:`DAC`, but each round's discriminator sees only that round's samples."""

    _on_policy = True


class BehaviorCloning(_Imitator):
    """Smoothed empirical action frequencies per state; uniform at unseen states."""

    def __init__(self, env=None, smoothing=0.0):
        self.env = env
        self.smoothing = smoothing

    def fit(self, states, actions, expert_occupancy=None):
        env = check_env(self.env)
        s, a = check_demonstrations(states, actions, env)
        policy = behavior_cloning(ExpertDataset(s, a, "fit"), *env.shape, smoothing=self.smoothing)
        self.ensemble_ = init_ensemble(policy)
        self.metrics_ = []
        self.occupancy_ = exact_occupancy(env, policy)
        self.policy_ = policy
        self.classes_ = np.arange(env.num_actions)
        return self
