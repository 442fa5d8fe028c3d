"""Reverse KL between occupancies and its variational discriminator.

The variational functional is

    J(g) = E_{d_e}[-exp(g)] + E_{d}[g],

which is concave in ``g`` and maximised by the log density ratio
``g* = ln(d / d_e)``. Its maximum value is ``KL(d || d_e) - 1``. The
maximiser doubles as the functional gradient of the KL with respect to
``d`` (up to an additive constant), and ``-g`` is the reward handed to the
weak learner.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._rng import as_generator
from .mdp import OccupancyMeasure
from .replay import WeightedReplayBuffer

DEFAULT_CLIP = 10.0


@dataclass(frozen=True, eq=False)
class Discriminator:
    g: np.ndarray
    clip_bound: float = DEFAULT_CLIP

    def __post_init__(self):
        g = np.array(self.g, dtype=float)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("discriminator has non-finite entries")
        if np.any(np.abs(g) > self.clip_bound):
            raise ValueError("discriminator entries exceed the clip bound")
        g.setflags(write=False)
        object.__setattr__(self, "g", g)

    @classmethod
    def zeros(cls, num_states: int, num_actions: int, clip_bound: float = DEFAULT_CLIP):
        return cls(np.zeros((num_states, num_actions)), clip_bound)


@dataclass(frozen=True, eq=False)
class ExpertDataset:
    """Expert ``(state, action)`` pairs plus a free-form provenance tag."""

    states: np.ndarray
    actions: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        s = np.asarray(self.states, dtype=np.int64)
        a = np.asarray(self.actions, dtype=np.int64)
        if s.shape != a.shape or s.ndim != 1:
            raise ValueError("states and actions must be vectors of equal length")
        s.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "states", s)
        object.__setattr__(self, "actions", a)

    def __len__(self):
        return len(self.states)

    @classmethod
    def from_trajectories(cls, trajectories, provenance: str = "") -> "ExpertDataset":
        steps = [st for tr in trajectories for st in tr.steps]
        return cls([st.state for st in steps], [st.action for st in steps], provenance)

    def check(self, num_states: Optional[int] = None, num_actions: Optional[int] = None) -> None:
        if len(self) == 0:
            raise ValueError("expert dataset is empty")
        if self.states.min() < 0 or self.actions.min() < 0:
            raise ValueError("negative index in expert dataset")
        if num_states is not None and self.states.max() >= num_states:
            raise ValueError("expert state index out of range")
        if num_actions is not None and self.actions.max() >= num_actions:
            raise ValueError("expert action index out of range")

    def empirical(self, num_states: int, num_actions: int) -> np.ndarray:
        self.check(num_states, num_actions)
        table = np.zeros((num_states, num_actions))
        np.add.at(table, (self.states, self.actions), 1.0 / len(self))
        return table


def _mass(d) -> np.ndarray:
    return d.mass if isinstance(d, OccupancyMeasure) else np.asarray(d, dtype=float)


def reverse_kl(d, d_e, smoothing: float = 0.0) -> float:
    """``KL(d || d_e)`` with ``d_e`` mixed towards uniform by ``smoothing``.

    Returns ``inf`` when ``d`` puts mass where the (smoothed) expert has none.
    """
    p, q = _mass(d), _mass(d_e)
    if smoothing < 0:
        raise ValueError("smoothing must be non-negative")
    if smoothing:
        q = (1 - smoothing) * q + smoothing / q.size
    on = p > 0
    if np.any(q[on] <= 0):
        return float("inf")
    return float(np.sum(p[on] * np.log(p[on] / q[on])))


def optimal_discriminator(d, d_e, clip_bound: float = DEFAULT_CLIP) -> Discriminator:
    """Clipped log density ratio, the exact maximiser of the variational functional.

    Cells with ``d = 0`` are pinned to ``-clip_bound``; cells with
    ``d_e = 0 < d`` to ``+clip_bound``.
    """
    p, q = _mass(d), _mass(d_e)
    g = np.full(p.shape, -clip_bound)
    both = (p > 0) & (q > 0)
    g[both] = np.log(p[both] / q[both])
    g[(p > 0) & (q <= 0)] = clip_bound
    return Discriminator(np.clip(g, -clip_bound, clip_bound), clip_bound)


def _table(g) -> np.ndarray:
    return g.g if isinstance(g, Discriminator) else np.asarray(g, dtype=float)


def variational_objective(g, d, d_e) -> float:
    """Exact ``E_{d_e}[-exp(g)] + E_d[g]`` from occupancy tables."""
    t = _table(g)
    return float(-np.sum(_mass(d_e) * np.exp(t)) + np.sum(_mass(d) * t))


def empirical_variational_objective(g, expert_data: ExpertDataset, buffer: WeightedReplayBuffer) -> float:
    """Sample version: expert mean of ``-exp(g)`` plus the weighted buffer mean of ``g``."""
    if len(expert_data) == 0:
        raise ValueError("expert dataset is empty")
    t = _table(g)
    expert_term = -float(np.mean(np.exp(t[expert_data.states, expert_data.actions])))
    return expert_term + buffer.weighted_expectation(t)


def objective_gradient(g, expert_table: np.ndarray, buffer_table: np.ndarray) -> np.ndarray:
    """Gradient of the empirical objective w.r.t. each table entry: ``p - q * exp(g)``."""
    return buffer_table - expert_table * np.exp(_table(g))


def train_discriminator(
    expert_data: ExpertDataset,
    buffer: WeightedReplayBuffer,
    steps: int,
    lr: float,
    batch_size: Optional[int] = 256,
    clip_bound: float = DEFAULT_CLIP,
    seed=None,
    init=None,
    shape=None,
    history: Optional[list] = None,
) -> Discriminator:
    """Projected stochastic gradient ascent on the empirical objective.

    Each step draws ``batch_size`` expert pairs uniformly and
    ``batch_size`` buffer pairs by weighted two-stage sampling. An expert
    sample contributes ``-exp(g)/batch`` to its cell's gradient, a buffer
    sample ``+1/batch``. Entries are clipped to ``[-clip_bound, clip_bound]``
    after every step. ``batch_size=None`` uses exact full-batch gradients.

    ``g`` starts at zero unless ``init`` is given. If ``history`` is a list,
    the full-batch objective after every step is appended to it.
    """
    if len(expert_data) == 0:
        raise ValueError("expert dataset is empty")
    if not buffer.datasets:
        raise ValueError("replay buffer is empty")
    if shape is None:
        shape = _infer_shape(expert_data, buffer)
    S, A = shape
    g = np.zeros(shape) if init is None else np.array(_table(init), dtype=float)
    if steps == 0:
        return Discriminator(g, clip_bound)
    rng = as_generator(seed)
    full = batch_size is None
    if full or history is not None:
        q_hat = expert_data.empirical(S, A)
        p_hat = buffer.weighted_counts(S, A)
    for _ in range(steps):
        if full:
            grad = objective_gradient(g, q_hat, p_hat)
        else:
            e_idx = rng.integers(0, len(expert_data), size=batch_size)
            es, ea = expert_data.states[e_idx], expert_data.actions[e_idx]
            b = buffer.sample_weighted(batch_size, rng)
            grad = np.zeros(shape)
            np.add.at(grad, (b.states, b.actions), 1.0 / batch_size)
            np.add.at(grad, (es, ea), -np.exp(g[es, ea]) / batch_size)
        g = np.clip(g + lr * grad, -clip_bound, clip_bound)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("discriminator diverged")
        if history is not None:
            history.append(float(-np.sum(q_hat * np.exp(g)) + np.sum(p_hat * g)))
    return Discriminator(g, clip_bound)


def _infer_shape(expert_data: ExpertDataset, buffer: WeightedReplayBuffer):
    S = max(int(expert_data.states.max()), *(int(max(d.states.max(), d.next_states.max())) for d in buffer.datasets)) + 1
    A = max(int(expert_data.actions.max()), *(int(d.actions.max()) for d in buffer.datasets)) + 1
    return S, A


def discriminator_reward(g) -> np.ndarray:
    """Weak-learner reward ``-g``."""
    return -_table(g)
