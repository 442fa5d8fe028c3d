"""Weighted replay buffer.

One dataset per weak learner, each carrying the ensemble weight of the
policy that generated it. Weighted draws pick a dataset by weight and then
a record uniformly inside it, so per-dataset empirical means enter with
exactly their weight even when dataset sizes differ.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from ._rng import as_generator
from .ensemble import weight_violations


class StaleWeightsError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class TransitionDataset:
    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray
    learner_round: int = 0

    def __post_init__(self):
        n = len(self.states)
        for name in ("states", "actions", "next_states"):
            arr = np.asarray(getattr(self, name), dtype=np.int64)
            if arr.shape != (n,):
                raise ValueError(f"{name} must be a vector of length {n}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        term = np.asarray(self.terminals, dtype=bool)
        if term.shape != (n,):
            raise ValueError(f"terminals must be a vector of length {n}")
        term.setflags(write=False)
        object.__setattr__(self, "terminals", term)

    def __len__(self):
        return len(self.states)

    @classmethod
    def from_trajectories(cls, trajectories, learner_round: int = 0) -> "TransitionDataset":
        steps = [st for tr in trajectories for st in tr.steps]
        return cls(
            np.array([st.state for st in steps], dtype=np.int64),
            np.array([st.action for st in steps], dtype=np.int64),
            np.array([st.next_state for st in steps], dtype=np.int64),
            np.array([st.terminal for st in steps], dtype=bool),
            learner_round,
        )

    def check_bounds(self, num_states: int, num_actions: int) -> None:
        if len(self) and (
            self.states.min() < 0
            or self.states.max() >= num_states
            or self.next_states.min() < 0
            or self.next_states.max() >= num_states
            or self.actions.min() < 0
            or self.actions.max() >= num_actions
        ):
            raise ValueError("dataset indices out of MDP bounds")


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray
    origins: np.ndarray


class WeightedReplayBuffer:
    """Append-only list of datasets with synchronised per-dataset weights.

    Appending a dataset marks the weights stale; weighted sampling and
    weighted expectations refuse to run until :meth:`set_weights` is called
    again. Uniform sampling ignores the weights and is always allowed.
    """

    def __init__(self):
        self.datasets: List[TransitionDataset] = []
        self.weights: Optional[np.ndarray] = None
        self.stale = False
        self._flat = None

    def __len__(self):
        return len(self.datasets)

    @property
    def n_records(self) -> int:
        return int(self._flatten()[-1][-1]) if self.datasets else 0

    def append_dataset(self, dataset: TransitionDataset) -> "WeightedReplayBuffer":
        if len(dataset) == 0:
            raise ValueError("cannot append an empty dataset")
        self.datasets.append(dataset)
        self.stale = True
        self._flat = None
        return self

    def set_weights(self, weights: Sequence[float]) -> "WeightedReplayBuffer":
        w = np.asarray(weights, dtype=float)
        if w.shape != (len(self.datasets),):
            raise ValueError(f"got {w.size} weights for {len(self.datasets)} datasets")
        problems = weight_violations(w)
        if problems:
            raise ValueError("; ".join(problems))
        self.weights = w.copy()
        self.weights.setflags(write=False)
        self.stale = False
        return self

    def _check_synced(self):
        if not self.datasets:
            raise ValueError("replay buffer is empty")
        if self.stale or self.weights is None:
            raise StaleWeightsError("weights not synchronized with datasets")

    def _flatten(self):
        if self._flat is None:
            sizes = np.array([len(d) for d in self.datasets])
            self._flat = (
                np.concatenate([d.states for d in self.datasets]),
                np.concatenate([d.actions for d in self.datasets]),
                np.concatenate([d.next_states for d in self.datasets]),
                np.concatenate([d.terminals for d in self.datasets]),
                np.repeat(np.arange(len(sizes)), sizes),
                np.concatenate([[0], np.cumsum(sizes)]),
            )
        return self._flat

    def _batch(self, idx: np.ndarray) -> Batch:
        s, a, s2, done, origin, _ = self._flatten()
        return Batch(s[idx], a[idx], s2[idx], done[idx], origin[idx])

    def sample_weighted(self, batch_size: int, seed=None) -> Batch:
        """Draw a dataset by weight, then a record uniformly within it."""
        if batch_size < 1:
            raise ValueError("batch_size must be positive")
        self._check_synced()
        rng = as_generator(seed)
        *_, offsets = self._flatten()
        sizes = np.diff(offsets)
        which = rng.choice(len(self.datasets), size=batch_size, p=self.weights)
        within = np.floor(rng.random(batch_size) * sizes[which]).astype(np.int64)
        return self._batch(offsets[which] + within)

    def sample_uniform(self, batch_size: int, seed=None) -> Batch:
        """Uniform over the union of all records, regardless of weights."""
        if batch_size < 1:
            raise ValueError("batch_size must be positive")
        if not self.datasets:
            raise ValueError("replay buffer is empty")
        rng = as_generator(seed)
        s, a, s2, done, origin, offsets = self._flatten()
        idx = rng.integers(0, offsets[-1], size=batch_size)
        return Batch(s[idx], a[idx], s2[idx], done[idx], origin[idx])

    def record_probabilities(self) -> np.ndarray:
        """Exact per-record probability under :meth:`sample_weighted`."""
        self._check_synced()
        *_, offsets = self._flatten()
        sizes = np.diff(offsets)
        return np.repeat(self.weights / sizes, sizes)

    def weighted_expectation(self, f: Callable) -> float:
        """``sum_i w_i * mean_{(s, a) in D_i} f(s, a)``.

        ``f`` is called with integer arrays of states and actions and must
        return an array of values; a 2-d table is also accepted and indexed.
        """
        self._check_synced()
        total = 0.0
        for w, d in zip(self.weights, self.datasets):
            vals = f[d.states, d.actions] if isinstance(f, np.ndarray) else f(d.states, d.actions)
            total += w * float(np.mean(vals))
        return total

    def weighted_counts(self, num_states: int, num_actions: int) -> np.ndarray:
        """Empirical mixture distribution ``sum_i w_i * Uniform(D_i)`` as an ``(S, A)`` table."""
        self._check_synced()
        table = np.zeros((num_states, num_actions))
        for w, d in zip(self.weights, self.datasets):
            np.add.at(table, (d.states, d.actions), w / len(d))
        return table

    def uniform_counts(self, num_states: int, num_actions: int) -> np.ndarray:
        if not self.datasets:
            raise ValueError("replay buffer is empty")
        s, a, *_ = self._flatten()
        table = np.zeros((num_states, num_actions))
        np.add.at(table, (s, a), 1.0 / len(s))
        return table
