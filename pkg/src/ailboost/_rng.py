"""Seed handling.

All randomness flows through :class:`numpy.random.Generator` backed by
PCG64, which produces the same stream for the same seed on every platform
numpy supports. Nothing in the package touches global random state.
"""
import numpy as np


def as_generator(seed=None) -> np.random.Generator:
    """Return ``seed`` if it is already a Generator, else ``default_rng(seed)``."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, (np.random.RandomState,)):
        raise TypeError("pass an int seed or numpy.random.Generator, not RandomState")
    return np.random.default_rng(seed)
