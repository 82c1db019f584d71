"""
Return-to-go arithmetic.
"""
from typing import Sequence, Union

import numpy as np

from alignrl.core.exceptions import UsageError

ArrayLike = Union[Sequence[float], np.ndarray]


def _check_gamma(gamma: float) -> None:
    if not 0.0 <= gamma <= 1.0:
        raise UsageError(f"gamma must lie in [0, 1], got {gamma}")


def compute_returns(rewards: ArrayLike, gamma: float) -> np.ndarray:
    """
    Discounted returns-to-go.

    ``output[t] = sum_{i >= t} gamma**(i - t) * rewards[i]``, evaluated with
    the backward recursion so that ``output[t] == rewards[t] + gamma * output[t + 1]``
    holds exactly in floating point.

    Raises:
        UsageError: If rewards is empty or gamma lies outside [0, 1]
    """
    _check_gamma(gamma)
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.ndim != 1 or rewards.size == 0:
        raise UsageError("rewards must be a non-empty 1-D sequence")

    returns = np.empty_like(rewards)
    returns[-1] = rewards[-1]
    for t in range(rewards.size - 2, -1, -1):
        returns[t] = rewards[t] + gamma * returns[t + 1]
    return returns


def update_target_return(target: float, reward: float, gamma: float) -> float:
    """
    Roll the desired return forward one step: ``(R_t - r_t) / gamma``.

    Raises:
        UsageError: If gamma is not strictly positive
    """
    if gamma <= 0.0:
        raise UsageError(f"gamma must be > 0 to update a target return, got {gamma}")
    return (float(target) - float(reward)) / float(gamma)


def return_recursion_residual(rewards: ArrayLike, returns: ArrayLike, gamma: float) -> float:
    """Largest absolute violation of ``R_t = r_t + gamma * R_{t+1}``."""
    rewards = np.asarray(rewards, dtype=np.float64)
    returns = np.asarray(returns, dtype=np.float64)
    if rewards.size == 0:
        return 0.0
    expected = rewards.copy()
    expected[:-1] += gamma * returns[1:]
    return float(np.max(np.abs(returns - expected)))
