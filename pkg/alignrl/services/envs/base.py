"""
Common environment interface.

Environments are immutable descriptions of dynamics: ``reset`` and ``step``
take and return explicit hidden-state values and draw randomness only from
the generator passed in, so one environment object can serve any number of
independent rollouts.
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, Tuple, Union

import numpy as np

from alignrl.core.exceptions import UsageError
from alignrl.schemas.trajectory import ActionKind

Action = Union[int, np.ndarray]


@dataclass(frozen=True)
class StepResult:
    """Outcome of one environment transition."""
    state: Any
    observation: np.ndarray
    reward: float
    done: bool
    info: Dict[str, Any] = field(default_factory=dict)


class Environment(ABC):
    """Base class for the toolkit's environments."""

    env_id: str
    action_kind: ActionKind
    state_dim: int
    action_dim: int
    max_steps: int

    @abstractmethod
    def reset(self, rng: np.random.Generator) -> Tuple[Any, np.ndarray]:
        """Draw an initial hidden state and its observation."""

    @abstractmethod
    def step(self, state: Any, action: Action, rng: np.random.Generator) -> StepResult:
        """Advance one step from ``state``."""

    @property
    def is_discrete(self) -> bool:
        return self.action_kind == ActionKind.DISCRETE

    def check_action(self, action: Action) -> Action:
        """
        Normalise an action for this space.

        Continuous actions are clipped to [-1, 1]; discrete actions must be
        integral indices in range.

        Raises:
            UsageError: If a discrete action index is invalid
        """
        if self.is_discrete:
            value = np.asarray(action)
            if value.size != 1 or value.dtype.kind not in "iu":
                raise UsageError(f"discrete action must be an integer index, got {action!r}")
            index = int(value.reshape(()))
            if not 0 <= index < self.action_dim:
                raise UsageError(f"action index {index} outside [0, {self.action_dim})")
            return index
        value = np.asarray(action, dtype=np.float64).reshape(self.action_dim)
        if not np.all(np.isfinite(value)):
            raise UsageError(f"continuous action must be finite, got {action!r}")
        return np.clip(value, -1.0, 1.0)


def env_reset(env: Environment, rng: np.random.Generator) -> Tuple[Any, np.ndarray]:
    """Reset ``env`` with ``rng``; returns (hidden state, observation)."""
    return env.reset(rng)


def env_step(
    env: Environment, state: Any, action: Action, rng: np.random.Generator
) -> Tuple[Any, np.ndarray, float, bool]:
    """Step ``env``; returns (next_state, observation, reward, done)."""
    result = env.step(state, action, rng)
    return result.state, result.observation, result.reward, result.done
