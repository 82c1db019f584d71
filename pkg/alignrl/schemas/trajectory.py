"""
Trajectory value types shared by every module.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List

import numpy as np


class ActionKind(str, Enum):
    """Action space families."""
    CONTINUOUS = "continuous"
    DISCRETE = "discrete"


@dataclass(eq=False)
class Trajectory:
    """
    One episode: aligned states, actions, rewards and returns-to-go.

    ``actions`` is ``(T, action_dim)`` float64 for continuous spaces and
    ``(T,)`` int64 for discrete ones. ``info`` holds optional per-step audit
    arrays (rollout traces) of length T.
    """
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    returns: np.ndarray
    info: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        lengths = {len(self.states), len(self.actions), len(self.rewards), len(self.returns)}
        if len(lengths) != 1:
            raise ValueError(
                f"Trajectory fields disagree in length: states={len(self.states)}, "
                f"actions={len(self.actions)}, rewards={len(self.rewards)}, returns={len(self.returns)}"
            )

    @property
    def horizon(self) -> int:
        return len(self.rewards)

    @property
    def initial_return(self) -> float:
        """Discounted return from the first step, 0.0 for an empty episode."""
        return float(self.returns[0]) if self.horizon else 0.0

    @property
    def achieved_return(self) -> float:
        """Undiscounted sum of rewards."""
        return float(np.sum(self.rewards))


@dataclass(eq=False)
class Dataset:
    """A static offline dataset of trajectories from one environment."""
    gamma: float
    env_id: str
    state_dim: int
    action_dim: int
    action_kind: ActionKind
    trajectories: List[Trajectory]
    r_max: float

    def __len__(self) -> int:
        return len(self.trajectories)

    @property
    def is_discrete(self) -> bool:
        return self.action_kind == ActionKind.DISCRETE

    @property
    def n_transitions(self) -> int:
        return int(sum(traj.horizon for traj in self.trajectories))


@dataclass(eq=False)
class SubTrajectory:
    """
    A length-K window ending at ``end`` within its source trajectory.

    Positions before the episode start are pad slots: ``pad`` is True there
    and the stored values are zeros. ``terminals`` marks the slot holding the
    final step of the episode, if it falls inside the window.
    """
    returns: np.ndarray
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    pad: np.ndarray
    terminals: np.ndarray
    start: int
    end: int

    @property
    def context_length(self) -> int:
        return len(self.returns)

    @property
    def n_real(self) -> int:
        return int((~self.pad).sum())
