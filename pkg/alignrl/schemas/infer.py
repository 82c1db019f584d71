"""
Inference schemas.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class QMode(str, Enum):
    """How candidate action-values are scored."""
    ONE_PASS = "one_pass"
    TWO_PASS = "two_pass"


class InferConfig(BaseModel):
    """
    Double-check inference and online fine-tuning settings.

    ``delta`` defaults to ``delta_fraction * r_max``; online rollouts use
    ``online_delta_fraction * r_max`` and Boltzmann selection at ``beta``.
    """
    model_config = ConfigDict(extra="forbid")

    n_candidates: int = Field(300, ge=1, description="Candidate count N")
    delta: Optional[float] = Field(None, ge=0.0, description="Return-ball radius")
    delta_fraction: float = Field(0.05, ge=0.0)
    target: Optional[float] = Field(None, description="Target return R")
    gamma: Optional[float] = Field(None, gt=0.0, le=1.0, description="Defaults to the checkpoint's gamma")
    beta: float = Field(100.0, ge=0.0, description="Boltzmann inverse temperature")
    seed: int = 0
    q_mode: QMode = QMode.ONE_PASS

    online_episodes: int = Field(200, ge=0, description="Interaction budget in episodes")
    online_updates: int = Field(200, ge=0, description="Gradient updates after each episode")
    online_buffer_percent: float = Field(5.0, gt=0.0, le=100.0)
    online_delta_fraction: float = Field(2.0, ge=0.0)
    online_warmup_steps: int = Field(0, ge=0, description="Warmup length of the online optimizer")

    def resolve_delta(self, r_max: float) -> float:
        if self.delta is not None:
            return self.delta
        return self.delta_fraction * abs(r_max)


@dataclass(eq=False)
class CandidateSet:
    """Index-aligned sampled returns, proposed actions and their action-values."""
    returns: np.ndarray
    actions: np.ndarray
    q: np.ndarray

    def __post_init__(self) -> None:
        if not len(self.returns) == len(self.actions) == len(self.q):
            raise ValueError(
                f"candidate fields disagree in length: returns={len(self.returns)}, "
                f"actions={len(self.actions)}, q={len(self.q)}"
            )

    def __len__(self) -> int:
        return len(self.q)
