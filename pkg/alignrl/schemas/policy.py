"""
Behavior policy schemas.
"""
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from alignrl.core.exceptions import UsageError


class PolicyKind(str, Enum):
    """Behavior policy families selectable by ``policy.kind``."""
    SOC = "soc"
    MIXTURE = "mixture"
    EPSGREEDY = "epsgreedy"


class PolicyConfig(BaseModel):
    """Behavior policy section of the experiment configuration."""
    model_config = ConfigDict(extra="forbid", use_enum_values=False)

    kind: PolicyKind = Field(PolicyKind.MIXTURE, description="soc | mixture | epsgreedy")
    alpha: float = Field(0.25, ge=0.0, le=1.0, description="SoC recency step size")
    q0_draws: int = Field(10_000, ge=1, description="Monte-Carlo draws per action for Q_0(a)")
    q0_seed: int = Field(0, description="Seed of the Q_0 estimate")
    sigma: float = Field(0.1, ge=0.0, description="Per-step Gaussian jitter of the dial mixture")
    bias_low: float = Field(-1.0, ge=-1.0, le=1.0)
    bias_high: float = Field(1.0, ge=-1.0, le=1.0)
    epsilon_low: float = Field(0.0, ge=0.0, le=1.0, description="Lower bound of the per-episode epsilon")
    epsilon_high: float = Field(1.0, ge=0.0, le=1.0, description="Upper bound of the per-episode epsilon")

    @model_validator(mode="after")
    def _check_ranges(self) -> "PolicyConfig":
        if self.bias_low > self.bias_high:
            raise ValueError("bias_low must not exceed bias_high")
        if self.epsilon_low > self.epsilon_high:
            raise ValueError("epsilon_low must not exceed epsilon_high")
        return self

    def mixture_spec(self) -> "MixturePolicySpec":
        return MixturePolicySpec(sigma=self.sigma, bias_low=self.bias_low, bias_high=self.bias_high)

    def epsilon_spec(self) -> "EpsilonGreedySpec":
        return EpsilonGreedySpec(epsilon_low=self.epsilon_low, epsilon_high=self.epsilon_high)


class MixturePolicySpec(BaseModel):
    """
    Per-episode constant-bias family for the dial task.

    Each episode draws ``b ~ U[bias_low, bias_high]`` and then plays
    ``clip(b + sigma * N(0, 1), -1, 1)`` at every step.
    """
    model_config = ConfigDict(frozen=True)

    sigma: float = Field(0.1, ge=0.0)
    bias_low: float = -1.0
    bias_high: float = 1.0


class EpsilonGreedySpec(BaseModel):
    """Per-episode epsilon ``~ U[epsilon_low, epsilon_high]`` around a greedy controller."""
    model_config = ConfigDict(frozen=True)

    epsilon_low: float = Field(0.0, ge=0.0, le=1.0)
    epsilon_high: float = Field(1.0, ge=0.0, le=1.0)


@dataclass(frozen=True)
class SocPolicyState:
    """
    Standard-of-care bandit state.

    ``values`` holds the recency-weighted estimates Q(a); ``shifts`` is the
    (n_actions, obs_dim) symptom shift table used to build the safe set.
    """
    values: np.ndarray
    alpha: float
    danger_threshold: float
    shifts: np.ndarray

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise UsageError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.shifts.shape[0] != self.values.shape[0]:
            raise UsageError("shift table and value estimates disagree on the action count")

    @property
    def danger_level(self) -> float:
        return 1.0 - self.danger_threshold / 2.0

    @property
    def n_actions(self) -> int:
        return int(self.values.shape[0])

    def with_values(self, values: np.ndarray) -> "SocPolicyState":
        return replace(self, values=values)
