"""
Training schemas: mask schedule, optimisation constants and loss reports.
"""
from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class MaskMode(str, Enum):
    RANDOM = "random"
    AUTOREGRESSIVE = "autoregressive"
    MIXED = "mixed"


class MaskSchedule(BaseModel):
    """
    Per-batch mask draws.

    In ``mixed`` mode each batch is autoregressive with probability
    ``p_autoregressive`` and random otherwise. Both modes draw their ratio
    from the one ``ratios`` list.
    """
    model_config = ConfigDict(extra="forbid")

    mode: MaskMode = MaskMode.MIXED
    ratios: List[float] = Field(default_factory=lambda: [0.6, 0.7, 0.8, 0.85, 0.9, 0.95, 1.0])
    p_autoregressive: float = Field(0.5, ge=0.0, le=1.0)

    @field_validator("ratios")
    @classmethod
    def _check_ratios(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("ratio list must not be empty")
        if any(not 0.0 < ratio <= 1.0 for ratio in value):
            raise ValueError("mask ratios must lie in (0, 1]")
        return value


class TrainConfig(BaseModel):
    """Optimisation constants of the joint reconstruction + expectile-TD objective."""
    model_config = ConfigDict(extra="forbid")

    nu: float = Field(0.7, gt=0.0, lt=1.0, description="Expectile of the TD loss")
    gamma: Optional[float] = Field(None, ge=0.0, le=1.0, description="Defaults to the dataset's gamma")
    lr: float = Field(1e-4, ge=0.0)
    weight_decay: float = Field(0.005, ge=0.0)
    q_lr: Optional[float] = Field(None, ge=0.0, description="Q-head learning rate; defaults to lr")
    q_weight_decay: float = Field(5e-4, ge=0.0)
    betas: Tuple[float, float] = (0.9, 0.999)
    warmup_steps: int = Field(2000, ge=0)
    total_steps: int = Field(50_000, ge=0)
    batch_size: int = Field(256, ge=1)
    recon_weight: float = Field(1.0, ge=0.0)
    q_weight: float = Field(1.0, ge=0.0)
    seed: int = 0
    log_every: int = Field(100, ge=1)
    checkpoint_every: int = Field(0, ge=0, description="0 disables periodic checkpoints")
    mask: MaskSchedule = Field(default_factory=MaskSchedule)

    @model_validator(mode="after")
    def _check_schedule(self) -> "TrainConfig":
        if self.warmup_steps > self.total_steps:
            raise ValueError(f"warmup_steps {self.warmup_steps} exceeds total_steps {self.total_steps}")
        return self

    @property
    def head_lr(self) -> float:
        return self.lr if self.q_lr is None else self.q_lr


class LossBreakdown(BaseModel):
    """Loss components of one step; ``total`` is their (weighted) sum."""
    recon_return: float
    recon_state: float
    recon_action: float
    q_loss: float
    total: float

    def as_dict(self) -> Dict[str, float]:
        return self.model_dump()
