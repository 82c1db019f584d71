"""
Sequence model configuration.
"""
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from alignrl.schemas.trajectory import ActionKind

# token order within one timestep
RETURN_SLOT, STATE_SLOT, ACTION_SLOT = 0, 1, 2
SLOTS_PER_STEP = 3


class ModelConfig(BaseModel):
    """
    Architecture of the masked encoder-decoder.

    ``state_dim``/``action_dim``/``action_kind`` are filled from the training
    dataset, as are the normalisation constants ``return_scale`` and
    ``state_mean``/``state_std``.
    """
    model_config = ConfigDict(extra="forbid")

    context_len: int = Field(4, ge=1, description="Window length K")
    embed_dim: int = Field(64, ge=1)
    encoder_layers: int = Field(2, ge=1)
    decoder_layers: int = Field(1, ge=1)
    n_heads: int = Field(4, ge=1)
    mlp_ratio: int = Field(4, ge=1, description="Feed-forward width as a multiple of embed_dim")
    dropout: float = Field(0.1, ge=0.0, lt=1.0)
    recon_head_layers: int = Field(1, ge=1, le=2, description="1 = affine head, 2 = MLP with LayerNorm")
    q_layers: int = Field(2, ge=1)
    q_hidden: int = Field(64, ge=1)

    action_kind: ActionKind = ActionKind.CONTINUOUS
    state_dim: int = Field(1, ge=1)
    action_dim: int = Field(1, ge=1, description="Action dimension or discrete action count")

    return_scale: float = Field(1.0, gt=0.0)
    state_mean: Optional[List[float]] = None
    state_std: Optional[List[float]] = None

    @model_validator(mode="after")
    def _check_shapes(self) -> "ModelConfig":
        if self.embed_dim % self.n_heads:
            raise ValueError(f"embed_dim {self.embed_dim} is not divisible by n_heads {self.n_heads}")
        for name in ("state_mean", "state_std"):
            value = getattr(self, name)
            if value is not None and len(value) != self.state_dim:
                raise ValueError(f"{name} has length {len(value)}, expected state_dim {self.state_dim}")
        if self.state_std is not None and any(std <= 0 for std in self.state_std):
            raise ValueError("state_std entries must be positive")
        return self

    @property
    def is_discrete(self) -> bool:
        return self.action_kind == ActionKind.DISCRETE

    @property
    def n_tokens(self) -> int:
        return SLOTS_PER_STEP * self.context_len

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.n_heads
