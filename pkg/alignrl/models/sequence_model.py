"""
Masked bidirectional encoder-decoder over (return, state, action) tokens.

Tokens are interleaved per timestep, so slot ``3 * t + m`` holds modality
``m`` (0 return, 1 state, 2 action) of window step ``t``.
"""
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from alignrl.core.exceptions import NumericError, UsageError
from alignrl.models.attention import TransformerStack
from alignrl.schemas.model import ACTION_SLOT, RETURN_SLOT, SLOTS_PER_STEP, STATE_SLOT, ModelConfig
from alignrl.schemas.trajectory import SubTrajectory

INIT_STD = 0.02


@dataclass
class MaskedSequence:
    """
    A batch of windows plus a per-token mask.

    ``mask`` is (B, 3K) over token slots; ``pad`` is (B, K) over timesteps.
    Values at masked or pad slots are kept for loss targets only.
    """
    returns: torch.Tensor
    states: torch.Tensor
    actions: torch.Tensor
    rewards: torch.Tensor
    pad: torch.Tensor
    terminals: torch.Tensor
    mask: torch.Tensor

    @property
    def batch_size(self) -> int:
        return int(self.returns.shape[0])

    @property
    def context_len(self) -> int:
        return int(self.returns.shape[1])

    @property
    def token_pad(self) -> torch.Tensor:
        """(B, 3K) pad flags broadcast to every modality slot."""
        return self.pad.repeat_interleave(SLOTS_PER_STEP, dim=1)

    @classmethod
    def from_windows(
        cls,
        windows: Sequence[SubTrajectory],
        mask: np.ndarray,
        is_discrete: bool,
        dtype: torch.dtype = torch.float32,
    ) -> "MaskedSequence":
        """Stack windows into tensors; ``mask`` is a (B, 3K) boolean array."""
        if not windows:
            raise UsageError("cannot build a batch from zero windows")
        actions = np.stack([w.actions for w in windows])
        return cls(
            returns=torch.as_tensor(np.stack([w.returns for w in windows]), dtype=dtype),
            states=torch.as_tensor(np.stack([w.states for w in windows]), dtype=dtype),
            actions=torch.as_tensor(actions, dtype=torch.long if is_discrete else dtype),
            rewards=torch.as_tensor(np.stack([w.rewards for w in windows]), dtype=dtype),
            pad=torch.as_tensor(np.stack([w.pad for w in windows]), dtype=torch.bool),
            terminals=torch.as_tensor(np.stack([w.terminals for w in windows]), dtype=torch.bool),
            mask=torch.as_tensor(np.asarray(mask), dtype=torch.bool),
        )

    def with_mask(self, mask: torch.Tensor) -> "MaskedSequence":
        return MaskedSequence(
            self.returns, self.states, self.actions, self.rewards, self.pad, self.terminals, mask
        )

    def cast(self, dtype: torch.dtype) -> "MaskedSequence":
        """Copy with floating fields in ``dtype``; discrete actions stay integral."""
        actions = self.actions if self.actions.dtype == torch.long else self.actions.to(dtype)
        return MaskedSequence(
            self.returns.to(dtype), self.states.to(dtype), actions, self.rewards.to(dtype),
            self.pad, self.terminals, self.mask,
        )


@dataclass
class ModelOutput:
    """
    Forward-pass results.

    ``returns`` and ``states`` are reconstructions in raw units; ``actions``
    are point predictions (continuous) or logits (discrete); ``q`` is the
    per-timestep action-value in return units.
    """
    latent: torch.Tensor
    returns: torch.Tensor
    states: torch.Tensor
    actions: torch.Tensor
    q: torch.Tensor
    pad: torch.Tensor


def q_value(output: ModelOutput, t: int, batch_index: int = 0) -> float:
    """
    Action-value estimate of window slot ``t``.

    Raises:
        UsageError: If ``t`` is out of range or a pad slot
    """
    context_len = output.q.shape[1]
    if not 0 <= t < context_len:
        raise UsageError(f"slot {t} outside window of length {context_len}")
    if bool(output.pad[batch_index, t]):
        raise UsageError(f"slot {t} is a pad slot and has no action-value")
    return float(output.q[batch_index, t])


def _recon_head(embed_dim: int, out_dim: int, layers: int) -> nn.Module:
    if layers == 1:
        return nn.Linear(embed_dim, out_dim)
    return nn.Sequential(
        nn.Linear(embed_dim, embed_dim),
        nn.LayerNorm(embed_dim),
        nn.GELU(),
        nn.Linear(embed_dim, out_dim),
    )


class TimestepQHeads(nn.Module):
    """An independent ReLU MLP per window timestep, applied to that step's latent."""

    def __init__(self, context_len: int, embed_dim: int, hidden: int, layers: int):
        super().__init__()
        widths = [embed_dim] + [hidden] * (layers - 1) + [1]
        self.weights = nn.ParameterList(
            nn.Parameter(torch.empty(context_len, fan_in, fan_out))
            for fan_in, fan_out in zip(widths[:-1], widths[1:])
        )
        self.biases = nn.ParameterList(
            nn.Parameter(torch.zeros(context_len, fan_out)) for fan_out in widths[1:]
        )

    def reset_parameters(self) -> None:
        for index, (weight, bias) in enumerate(zip(self.weights, self.biases)):
            if index == len(self.weights) - 1:
                nn.init.zeros_(weight)
            else:
                nn.init.trunc_normal_(weight, std=INIT_STD)
            nn.init.zeros_(bias)

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        """(B, K, D) latents to (B, K) values."""
        last = len(self.weights) - 1
        for index, (weight, bias) in enumerate(zip(self.weights, self.biases)):
            h = torch.einsum("bki,kio->bko", h, weight) + bias
            if index < last:
                h = F.relu(h)
        return h.squeeze(-1)


class SequenceModel(nn.Module):
    """Encoder-decoder with reconstruction heads and per-timestep Q heads."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        dim, n_tokens = config.embed_dim, config.n_tokens

        self.embed_return = nn.Linear(1, dim)
        self.embed_state = nn.Linear(config.state_dim, dim)
        if config.is_discrete:
            self.embed_action = nn.Embedding(config.action_dim, dim)
        else:
            self.embed_action = nn.Linear(config.action_dim, dim)
        self.mask_embedding = nn.Parameter(torch.zeros(dim))
        self.pad_embedding = nn.Parameter(torch.zeros(dim))
        self.encoder_pos = nn.Parameter(torch.zeros(n_tokens, dim))
        self.decoder_pos = nn.Parameter(torch.zeros(n_tokens, dim))
        self.embed_drop = nn.Dropout(config.dropout)

        self.encoder = TransformerStack(config.encoder_layers, dim, config.n_heads, config.mlp_ratio, config.dropout)
        self.decoder_embed = nn.Linear(dim, dim)
        self.decoder = TransformerStack(config.decoder_layers, dim, config.n_heads, config.mlp_ratio, config.dropout)

        self.return_head = _recon_head(dim, 1, config.recon_head_layers)
        self.state_head = _recon_head(dim, config.state_dim, config.recon_head_layers)
        self.action_head = _recon_head(dim, config.action_dim, config.recon_head_layers)
        self.q_heads = TimestepQHeads(config.context_len, dim, config.q_hidden, config.q_layers)

        mean = config.state_mean or [0.0] * config.state_dim
        std = config.state_std or [1.0] * config.state_dim
        self.register_buffer("state_mean", torch.tensor(mean, dtype=torch.float32))
        self.register_buffer("state_std", torch.tensor(std, dtype=torch.float32))
        self.reset_parameters()

    def reset_parameters(self) -> None:
        for module in self.modules():
            if isinstance(module, nn.Linear):
                nn.init.trunc_normal_(module.weight, std=INIT_STD)
                nn.init.zeros_(module.bias)
            elif isinstance(module, nn.Embedding):
                nn.init.trunc_normal_(module.weight, std=INIT_STD)
            elif isinstance(module, nn.LayerNorm):
                nn.init.ones_(module.weight)
                nn.init.zeros_(module.bias)
        for param in (self.mask_embedding, self.pad_embedding, self.encoder_pos, self.decoder_pos):
            nn.init.trunc_normal_(param, std=INIT_STD)
        self.q_heads.reset_parameters()

    @property
    def dtype(self) -> torch.dtype:
        return self.encoder_pos.dtype

    @property
    def return_scale(self) -> float:
        return self.config.return_scale

    def normalize_states(self, states: torch.Tensor) -> torch.Tensor:
        return (states - self.state_mean.to(states.dtype)) / self.state_std.to(states.dtype)

    def _check_inputs(self, seq: MaskedSequence) -> None:
        cfg = self.config
        batch, context_len = seq.returns.shape[:2]
        expected = {
            "states": (batch, cfg.context_len, cfg.state_dim),
            "actions": (batch, cfg.context_len) if cfg.is_discrete else (batch, cfg.context_len, cfg.action_dim),
            "pad": (batch, cfg.context_len),
            "mask": (batch, cfg.n_tokens),
        }
        if context_len != cfg.context_len:
            raise UsageError(f"window length {context_len} does not match context_len {cfg.context_len}")
        for name, shape in expected.items():
            actual = tuple(getattr(seq, name).shape)
            if actual != shape:
                raise UsageError(f"{name} has shape {actual}, expected {shape}")

    def embed(self, seq: MaskedSequence) -> torch.Tensor:
        """
        Token embeddings (B, 3K, D) with positional encodings added.

        Masked slots carry the mask embedding and pad slots the pad embedding,
        so the stored values there never reach the network.
        """
        self._check_inputs(seq)
        dtype = self.dtype
        returns = (seq.returns.to(dtype) / self.return_scale).unsqueeze(-1)
        tokens_r = self.embed_return(returns)
        tokens_s = self.embed_state(self.normalize_states(seq.states.to(dtype)))
        if self.config.is_discrete:
            tokens_a = self.embed_action(seq.actions)
        else:
            tokens_a = self.embed_action(seq.actions.to(dtype))

        tokens = torch.stack([tokens_r, tokens_s, tokens_a], dim=2)
        tokens = tokens.reshape(seq.batch_size, self.config.n_tokens, self.config.embed_dim)
        tokens = torch.where(seq.mask.unsqueeze(-1), self.mask_embedding, tokens)
        tokens = torch.where(seq.token_pad.unsqueeze(-1), self.pad_embedding, tokens)
        return tokens + self.encoder_pos

    def forward(self, seq: MaskedSequence) -> ModelOutput:
        """
        Raises:
            UsageError: If the batch does not match the configured shapes
            NumericError: If any activation is non-finite (names the batch row)
        """
        key_padding = seq.token_pad
        x = self.embed_drop(self.embed(seq))
        x = self.encoder(x, key_padding)
        x = self.decoder_embed(x) + self.decoder_pos
        latent = self.decoder(x, key_padding)

        finite = torch.isfinite(latent).flatten(1).all(dim=1)
        if not bool(finite.all()):
            bad = int(torch.nonzero(~finite)[0, 0])
            raise NumericError("non-finite activations in forward pass", batch_index=bad)

        per_step = latent.reshape(seq.batch_size, self.config.context_len, SLOTS_PER_STEP, self.config.embed_dim)
        returns = self.return_head(per_step[:, :, RETURN_SLOT]).squeeze(-1) * self.return_scale
        states_norm = self.state_head(per_step[:, :, STATE_SLOT])
        states = states_norm * self.state_std.to(latent.dtype) + self.state_mean.to(latent.dtype)
        actions = self.action_head(per_step[:, :, ACTION_SLOT])
        q = self.q_heads(per_step[:, :, ACTION_SLOT]) * self.return_scale

        return ModelOutput(latent=latent, returns=returns, states=states, actions=actions, q=q, pad=seq.pad)


def build_model(config: ModelConfig, seed: Optional[int] = None, dtype: torch.dtype = torch.float32) -> SequenceModel:
    """Construct a freshly initialised model, seeding torch's RNG when ``seed`` is given."""
    if seed is not None:
        torch.manual_seed(seed)
    return SequenceModel(config).to(dtype)


def count_parameters(model: nn.Module) -> int:
    return sum(param.numel() for param in model.parameters())
