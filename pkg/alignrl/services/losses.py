"""
Reconstruction and expectile-TD losses.
"""
from typing import Optional, Tuple, Union

import torch
import torch.nn.functional as F

from alignrl.models.sequence_model import MaskedSequence, ModelOutput
from alignrl.schemas.train import LossBreakdown

Number = Union[float, torch.Tensor]


def expectile_weight(u: Number, nu: float) -> Number:
    """``|nu - 1(u < 0)|``: nu for u >= 0, 1 - nu otherwise."""
    if isinstance(u, torch.Tensor):
        return torch.where(u >= 0, torch.full_like(u, nu), torch.full_like(u, 1.0 - nu))
    return nu if u >= 0 else 1.0 - nu


def expectile_loss(u: Number, nu: float) -> Number:
    """Asymmetric squared loss ``|nu - 1(u < 0)| * u ** 2``."""
    return expectile_weight(u, nu) * u ** 2


def _masked_mean(values: torch.Tensor, valid: torch.Tensor) -> torch.Tensor:
    weights = valid.to(values.dtype)
    return (values * weights).sum() / weights.sum().clamp_min(1.0)


def recon_loss(
    output: ModelOutput,
    seq: MaskedSequence,
    return_scale: float = 1.0,
    state_std: Optional[torch.Tensor] = None,
    discrete: Optional[bool] = None,
) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """
    Per-modality reconstruction losses averaged over every non-pad slot.

    Returns and states are compared in normalised units (returns divided by
    ``return_scale``, states by ``state_std``). Continuous actions use squared
    error; discrete actions use categorical NLL of the logits.
    """
    valid = ~seq.pad
    dtype = output.returns.dtype

    ret_err = ((output.returns - seq.returns.to(dtype)) / return_scale) ** 2
    state_diff = output.states - seq.states.to(dtype)
    if state_std is not None:
        state_diff = state_diff / state_std.to(dtype)
    state_err = (state_diff ** 2).mean(dim=-1)

    if discrete is None:
        discrete = seq.actions.dtype == torch.long
    if discrete:
        logits = output.actions
        action_err = F.cross_entropy(
            logits.reshape(-1, logits.shape[-1]), seq.actions.reshape(-1), reduction="none"
        ).reshape(seq.actions.shape)
    else:
        action_err = ((output.actions - seq.actions.to(dtype)) ** 2).mean(dim=-1)

    return _masked_mean(ret_err, valid), _masked_mean(state_err, valid), _masked_mean(action_err, valid)


def td_targets(
    q: torch.Tensor,
    seq: MaskedSequence,
    gamma: float,
    next_q: Optional[torch.Tensor] = None,
) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    In-window TD targets and the mask of slots that have one.

    Slot ``t`` bootstraps from ``t + 1`` when both are real; the final step of
    an episode targets its reward alone. ``next_q`` replaces the detached
    bootstrap values when given.
    """
    bootstrap = q.detach() if next_q is None else next_q
    rewards = seq.rewards.to(q.dtype)
    real = ~seq.pad
    terminal = seq.terminals & real

    targets = rewards.clone()
    valid = terminal.clone()
    if q.shape[1] > 1:
        has_next = real[:, :-1] & real[:, 1:] & ~seq.terminals[:, :-1]
        targets[:, :-1] = torch.where(has_next, rewards[:, :-1] + gamma * bootstrap[:, 1:], targets[:, :-1])
        valid[:, :-1] = valid[:, :-1] | has_next
    return targets, valid


def q_loss(
    output: ModelOutput,
    seq: MaskedSequence,
    gamma: float,
    nu: float,
    return_scale: float = 1.0,
    next_q: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """
    Expectile TD loss averaged over slots with a target.

    Residuals ``u = r_t + gamma * stopgrad(q_{t+1}) - q_t`` are divided by
    ``return_scale`` before weighting.
    """
    targets, valid = td_targets(output.q, seq, gamma, next_q)
    u = (targets - output.q) / return_scale
    return _masked_mean(expectile_loss(u, nu), valid)


def total_loss(
    output: ModelOutput,
    seq: MaskedSequence,
    gamma: float,
    nu: float,
    return_scale: float = 1.0,
    state_std: Optional[torch.Tensor] = None,
    recon_weight: float = 1.0,
    q_weight: float = 1.0,
    next_q: Optional[torch.Tensor] = None,
) -> Tuple[torch.Tensor, LossBreakdown]:
    """``recon_weight * (L_R + L_s + L_a) + q_weight * L_Q`` and its breakdown."""
    recon_r, recon_s, recon_a = recon_loss(output, seq, return_scale, state_std)
    loss_q = q_loss(output, seq, gamma, nu, return_scale, next_q)
    total = recon_weight * (recon_r + recon_s + recon_a) + q_weight * loss_q
    breakdown = LossBreakdown(
        recon_return=float(recon_r),
        recon_state=float(recon_s),
        recon_action=float(recon_a),
        q_loss=float(loss_q),
        total=float(total),
    )
    return total, breakdown
