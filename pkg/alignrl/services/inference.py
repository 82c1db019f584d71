"""
Double-check inference and aligned rollouts.

At every step the current return token is replaced by N samples from a ball
around the running target, the model proposes one action per sample, and
the action whose predicted value lies closest to the target is executed.
"""
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from scipy.special import softmax

from alignrl.core.exceptions import NumericError, UsageError
from alignrl.core.logging import get_logger
from alignrl.models.sequence_model import MaskedSequence, SequenceModel
from alignrl.schemas.infer import CandidateSet, InferConfig, QMode
from alignrl.schemas.trajectory import Dataset, SubTrajectory, Trajectory
from alignrl.services.dataset import build_trajectory, make_dataset, save_dataset
from alignrl.services.envs import Environment
from alignrl.services.envs.base import Action
from alignrl.services.masking import inference_mask
from alignrl.services.returns import update_target_return

logger = get_logger(__name__)


class Selection(str, Enum):
    DOUBLE_CHECK = "double_check"
    BOLTZMANN = "boltzmann"
    CONDITIONING = "conditioning"


def sample_returns(target: float, delta: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """
    ``n`` uniform draws from ``[target - delta, target + delta]``.

    Raises:
        UsageError: If n < 1 or delta < 0
    """
    if n < 1:
        raise UsageError(f"candidate count must be >= 1, got {n}")
    if delta < 0:
        raise UsageError(f"return-ball radius must be >= 0, got {delta}")
    return rng.uniform(target - delta, target + delta, size=n)


@dataclass
class RolloutHistory:
    """Steps taken so far, with the running target each one was taken under."""
    states: List[np.ndarray] = field(default_factory=list)
    actions: List[Action] = field(default_factory=list)
    targets: List[float] = field(default_factory=list)
    rewards: List[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.states)


def build_window(
    history: RolloutHistory,
    observation: np.ndarray,
    target: float,
    context_len: int,
    is_discrete: bool,
    action_dim: int,
) -> SubTrajectory:
    """
    Window ending at the current step: the last ``K - 1`` steps plus the
    current state, left-padded. The current action slot holds a zero placeholder.
    """
    n_past = min(context_len - 1, len(history))
    n_pad = context_len - 1 - n_past
    state_dim = np.asarray(observation).shape[-1]

    returns = np.zeros(context_len, dtype=np.float64)
    rewards = np.zeros(context_len, dtype=np.float64)
    states = np.zeros((context_len, state_dim), dtype=np.float64)
    actions = np.zeros(context_len, dtype=np.int64) if is_discrete else np.zeros((context_len, action_dim))
    pad = np.zeros(context_len, dtype=bool)
    pad[:n_pad] = True

    if n_past:
        past = slice(len(history) - n_past, len(history))
        returns[n_pad:-1] = history.targets[past]
        rewards[n_pad:-1] = history.rewards[past]
        states[n_pad:-1] = np.asarray(history.states[past])
        actions[n_pad:-1] = np.asarray(history.actions[past])
    returns[-1] = target
    states[-1] = observation
    return SubTrajectory(
        returns=returns,
        states=states,
        actions=actions,
        rewards=rewards,
        pad=pad,
        terminals=np.zeros(context_len, dtype=bool),
        start=len(history) - n_past,
        end=len(history),
    )


def _candidate_batch(model: SequenceModel, window: SubTrajectory, samples: np.ndarray) -> MaskedSequence:
    n = len(samples)
    windows = [window] * n
    mask = np.tile(inference_mask(model.config.context_len), (n, 1))
    batch = MaskedSequence.from_windows(windows, mask, model.config.is_discrete, model.dtype)
    batch.returns[:, -1] = torch.as_tensor(samples, dtype=model.dtype)
    return batch


def _decode_actions(model: SequenceModel, raw: torch.Tensor) -> torch.Tensor:
    """Action-head outputs at the current slot to actions."""
    if model.config.is_discrete:
        return raw.argmax(dim=-1)
    return raw


def propose_candidates(
    model: SequenceModel,
    window: SubTrajectory,
    samples: Sequence[float],
    q_mode: QMode = QMode.ONE_PASS,
) -> CandidateSet:
    """
    One batched forward pass over the window, once per sampled return.

    Each candidate's action is the action head's output at the masked current
    slot (argmax for discrete actions). In one-pass mode its value is the Q
    head at that slot; two-pass mode writes the proposed action into the slot,
    unmasks it and re-scores.

    Raises:
        NumericError: If any candidate value is non-finite
    """
    samples = np.asarray(samples, dtype=np.float64)
    model.eval()
    with torch.no_grad():
        batch = _candidate_batch(model, window, samples)
        output = model(batch)
        actions = _decode_actions(model, output.actions[:, -1])
        q = output.q[:, -1]
        if QMode(q_mode) == QMode.TWO_PASS:
            rescored = batch.with_mask(torch.zeros_like(batch.mask))
            rescored.actions = rescored.actions.clone()
            rescored.actions[:, -1] = actions
            q = model(rescored).q[:, -1]

    q_values = q.detach().cpu().numpy().astype(np.float64)
    if not np.all(np.isfinite(q_values)):
        bad = int(np.flatnonzero(~np.isfinite(q_values))[0])
        raise NumericError("non-finite candidate action-value", candidate=bad)
    return CandidateSet(
        returns=samples,
        actions=actions.detach().cpu().numpy(),
        q=q_values,
    )


def double_check_select(cands: CandidateSet, target: float) -> Tuple[Action, float, int]:
    """
    Candidate whose value is nearest the target; ties go to the lowest index.

    Raises:
        UsageError: If the candidate set is empty
    """
    if len(cands) == 0:
        raise UsageError("cannot select from an empty candidate set")
    index = int(np.argmin(np.abs(cands.q - target)))
    return cands.actions[index], float(cands.q[index]), index


def boltzmann_probabilities(q: np.ndarray, beta: float) -> np.ndarray:
    """``exp(beta * q_i) / sum_j exp(beta * q_j)`` with max-subtraction."""
    if beta < 0:
        raise UsageError(f"beta must be >= 0, got {beta}")
    return softmax(beta * np.asarray(q, dtype=np.float64))


def boltzmann_select(cands: CandidateSet, beta: float, rng: np.random.Generator) -> Tuple[Action, float, int]:
    """Sample a candidate with Boltzmann probabilities over its values."""
    if len(cands) == 0:
        raise UsageError("cannot select from an empty candidate set")
    probs = boltzmann_probabilities(cands.q, beta)
    index = int(rng.choice(len(cands), p=probs))
    return cands.actions[index], float(cands.q[index]), index


def conditioning_only_action(model: SequenceModel, window: SubTrajectory) -> Tuple[Action, float]:
    """Action predicted from the return prompt alone (no value check)."""
    model.eval()
    with torch.no_grad():
        mask = inference_mask(model.config.context_len)[None, :]
        batch = MaskedSequence.from_windows([window], mask, model.config.is_discrete, model.dtype)
        output = model(batch)
        action = _decode_actions(model, output.actions[:, -1])[0]
        q = float(output.q[0, -1])
    return action.cpu().numpy(), q


@dataclass
class RolloutResult:
    """One aligned episode; ``trajectory.info`` carries the per-step audit trace."""
    trajectory: Trajectory
    achieved_return: float
    outcome: Optional[str]


def _to_env_action(action: np.ndarray, is_discrete: bool) -> Action:
    if is_discrete:
        return np.int64(action)
    return np.asarray(action, dtype=np.float64)


def rollout_aligned(
    env: Environment,
    model: SequenceModel,
    target: float,
    config: InferConfig,
    gamma: float,
    env_rng: np.random.Generator,
    select_rng: np.random.Generator,
    delta: float = 0.0,
    selection: Selection = Selection.DOUBLE_CHECK,
) -> RolloutResult:
    """
    Roll out one episode aligned to ``target``.

    Earlier window slots carry the targets actually experienced; after each
    step the target becomes ``(R - r) / gamma`` (never clamped). Environment
    and selection randomness come from separate generators.
    """
    cfg = model.config
    if env.state_dim != cfg.state_dim or env.action_dim != cfg.action_dim:
        raise UsageError(
            f"model expects state_dim={cfg.state_dim}, action_dim={cfg.action_dim}; "
            f"env {env.env_id} has {env.state_dim}, {env.action_dim}"
        )
    selection = Selection(selection)
    state, observation = env.reset(env_rng)
    history = RolloutHistory()
    selected_q: List[float] = []
    indices: List[int] = []
    outcome: Optional[str] = None
    running = float(target)
    done = env.max_steps == 0

    while not done:
        window = build_window(history, observation, running, cfg.context_len, cfg.is_discrete, cfg.action_dim)
        if selection == Selection.CONDITIONING:
            action, q = conditioning_only_action(model, window)
            index = 0
        else:
            samples = sample_returns(running, delta, config.n_candidates, select_rng)
            cands = propose_candidates(model, window, samples, config.q_mode)
            if selection == Selection.BOLTZMANN:
                action, q, index = boltzmann_select(cands, config.beta, select_rng)
            else:
                action, q, index = double_check_select(cands, running)

        env_action = env.check_action(_to_env_action(action, cfg.is_discrete))
        result = env.step(state, env_action, env_rng)
        history.states.append(np.asarray(observation, dtype=np.float64))
        history.actions.append(env_action)
        history.targets.append(running)
        history.rewards.append(result.reward)
        selected_q.append(q)
        indices.append(index)

        running = update_target_return(running, result.reward, gamma)
        state, observation, done = result.state, result.observation, result.done
        outcome = result.info.get("outcome", outcome)

    trajectory = build_trajectory(
        history.states,
        history.actions,
        history.rewards,
        gamma,
        env.action_kind,
        env.state_dim,
        env.action_dim,
        info={
            "target": np.asarray(history.targets, dtype=np.float64),
            "selected_q": np.asarray(selected_q, dtype=np.float64),
            "candidate_index": np.asarray(indices, dtype=np.int64),
        },
    )
    return RolloutResult(trajectory=trajectory, achieved_return=trajectory.achieved_return, outcome=outcome)


def save_rollouts(
    results: Sequence[RolloutResult],
    env: Environment,
    gamma: float,
    path: Union[str, Path],
) -> Dataset:
    """Export rollout traces in the dataset format, audit arrays included."""
    ds = make_dataset(
        [result.trajectory for result in results],
        gamma,
        env.env_id,
        env.state_dim,
        env.action_dim,
        env.action_kind,
    )
    save_dataset(ds, path)
    return ds
