"""
Dataset construction, windowing, filtering and serialization.
"""
import math
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np

from alignrl.core.exceptions import DatasetParseError, UsageError, VersionMismatchError
from alignrl.core.logging import get_logger
from alignrl.core.serialization import read_records, write_records
from alignrl.schemas.trajectory import ActionKind, Dataset, SubTrajectory, Trajectory
from alignrl.services.returns import compute_returns, return_recursion_residual

logger = get_logger(__name__)

FORMAT_VERSION = 1
RECURSION_RTOL = 1e-9

HEADER_FIELDS = (
    "format_version", "env_id", "gamma", "state_dim", "action_dim",
    "action_kind", "r_max", "n_trajectories",
)


def build_trajectory(
    states: Sequence[Any],
    actions: Sequence[Any],
    rewards: Sequence[float],
    gamma: float,
    action_kind: ActionKind,
    state_dim: int,
    action_dim: int,
    info: Optional[Mapping[str, Sequence[Any]]] = None,
) -> Trajectory:
    """Assemble a trajectory, computing its returns-to-go."""
    rewards_arr = np.asarray(rewards, dtype=np.float64).reshape(-1)
    horizon = rewards_arr.size
    states_arr = np.asarray(states, dtype=np.float64).reshape(horizon, state_dim)
    if action_kind == ActionKind.DISCRETE:
        actions_arr = np.asarray(actions, dtype=np.int64).reshape(horizon)
    else:
        actions_arr = np.asarray(actions, dtype=np.float64).reshape(horizon, action_dim)
    returns = compute_returns(rewards_arr, gamma) if horizon else np.zeros(0, dtype=np.float64)
    return Trajectory(
        states=states_arr,
        actions=actions_arr,
        rewards=rewards_arr,
        returns=returns,
        info={key: np.asarray(value) for key, value in (info or {}).items()},
    )


def compute_r_max(trajectories: Sequence[Trajectory]) -> float:
    """Maximum initial return over trajectories, 0.0 when there are none."""
    if not trajectories:
        return 0.0
    return float(max(traj.initial_return for traj in trajectories))


def make_dataset(
    trajectories: List[Trajectory],
    gamma: float,
    env_id: str,
    state_dim: int,
    action_dim: int,
    action_kind: ActionKind,
) -> Dataset:
    """Wrap trajectories in a dataset, recording r_max at build time."""
    return Dataset(
        gamma=float(gamma),
        env_id=env_id,
        state_dim=int(state_dim),
        action_dim=int(action_dim),
        action_kind=ActionKind(action_kind),
        trajectories=list(trajectories),
        r_max=compute_r_max(trajectories),
    )


def with_trajectories(ds: Dataset, trajectories: List[Trajectory]) -> Dataset:
    """Copy of ``ds`` holding ``trajectories`` with r_max recomputed."""
    return make_dataset(trajectories, ds.gamma, ds.env_id, ds.state_dim, ds.action_dim, ds.action_kind)


# ---------------------------------------------------------------------------
# Windows
# ---------------------------------------------------------------------------

def slice_window(traj: Trajectory, end: int, context_length: int, is_discrete: bool) -> SubTrajectory:
    """
    Window of ``context_length`` steps ending at ``end`` (inclusive).

    Positions before the episode start are left-padded with zeros and flagged.
    """
    if context_length < 1:
        raise UsageError(f"context length must be >= 1, got {context_length}")
    if not 0 <= end < traj.horizon:
        raise UsageError(f"window end {end} outside trajectory of horizon {traj.horizon}")

    start = end - context_length + 1
    n_pad = max(0, -start)
    first = max(0, start)

    returns = np.zeros(context_length, dtype=np.float64)
    rewards = np.zeros(context_length, dtype=np.float64)
    states = np.zeros((context_length, traj.states.shape[1]), dtype=np.float64)
    if is_discrete:
        actions = np.zeros(context_length, dtype=np.int64)
    else:
        actions = np.zeros((context_length, traj.actions.shape[1]), dtype=np.float64)
    pad = np.zeros(context_length, dtype=bool)
    terminals = np.zeros(context_length, dtype=bool)

    pad[:n_pad] = True
    returns[n_pad:] = traj.returns[first:end + 1]
    rewards[n_pad:] = traj.rewards[first:end + 1]
    states[n_pad:] = traj.states[first:end + 1]
    actions[n_pad:] = traj.actions[first:end + 1]
    if end == traj.horizon - 1:
        terminals[-1] = True

    return SubTrajectory(
        returns=returns,
        states=states,
        actions=actions,
        rewards=rewards,
        pad=pad,
        terminals=terminals,
        start=first,
        end=end,
    )


def sample_subtrajectory(
    traj: Trajectory,
    context_length: int,
    rng: np.random.Generator,
    is_discrete: Optional[bool] = None,
) -> SubTrajectory:
    """
    Window of length K ending at a uniformly chosen timestep.

    Raises:
        UsageError: If K < 1 or the trajectory is empty
    """
    if context_length < 1:
        raise UsageError(f"context length must be >= 1, got {context_length}")
    if traj.horizon == 0:
        raise UsageError("cannot sample a window from an empty trajectory")
    if is_discrete is None:
        is_discrete = traj.actions.ndim == 1
    end = int(rng.integers(traj.horizon))
    return slice_window(traj, end, context_length, is_discrete)


# ---------------------------------------------------------------------------
# Return-ranked filtering
# ---------------------------------------------------------------------------

def _rank_count(percent: float, n: int) -> int:
    # round() guards against 0.1 * 30 style representation error before the ceiling
    return int(math.ceil(round(percent * n / 100.0, 9)))


def _ranked_indices(ds: Dataset) -> List[int]:
    """Indices ordered by initial return, best first; ties keep dataset order."""
    initial = [traj.initial_return for traj in ds.trajectories]
    return sorted(range(len(initial)), key=lambda i: (-initial[i], i))


def filter_top_returns(ds: Dataset, percent: float) -> Dataset:
    """
    Drop the top ``percent``% of trajectories ranked by initial return.

    ``ceil(percent * n / 100)`` trajectories are removed; among equal returns
    the earlier trajectory ranks higher. Survivors keep their order.

    Raises:
        UsageError: If percent is outside [0, 100) or nothing would remain
    """
    if not 0.0 <= percent < 100.0:
        raise UsageError(f"percent must lie in [0, 100), got {percent}")
    n = len(ds)
    n_remove = _rank_count(percent, n)
    if n and n_remove >= n:
        raise UsageError(f"removing the top {percent}% would empty a dataset of {n} trajectories")
    removed = set(_ranked_indices(ds)[:n_remove])
    kept = [traj for i, traj in enumerate(ds.trajectories) if i not in removed]
    logger.info("Filtered top returns", percent=percent, removed=n_remove, remaining=len(kept))
    return with_trajectories(ds, kept)


def keep_top_returns(ds: Dataset, percent: float) -> Dataset:
    """
    Retain the top ``percent``% of trajectories ranked by initial return.

    ``ceil(percent * n / 100)`` trajectories are kept, plus every trajectory
    tied with the last one kept. Survivors keep their order.

    Raises:
        UsageError: If percent is outside (0, 100] or nothing would remain
    """
    if not 0.0 < percent <= 100.0:
        raise UsageError(f"percent must lie in (0, 100], got {percent}")
    n = len(ds)
    n_keep = _rank_count(percent, n)
    if n == 0 or n_keep == 0:
        raise UsageError(f"keeping the top {percent}% of {n} trajectories leaves nothing")
    ranked = _ranked_indices(ds)
    cutoff = ds.trajectories[ranked[n_keep - 1]].initial_return
    kept_ids = {i for i in range(n) if ds.trajectories[i].initial_return >= cutoff}
    kept = [traj for i, traj in enumerate(ds.trajectories) if i in kept_ids]
    logger.info("Kept top returns", percent=percent, kept=len(kept), total=n)
    return with_trajectories(ds, kept)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def _trajectory_record(traj: Trajectory) -> Dict[str, Any]:
    record: Dict[str, Any] = {
        "states": traj.states.tolist(),
        "actions": traj.actions.tolist(),
        "rewards": traj.rewards.tolist(),
    }
    if traj.info:
        record["info"] = {key: np.asarray(value).tolist() for key, value in traj.info.items()}
    return record


def save_dataset(ds: Dataset, path: Union[str, Path]) -> None:
    """Write ``ds`` as one header record plus one record per trajectory."""
    header = {
        "format_version": FORMAT_VERSION,
        "env_id": ds.env_id,
        "gamma": ds.gamma,
        "state_dim": ds.state_dim,
        "action_dim": ds.action_dim,
        "action_kind": ActionKind(ds.action_kind).value,
        "r_max": ds.r_max,
        "n_trajectories": len(ds),
    }
    write_records(path, header, (_trajectory_record(traj) for traj in ds.trajectories))
    logger.info("Dataset saved", path=str(path), trajectories=len(ds), env_id=ds.env_id)


def _parse_trajectory(record: Dict[str, Any], index: int, header: Dict[str, Any]) -> Trajectory:
    for key in ("states", "actions", "rewards"):
        if key not in record:
            raise DatasetParseError(f"missing field '{key}'", record_index=index)

    kind = ActionKind(header["action_kind"])
    state_dim = int(header["state_dim"])
    action_dim = int(header["action_dim"])
    try:
        rewards = np.asarray(record["rewards"], dtype=np.float64)
        states = np.asarray(record["states"], dtype=np.float64)
        if kind == ActionKind.DISCRETE:
            actions = np.asarray(record["actions"], dtype=np.int64)
        else:
            actions = np.asarray(record["actions"], dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise DatasetParseError(f"non-numeric or ragged arrays ({exc})", record_index=index) from exc

    horizon = rewards.shape[0] if rewards.ndim == 1 else -1
    if horizon < 0:
        raise DatasetParseError("rewards must be a flat list", record_index=index)
    if horizon == 0:
        states = states.reshape(0, state_dim)
        actions = actions.reshape(0) if kind == ActionKind.DISCRETE else actions.reshape(0, action_dim)
    if states.shape != (horizon, state_dim):
        raise DatasetParseError(
            f"states shape {states.shape} does not match ({horizon}, {state_dim})", record_index=index
        )
    expected_actions = (horizon,) if kind == ActionKind.DISCRETE else (horizon, action_dim)
    if actions.shape != expected_actions:
        raise DatasetParseError(
            f"actions shape {actions.shape} does not match {expected_actions}", record_index=index
        )
    if kind == ActionKind.DISCRETE and horizon and (actions.min() < 0 or actions.max() >= action_dim):
        raise DatasetParseError("discrete action index out of range", record_index=index)

    gamma = float(header["gamma"])
    returns = compute_returns(rewards, gamma) if horizon else np.zeros(0, dtype=np.float64)
    residual = return_recursion_residual(rewards, returns, gamma)
    scale = max(1.0, float(np.max(np.abs(returns)))) if horizon else 1.0
    if residual > RECURSION_RTOL * scale:
        raise DatasetParseError(f"returns violate the recursion by {residual}", record_index=index)

    info = {key: np.asarray(value) for key, value in (record.get("info") or {}).items()}
    return Trajectory(states=states, actions=actions, rewards=rewards, returns=returns, info=info)


def load_dataset(path: Union[str, Path]) -> Dataset:
    """
    Read a dataset written by :func:`save_dataset`.

    Raises:
        ArtifactIOError: If the file is missing or unreadable
        VersionMismatchError: If the header declares another format version
        DatasetParseError: If the header or any record is malformed or truncated
    """
    header, records = read_records(path)
    if header.get("format_version") != FORMAT_VERSION:
        raise VersionMismatchError(header.get("format_version"), FORMAT_VERSION)
    missing = [name for name in HEADER_FIELDS if name not in header]
    if missing:
        raise DatasetParseError(f"header is missing fields {missing}")
    try:
        ActionKind(header["action_kind"])
    except ValueError as exc:
        raise DatasetParseError(f"unknown action_kind {header['action_kind']!r}") from exc

    trajectories = [_parse_trajectory(record, index, header) for index, record in records]
    expected = int(header["n_trajectories"])
    if len(trajectories) != expected:
        raise DatasetParseError(
            f"expected {expected} trajectory records, found {len(trajectories)} (file truncated?)",
            record_index=len(trajectories),
        )

    ds = Dataset(
        gamma=float(header["gamma"]),
        env_id=str(header["env_id"]),
        state_dim=int(header["state_dim"]),
        action_dim=int(header["action_dim"]),
        action_kind=ActionKind(header["action_kind"]),
        trajectories=trajectories,
        r_max=float(header["r_max"]),
    )
    logger.debug("Dataset loaded", path=str(path), trajectories=len(ds))
    return ds
