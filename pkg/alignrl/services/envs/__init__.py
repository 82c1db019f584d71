"""
Environment registry and spec files.
"""
from pathlib import Path
from typing import Any, Dict, Union

from alignrl.core.exceptions import DatasetParseError, UsageError, VersionMismatchError
from alignrl.core.serialization import read_records, write_records
from alignrl.schemas.envs import ChainMdpSpec, DialEnvSpec, EnvSpec, MazeEnvSpec, TreatmentEnvSpec
from alignrl.services.envs.base import Environment, StepResult, env_reset, env_step
from alignrl.services.envs.chain import ChainEnv, value_iteration
from alignrl.services.envs.dial import DialEnv
from alignrl.services.envs.maze import MazeEnv, maze_reward
from alignrl.services.envs.treatment import TreatmentEnv, stationary_distribution, treatment_transition_row

SPEC_VERSION = 1

_SPEC_TYPES = {
    "dial": DialEnvSpec,
    "maze": MazeEnvSpec,
    "treatment": TreatmentEnvSpec,
    "chain": ChainMdpSpec,
}

__all__ = [
    "Environment", "StepResult", "env_reset", "env_step",
    "DialEnv", "MazeEnv", "TreatmentEnv", "ChainEnv",
    "maze_reward", "treatment_transition_row", "stationary_distribution", "value_iteration",
    "make_env", "env_from_spec", "spec_for_env_id", "save_env_spec", "load_env_spec",
]


def spec_for_env_id(env_id: str, **overrides: Any) -> EnvSpec:
    """
    Default spec for an env id: ``dial``, ``maze``, ``treatment:<seed>`` or ``chain``.

    Raises:
        UsageError: If the id is unknown
    """
    name, _, suffix = env_id.partition(":")
    if name == "dial":
        return DialEnvSpec(**overrides)
    if name == "maze":
        return MazeEnvSpec(**overrides)
    if name == "chain":
        return ChainMdpSpec.default(**overrides)
    if name == "treatment":
        try:
            seed = int(suffix) if suffix else 0
        except ValueError as exc:
            raise UsageError(f"treatment env id needs an integer seed, got {env_id!r}") from exc
        return TreatmentEnvSpec.generate(seed, **overrides)
    raise UsageError(f"unknown env id {env_id!r} (expected dial, maze, treatment:<seed> or chain)")


def env_from_spec(spec: EnvSpec) -> Environment:
    if isinstance(spec, DialEnvSpec):
        return DialEnv(spec)
    if isinstance(spec, MazeEnvSpec):
        return MazeEnv(spec)
    if isinstance(spec, TreatmentEnvSpec):
        return TreatmentEnv(spec)
    if isinstance(spec, ChainMdpSpec):
        return ChainEnv(spec)
    raise UsageError(f"unsupported spec type {type(spec).__name__}")


def make_env(env_id: str, **overrides: Any) -> Environment:
    """Build an environment from its id."""
    return env_from_spec(spec_for_env_id(env_id, **overrides))


def save_env_spec(spec: EnvSpec, path: Union[str, Path]) -> None:
    """Write a spec as a header record plus one spec record."""
    header = {"spec_version": SPEC_VERSION, "kind": spec.kind}
    write_records(path, header, [spec.model_dump(mode="json")])


def load_env_spec(path: Union[str, Path]) -> EnvSpec:
    """
    Read a spec written by :func:`save_env_spec`.

    Raises:
        VersionMismatchError: If ``spec_version`` is not supported
        DatasetParseError: If the file does not hold exactly one spec record
    """
    header, records = read_records(path)
    if header.get("spec_version") != SPEC_VERSION:
        raise VersionMismatchError(header.get("spec_version"), SPEC_VERSION, field="spec_version")
    spec_type = _SPEC_TYPES.get(header.get("kind"))
    if spec_type is None:
        raise DatasetParseError(f"unknown spec kind {header.get('kind')!r}")
    body: Dict[str, Any] = {}
    count = 0
    for _, record in records:
        body = record
        count += 1
    if count != 1:
        raise DatasetParseError(f"expected one spec record, found {count}", record_index=count)
    return spec_type(**body)
