"""
Experiment configuration and its key=value file format.

A config file holds one ``section.key=value`` assignment per line; ``#``
starts a comment. Values are JSON literals where they parse as such
(``1e-4``, ``true``, ``[0.6, 0.7]``) and plain strings otherwise.
"""
import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from alignrl.core.exceptions import ArtifactIOError, UsageError
from alignrl.schemas.infer import InferConfig
from alignrl.schemas.model import ModelConfig
from alignrl.schemas.policy import PolicyConfig
from alignrl.schemas.train import TrainConfig


class EnvConfig(BaseModel):
    """Environment and data-collection section."""
    model_config = ConfigDict(extra="forbid")

    id: str = Field("dial", description="dial | maze | chain | treatment:<seed>")
    gamma: float = Field(1.0, ge=0.0, le=1.0)
    episodes: int = Field(5000, ge=1)
    seed: int = 0
    horizon: Optional[int] = Field(None, ge=0, description="Overrides the env's horizon / step limit")
    spec_file: Optional[str] = Field(None, description="Load the env spec from this file instead of the id")


class EvalConfig(BaseModel):
    """Evaluation sweeps, ablations and safety runs."""
    model_config = ConfigDict(extra="forbid")

    targets: Optional[str] = Field(None, description="start:stop:step target grid in return units")
    # fallback grid: evenly spaced fractions of r_max, endpoints included
    fraction_start: float = 0.1
    fraction_stop: float = 1.0
    fraction_points: int = Field(9, ge=1)
    episodes: int = Field(10, ge=1, description="Episodes per target")
    n_list: List[int] = Field(default_factory=lambda: [2, 5, 10, 100, 300])
    ablation_target: Optional[float] = None
    ablation_seeds: int = Field(3, ge=1)
    safety_fractions: List[float] = Field(default_factory=lambda: [0.4, 0.8])
    safety_episodes: int = Field(1000, ge=1)
    extrapolation_targets: List[float] = Field(default_factory=lambda: [15.0, 16.0])
    removal_percent: float = Field(0.0, ge=0.0, lt=100.0)
    workers: Optional[int] = Field(None, ge=1)


class ExperimentConfig(BaseModel):
    """Every tunable of one experiment, grouped by section."""
    model_config = ConfigDict(extra="forbid")

    env: EnvConfig = Field(default_factory=EnvConfig)
    policy: PolicyConfig = Field(default_factory=PolicyConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    infer: InferConfig = Field(default_factory=InferConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)


def parse_value(raw: str) -> Any:
    text = raw.strip()
    try:
        return json.loads(text)
    except ValueError:
        return text


def parse_assignment(line: str) -> Optional[tuple]:
    """``key=value`` to ``(key, parsed value)``; None for blank and comment lines."""
    stripped = line.strip()
    if not stripped or stripped.startswith("#"):
        return None
    key, sep, value = stripped.partition("=")
    key = key.strip()
    if not sep or not key:
        raise UsageError(f"expected key=value, got {line.strip()!r}")
    return key, parse_value(value)


def _assign(tree: Dict[str, Any], dotted: str, value: Any) -> None:
    parts = dotted.split(".")
    node = tree
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise UsageError(f"config key {dotted!r} nests under a scalar")
        node = child
    node[parts[-1]] = value


def read_config_file(path: Union[str, Path]) -> List[tuple]:
    """
    Parse a key=value config file.

    Raises:
        ArtifactIOError: If the file cannot be read
        UsageError: If a line is not an assignment
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ArtifactIOError("Config file not found", str(path)) from exc
    except OSError as exc:
        raise ArtifactIOError(f"Cannot read config file ({exc.strerror})", str(path)) from exc
    assignments = []
    for number, line in enumerate(text.splitlines(), start=1):
        try:
            parsed = parse_assignment(line)
        except UsageError as exc:
            raise UsageError(f"{path}:{number}: {exc.message}") from exc
        if parsed is not None:
            assignments.append(parsed)
    return assignments


def build_experiment_config(
    assignments: Iterable[tuple],
    base: Optional[ExperimentConfig] = None,
) -> ExperimentConfig:
    """
    Apply dotted assignments on top of ``base`` (defaults when None).

    Raises:
        UsageError: On unknown keys or invalid values
    """
    tree = (base or ExperimentConfig()).model_dump(mode="json", exclude_unset=True)
    for key, value in assignments:
        _assign(tree, key, value)
    try:
        return ExperimentConfig.model_validate(tree)
    except ValidationError as exc:
        problems = "; ".join(
            f"{'.'.join(str(part) for part in err['loc'])}: {err['msg']}" for err in exc.errors()
        )
        raise UsageError(f"invalid configuration: {problems}") from exc


def load_experiment_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Sequence[str] = (),
    flags: Optional[Mapping[str, Any]] = None,
) -> ExperimentConfig:
    """
    Resolve the configuration: file, then ``--set`` overrides, then flags.

    ``flags`` maps dotted keys to already-typed values; None values are skipped.
    """
    assignments: List[tuple] = list(read_config_file(path)) if path else []
    for item in overrides:
        parsed = parse_assignment(item)
        if parsed is not None:
            assignments.append(parsed)
    for key, value in (flags or {}).items():
        if value is not None:
            assignments.append((key, value))
    return build_experiment_config(assignments)


def _flatten(prefix: str, value: Any, out: Dict[str, Any]) -> None:
    if isinstance(value, dict):
        for key, child in value.items():
            _flatten(f"{prefix}.{key}" if prefix else key, child, out)
    else:
        out[prefix] = value


def flatten_config(config: BaseModel) -> List[str]:
    """Sorted ``key=value`` lines, one per leaf, re-loadable by :func:`read_config_file`."""
    leaves: Dict[str, Any] = {}
    _flatten("", config.model_dump(mode="json"), leaves)
    lines = []
    for key in sorted(leaves):
        value = leaves[key]
        text = value if isinstance(value, str) else json.dumps(value)
        lines.append(f"{key}={text}")
    return lines
