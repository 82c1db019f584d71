"""
Shared command-line plumbing: config flags, resolution and echo.
"""
import argparse
import sys
from typing import Any, Dict, List, Optional, TextIO

from alignrl.core.exceptions import UsageError
from alignrl.core.logging import get_logger
from alignrl.schemas.envs import EnvSpec
from alignrl.schemas.experiment import EnvConfig, ExperimentConfig, flatten_config, load_experiment_config
from alignrl.services.envs import Environment, env_from_spec, load_env_spec, spec_for_env_id

logger = get_logger(__name__)


def add_config_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value experiment config file")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one config key (repeatable)",
    )


def resolve_config(args: argparse.Namespace, flags: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """File, then ``--set`` overrides, then the command's dedicated flags."""
    return load_experiment_config(args.config, args.overrides, flags)


def echo_config(config: ExperimentConfig, seed: int, out: Optional[TextIO] = None) -> None:
    """Print the resolved config as sorted key=value lines, then the seed."""
    if out is None:
        out = sys.stdout
    for line in flatten_config(config):
        out.write(line + "\n")
    out.write(f"seed={seed}\n")
    out.flush()


def parse_int_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise UsageError(f"expected a comma-separated list of integers, got {text!r}") from exc


def parse_float_list(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise UsageError(f"expected a comma-separated list of numbers, got {text!r}") from exc


def build_env_spec(env_config: EnvConfig) -> EnvSpec:
    """Spec from a spec file or an env id, with the configured horizon override."""
    if env_config.spec_file:
        spec = load_env_spec(env_config.spec_file)
    else:
        spec = spec_for_env_id(env_config.id)
    if env_config.horizon is not None:
        field = "max_steps" if spec.kind == "treatment" else "horizon"
        if env_config.horizon < 1 and field == "max_steps":
            raise UsageError("treatment episodes need at least one step")
        spec = spec.model_copy(update={field: env_config.horizon})
    return spec


def build_env(env_config: EnvConfig) -> Environment:
    return env_from_spec(build_env_spec(env_config))


def env_for_checkpoint(config: ExperimentConfig, env_flag: Optional[str], checkpoint_env_id: str) -> Environment:
    """The ``--env`` flag when given, else the env the checkpoint was trained on."""
    if env_flag or not checkpoint_env_id:
        return build_env(config.env)
    return build_env(config.env.model_copy(update={"id": checkpoint_env_id}))
