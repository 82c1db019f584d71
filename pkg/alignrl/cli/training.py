"""
Training commands: train, finetune and grad-check.
"""
import argparse
import sys

import numpy as np
import torch

from alignrl.cli.common import add_config_arguments, echo_config, env_for_checkpoint, parse_float_list, resolve_config
from alignrl.core.exceptions import NumericError
from alignrl.core.logging import get_logger
from alignrl.models.sequence_model import build_model, count_parameters
from alignrl.services.behavior import MixturePolicy, collect_dataset
from alignrl.services.checkpoint import load_checkpoint, save_checkpoint
from alignrl.services.dataset import load_dataset
from alignrl.services.envs import make_env
from alignrl.services.finetune import online_finetune
from alignrl.services.trainer import BatchSampler, Trainer, grad_check, grad_check_model_config, model_config_for_dataset

logger = get_logger(__name__)

_DTYPES = {"float32": torch.float32, "float64": torch.float64}


def train(args: argparse.Namespace) -> int:
    """Fit a model on a dataset and write its checkpoint."""
    config = resolve_config(args, {
        "train.total_steps": args.steps,
        "train.warmup_steps": args.warmup,
        "train.batch_size": args.batch_size,
        "train.seed": args.seed,
    })
    echo_config(config, config.train.seed)

    ds = load_dataset(args.data)
    trainer = Trainer(ds, config.model, config.train, dtype=_DTYPES[args.dtype])
    trainer.fit(metrics_path=args.metrics, checkpoint_path=args.out)
    logger.info("Model trained", checkpoint=args.out, steps=trainer.step, parameters=count_parameters(trainer.model))
    return 0


def finetune(args: argparse.Namespace) -> int:
    """Continue training a checkpoint online with Boltzmann exploration."""
    config = resolve_config(args, {
        "env.id": args.env,
        "infer.online_episodes": args.episodes,
        "infer.online_updates": args.updates,
        "infer.seed": args.seed,
    })
    echo_config(config, config.infer.seed)

    model, info = load_checkpoint(args.checkpoint)
    ds = load_dataset(args.data)
    env = env_for_checkpoint(config, args.env, info.env_id)
    train_config = config.train.model_copy(update={"seed": config.infer.seed})
    result = online_finetune(env, model, ds, config.infer, train_config, gamma=config.infer.gamma or info.gamma)
    save_checkpoint(
        result.model,
        args.out,
        info.model_copy(update={"step": info.step + result.updates, "r_max": result.buffer.r_max}),
    )
    if result.episode_returns:
        logger.info(
            "Fine-tuning finished",
            episodes=len(result.episode_returns),
            mean_return=float(np.mean(result.episode_returns)),
            r_max=result.buffer.r_max,
        )
    return 0


def grad_check_command(args: argparse.Namespace) -> int:
    """
    Finite-difference check of the joint loss on a tiny float64 model.

    Fails with a numeric error when any expectile's worst relative error
    reaches the tolerance.
    """
    config = resolve_config(args, {"train.seed": args.seed})
    echo_config(config, config.train.seed)

    env = make_env("dial")
    ds = collect_dataset(env, MixturePolicy(action_dim=env.action_dim), args.episodes, 1.0, config.train.seed)
    model_config = model_config_for_dataset(grad_check_model_config(), ds)
    model = build_model(model_config, seed=config.train.seed, dtype=torch.float64)
    sampler = BatchSampler(ds, model_config.context_len, args.batch_size, np.random.default_rng(config.train.seed))
    batch = sampler.sample(config.train.mask, torch.float64)

    worst = 0.0
    for nu in parse_float_list(args.nu):
        result = grad_check(model, batch, config.train.model_copy(update={"nu": nu}), gamma=ds.gamma)
        sys.stdout.write(
            f"nu={nu} parameters={result.n_parameters} "
            f"max_relative_error={result.max_relative_error!r} worst={result.worst_parameter}\n"
        )
        worst = max(worst, result.max_relative_error)
    if worst >= args.tolerance:
        raise NumericError("gradient check failed", max_relative_error=worst, tolerance=args.tolerance)
    return 0


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("train", help="train a model on a dataset")
    add_config_arguments(parser)
    parser.add_argument("--data", required=True)
    parser.add_argument("--out", required=True, help="checkpoint file to write")
    parser.add_argument("--metrics", help="JSON-lines metrics log")
    parser.add_argument("--steps", type=int)
    parser.add_argument("--warmup", type=int)
    parser.add_argument("--batch-size", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--dtype", choices=sorted(_DTYPES), default="float32")
    parser.set_defaults(handler=train)

    parser = subparsers.add_parser("finetune", help="online fine-tuning from a checkpoint")
    add_config_arguments(parser)
    parser.add_argument("--checkpoint", required=True)
    parser.add_argument("--data", required=True, help="offline dataset seeding the replay buffer")
    parser.add_argument("--env", help="defaults to the checkpoint's env id")
    parser.add_argument("--episodes", type=int)
    parser.add_argument("--updates", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", required=True)
    parser.set_defaults(handler=finetune)

    parser = subparsers.add_parser("grad-check", help="verify analytic gradients by finite differences")
    add_config_arguments(parser)
    parser.add_argument("--nu", default="0.5,0.7,0.9", help="comma-separated expectiles")
    parser.add_argument("--tolerance", type=float, default=1e-4)
    parser.add_argument("--episodes", type=int, default=8)
    parser.add_argument("--batch-size", type=int, default=4)
    parser.add_argument("--seed", type=int)
    parser.set_defaults(handler=grad_check_command)
