"""
Evaluation commands: eval-align, ablate-n, ablate-components, eval-safety
and eval-extrapolation.
"""
import argparse

from alignrl.cli.common import (
    add_config_arguments,
    echo_config,
    env_for_checkpoint,
    parse_float_list,
    parse_int_list,
    resolve_config,
)
from alignrl.core.exceptions import UsageError
from alignrl.core.logging import get_logger
from alignrl.schemas.reports import AblationReport, AblationRow
from alignrl.services.checkpoint import load_checkpoint
from alignrl.services.dataset import load_dataset
from alignrl.services.evaluation import (
    ablation_components,
    ablation_N,
    alignment_report,
    extrapolation_gap,
    run_target_episodes,
    safety_eval,
    target_grid,
    write_ablation_csv,
    write_alignment_csv,
    write_safety_csv,
)
from alignrl.services.inference import Selection, save_rollouts

logger = get_logger(__name__)


def _infer_flags(args: argparse.Namespace) -> dict:
    return {
        "env.id": args.env,
        "infer.n_candidates": getattr(args, "n", None),
        "infer.delta": getattr(args, "delta", None),
        "infer.seed": args.seed,
        "eval.targets": getattr(args, "targets", None),
        "eval.episodes": getattr(args, "episodes", None),
        "eval.workers": args.workers,
    }


def eval_align(args: argparse.Namespace) -> int:
    """Alignment sweep of a checkpoint over a target grid."""
    config = resolve_config(args, {**_infer_flags(args), "eval.removal_percent": args.removal_percent})
    echo_config(config, config.infer.seed)

    model, info = load_checkpoint(args.checkpoint)
    env = env_for_checkpoint(config, args.env, info.env_id)
    gamma = config.infer.gamma or info.gamma
    targets = target_grid(config.eval, info.r_max)
    selection = Selection.CONDITIONING if args.conditioning_only else Selection.DOUBLE_CHECK
    grouped = run_target_episodes(
        model, env, targets, config.eval.episodes, config.infer, gamma, info.r_max,
        seed=config.infer.seed, selection=selection, workers=config.eval.workers,
    )
    report = alignment_report(targets, grouped, info.r_max, config.eval.removal_percent)
    write_alignment_csv(report, args.out)
    if args.trace_out:
        save_rollouts([result for results in grouped for result in results], env, gamma, args.trace_out)
    logger.info("Alignment report written", path=args.out, targets=len(targets), mean_abs_err=report.mean_abs_err)
    return 0


def ablate_n(args: argparse.Namespace) -> int:
    """Mean absolute error per candidate count."""
    flags = _infer_flags(args)
    if args.n_list:
        flags["eval.n_list"] = parse_int_list(args.n_list)
    if args.target is not None:
        flags["eval.ablation_target"] = args.target
    config = resolve_config(args, flags)
    echo_config(config, config.infer.seed)

    model, info = load_checkpoint(args.checkpoint)
    env = env_for_checkpoint(config, args.env, info.env_id)
    if config.eval.ablation_target is not None:
        targets = [config.eval.ablation_target]
    else:
        targets = target_grid(config.eval, info.r_max)
    report = ablation_N(
        model, env, config.eval.n_list, targets, config.eval.episodes, config.infer,
        config.infer.gamma or info.gamma, info.r_max, seed=config.infer.seed, workers=config.eval.workers,
    )
    write_ablation_csv(report, args.out)
    logger.info("N ablation written", path=args.out, rows=len(report.rows))
    return 0


def ablate_components(args: argparse.Namespace) -> int:
    """Full method against its masking and double-check ablations."""
    config = resolve_config(args, {
        **_infer_flags(args),
        "train.total_steps": args.steps,
        "train.warmup_steps": args.warmup,
        "eval.ablation_seeds": args.seeds,
    })
    echo_config(config, config.infer.seed)

    ds = load_dataset(args.data)
    env = env_for_checkpoint(config, args.env, ds.env_id)
    seeds = [config.infer.seed + offset for offset in range(config.eval.ablation_seeds)]
    report = ablation_components(ds, env, config, seeds, workers=config.eval.workers)
    write_ablation_csv(report, args.out)
    logger.info("Component ablation written", path=args.out, seeds=seeds)
    return 0


def eval_safety(args: argparse.Namespace) -> int:
    """Outcome statistics at moderate and aggressive target fractions."""
    flags = {**_infer_flags(args), "eval.safety_episodes": args.episodes}
    if args.fractions:
        flags["eval.safety_fractions"] = parse_float_list(args.fractions)
    config = resolve_config(args, flags)
    echo_config(config, config.infer.seed)

    model, info = load_checkpoint(args.checkpoint)
    env = env_for_checkpoint(config, args.env, info.env_id)
    gamma = config.infer.gamma or info.gamma
    reports = [
        safety_eval(
            model, env, fraction, config.eval.safety_episodes, config.infer, gamma, info.r_max,
            seed=config.infer.seed, workers=config.eval.workers,
        )
        for fraction in config.eval.safety_fractions
    ]
    write_safety_csv(reports, args.out)
    logger.info("Safety report written", path=args.out, fractions=config.eval.safety_fractions)
    return 0


def eval_extrapolation(args: argparse.Namespace) -> int:
    """Double-check against conditioning-only error at out-of-support targets."""
    flags = _infer_flags(args)
    if args.target_list:
        flags["eval.extrapolation_targets"] = parse_float_list(args.target_list)
    config = resolve_config(args, flags)
    echo_config(config, config.infer.seed)

    model, info = load_checkpoint(args.checkpoint)
    env = env_for_checkpoint(config, args.env, info.env_id)
    if not config.eval.extrapolation_targets:
        raise UsageError("extrapolation needs at least one target")
    report = extrapolation_gap(
        model, env, config.eval.extrapolation_targets, config.eval.episodes, config.infer,
        config.infer.gamma or info.gamma, info.r_max, seed=config.infer.seed, workers=config.eval.workers,
    )
    write_ablation_csv(AblationReport(rows=[
        AblationRow(variant_or_N="full", mean_abs_err=report.full_abs_err),
        AblationRow(variant_or_N="conditioning", mean_abs_err=report.conditioning_only_abs_err),
    ]), args.out)
    logger.info("Extrapolation report written", path=args.out, gap=report.gap, dataset_r_max=report.dataset_r_max)
    return 0


def _add_rollout_arguments(parser: argparse.ArgumentParser, checkpoint: bool = True) -> None:
    add_config_arguments(parser)
    if checkpoint:
        parser.add_argument("--checkpoint", required=True)
    parser.add_argument("--env", help="defaults to the env the checkpoint or dataset came from")
    parser.add_argument("--episodes", type=int, help="episodes per target")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--workers", type=int)
    parser.add_argument("--out", required=True, help="CSV report to write")


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("eval-align", help="alignment sweep over target returns")
    _add_rollout_arguments(parser)
    parser.add_argument("--targets", help="start:stop:step (default: fractions of r_max)")
    parser.add_argument("--n", type=int, help="candidate count N")
    parser.add_argument("--delta", type=float, help="return-ball radius")
    parser.add_argument("--removal-percent", type=float, help="recorded in the report")
    parser.add_argument("--conditioning-only", action="store_true", help="skip the value check")
    parser.add_argument("--trace-out", help="also export rollout traces in the dataset format")
    parser.set_defaults(handler=eval_align)

    parser = subparsers.add_parser("ablate-n", help="error as a function of the candidate count")
    _add_rollout_arguments(parser)
    parser.add_argument("--n-list", help="comma-separated candidate counts")
    parser.add_argument("--target", type=float, help="single target return")
    parser.add_argument("--targets", help="start:stop:step grid used when --target is absent")
    parser.add_argument("--delta", type=float)
    parser.set_defaults(handler=ablate_n)

    parser = subparsers.add_parser("ablate-components", help="full method vs w/o RM vs w/o DB")
    _add_rollout_arguments(parser, checkpoint=False)
    parser.add_argument("--data", required=True)
    parser.add_argument("--seeds", type=int, help="number of training seeds")
    parser.add_argument("--steps", type=int, help="training steps per variant")
    parser.add_argument("--warmup", type=int)
    parser.add_argument("--targets", help="start:stop:step (default: fractions of r_max)")
    parser.add_argument("--n", type=int)
    parser.set_defaults(handler=ablate_components)

    parser = subparsers.add_parser("eval-safety", help="adverse events and remissions on a treatment env")
    _add_rollout_arguments(parser)
    parser.add_argument("--fractions", help="comma-separated target fractions of r_max")
    parser.add_argument("--n", type=int)
    parser.set_defaults(handler=eval_safety)

    parser = subparsers.add_parser("eval-extrapolation", help="error at targets beyond the dataset")
    _add_rollout_arguments(parser)
    parser.add_argument("--target-list", help="comma-separated target returns")
    parser.add_argument("--n", type=int)
    parser.set_defaults(handler=eval_extrapolation)
