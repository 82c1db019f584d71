"""
Dataset commands: gen-data and filter-data.
"""
import argparse

from alignrl.cli.common import add_config_arguments, build_env_spec, echo_config, resolve_config
from alignrl.core.logging import get_logger
from alignrl.services.behavior import collect_dataset, make_behavior_policy
from alignrl.services.dataset import filter_top_returns, keep_top_returns, load_dataset, save_dataset
from alignrl.services.envs import env_from_spec, save_env_spec

logger = get_logger(__name__)


def gen_data(args: argparse.Namespace) -> int:
    """Collect behavior-policy episodes into a dataset file."""
    config = resolve_config(args, {
        "env.id": args.env,
        "env.episodes": args.episodes,
        "env.gamma": args.gamma,
        "env.seed": args.seed,
        "env.horizon": args.horizon,
        "env.spec_file": args.spec,
        "policy.kind": args.policy,
        "eval.workers": args.workers,
    })
    echo_config(config, config.env.seed)

    spec = build_env_spec(config.env)
    env = env_from_spec(spec)
    policy = make_behavior_policy(env, config.policy)
    ds = collect_dataset(
        env, policy, config.env.episodes, config.env.gamma, config.env.seed, workers=config.eval.workers
    )
    save_dataset(ds, args.out)
    if args.spec_out:
        save_env_spec(spec, args.spec_out)
    logger.info("Dataset written", path=args.out, trajectories=len(ds), r_max=ds.r_max)
    return 0


def filter_data(args: argparse.Namespace) -> int:
    """Drop (or keep only) the top percent of trajectories by initial return."""
    config = resolve_config(args)
    echo_config(config, config.env.seed)

    ds = load_dataset(args.data)
    if args.mode == "keep":
        filtered = keep_top_returns(ds, args.percent)
    else:
        filtered = filter_top_returns(ds, args.percent)
    save_dataset(filtered, args.out)
    logger.info(
        "Filtered dataset written",
        path=args.out,
        mode=args.mode,
        before=len(ds),
        after=len(filtered),
        r_max=filtered.r_max,
    )
    return 0


def register(subparsers: argparse._SubParsersAction) -> None:
    parser = subparsers.add_parser("gen-data", help="collect a behavior dataset")
    add_config_arguments(parser)
    parser.add_argument("--env", help="dial | maze | chain | treatment:<seed>")
    parser.add_argument("--spec", help="environment spec file (overrides --env)")
    parser.add_argument("--policy", choices=["soc", "mixture", "epsgreedy"])
    parser.add_argument("--episodes", type=int)
    parser.add_argument("--gamma", type=float)
    parser.add_argument("--horizon", type=int, help="override the episode horizon / step limit")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--workers", type=int)
    parser.add_argument("--out", required=True, help="dataset file to write")
    parser.add_argument("--spec-out", help="also write the environment spec here")
    parser.set_defaults(handler=gen_data)

    parser = subparsers.add_parser("filter-data", help="remove or retain top-return trajectories")
    add_config_arguments(parser)
    parser.add_argument("--data", required=True)
    parser.add_argument("--percent", type=float, required=True)
    parser.add_argument("--mode", choices=["keep", "drop"], default="drop")
    parser.add_argument("--out", required=True)
    parser.set_defaults(handler=filter_data)
