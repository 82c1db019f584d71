#!/usr/bin/env python3
"""
Desk-scale reproduction runs: alignment, ablations, extrapolation and safety.
"""
import os
import sys
from pathlib import Path

import numpy as np

# Add the package directory to the Python path
sys.path.insert(0, os.path.dirname(os.path.dirname(__file__)))

from alignrl.core.logging import set_run_id, setup_logging
from alignrl.schemas.experiment import ExperimentConfig
from alignrl.schemas.infer import InferConfig
from alignrl.schemas.model import ModelConfig
from alignrl.schemas.reports import AblationReport, AblationRow
from alignrl.schemas.train import TrainConfig
from alignrl.services.behavior import MixturePolicy, SocPolicy, collect_dataset
from alignrl.services.dataset import filter_top_returns
from alignrl.services.envs import make_env
from alignrl.services.evaluation import (
    ablation_components,
    ablation_N,
    alignment_sweep,
    extrapolation_gap,
    parse_target_grid,
    safety_eval,
    write_ablation_csv,
    write_alignment_csv,
    write_safety_csv,
)
from alignrl.services.trainer import Trainer

OUT_DIR = Path(os.getenv("ALIGNRL_ACCEPTANCE_DIR", "acceptance_results"))
TARGETS = parse_target_grid("2:18:2")
EPISODES = 10
TRAIN_STEPS = 20_000
SEEDS = [0, 1, 2]


def train(ds, seed=0):
    trainer = Trainer(ds, ModelConfig(), TrainConfig(total_steps=TRAIN_STEPS, seed=seed))
    trainer.fit()
    trainer.model.eval()
    return trainer.model


def dial_setup():
    env = make_env("dial")
    ds = collect_dataset(env, MixturePolicy(action_dim=env.action_dim), 5000, 1.0, seed=7)
    return env, ds


def run_alignment(env, ds, model):
    """In-support alignment and the candidate-count ablation."""
    report = alignment_sweep(model, env, TARGETS, EPISODES, InferConfig(), ds.gamma, ds.r_max, seed=0)
    write_alignment_csv(report, OUT_DIR / "align.csv")
    print(f"Alignment mean absolute error: {report.mean_abs_err:.3f} (limit 1.0)")

    ablation = ablation_N(model, env, [2, 5, 10, 100, 300], TARGETS, EPISODES, InferConfig(), ds.gamma, ds.r_max, seed=0)
    write_ablation_csv(ablation, OUT_DIR / "ablate_n.csv")
    for row in ablation.rows:
        print(f"  N={row.variant_or_N}: {row.mean_abs_err:.3f}")
    return report.mean_abs_err <= 1.0 and ablation.rows[-1].mean_abs_err <= ablation.rows[0].mean_abs_err


def run_components(env, ds):
    """Full method against autoregressive-only masking and no value check."""
    config = ExperimentConfig(train=TrainConfig(total_steps=TRAIN_STEPS), eval={"episodes": EPISODES})
    report = ablation_components(ds, env, config, SEEDS, targets=TARGETS)
    write_ablation_csv(report, OUT_DIR / "ablate_components.csv")
    errors = {row.variant_or_N: row.mean_abs_err for row in report.rows}
    for name, error in errors.items():
        print(f"  {name}: {error:.3f}")
    return all(errors["full"] <= error for error in errors.values())


def run_extrapolation(env, ds):
    """Targets above every logged return after removing returns over 14."""
    over = sum(traj.initial_return > 14.0 for traj in ds.trajectories)
    filtered = filter_top_returns(ds, 100.0 * over / len(ds))
    full, conditioning = [], []
    for seed in SEEDS:
        report = extrapolation_gap(
            train(filtered, seed), env, [15.0, 16.0], EPISODES, InferConfig(), filtered.gamma, filtered.r_max, seed=seed
        )
        full.append(report.full_abs_err)
        conditioning.append(report.conditioning_only_abs_err)
    write_ablation_csv(AblationReport(rows=[
        AblationRow(variant_or_N="full", mean_abs_err=float(np.mean(full))),
        AblationRow(variant_or_N="conditioning", mean_abs_err=float(np.mean(conditioning))),
    ]), OUT_DIR / "extrapolation.csv")
    print(f"Extrapolation error: full {np.mean(full):.3f}, conditioning only {np.mean(conditioning):.3f}")
    return np.mean(full) <= np.mean(conditioning)


def run_safety():
    """Moderate and aggressive targets on a generated treatment simulator."""
    env = make_env("treatment:0")
    ds = collect_dataset(env, SocPolicy.for_env(env), 1000, 1.0, seed=0)
    by_fraction = {0.4: [], 0.8: []}
    for seed in SEEDS:
        model = train(ds, seed)
        for fraction, reports in by_fraction.items():
            reports.append(safety_eval(model, env, fraction, 1000, InferConfig(), ds.gamma, ds.r_max, seed=seed))
    write_safety_csv([report for reports in by_fraction.values() for report in reports], OUT_DIR / "safety.csv")

    means = {
        fraction: (np.mean([r.mean_return for r in reports]), np.mean([r.adverse_per_1k for r in reports]))
        for fraction, reports in by_fraction.items()
    }
    for fraction, (mean_return, adverse) in means.items():
        print(f"  target {fraction} r_max: return {mean_return:.3f}, adverse events per 1k {adverse:.1f}")
    return means[0.8][0] >= means[0.4][0] and means[0.8][1] >= means[0.4][1]


def main():
    """Main acceptance function."""
    commands = ("align", "components", "extrapolation", "safety", "all")
    if len(sys.argv) != 2 or sys.argv[1] not in commands:
        print(f"Usage: python run_acceptance.py [{'|'.join(commands)}]")
        sys.exit(2)
    command = sys.argv[1]

    setup_logging()
    set_run_id()
    OUT_DIR.mkdir(parents=True, exist_ok=True)

    results = {}
    try:
        if command in ("align", "components", "extrapolation", "all"):
            env, ds = dial_setup()
            print(f"Dial dataset: {len(ds)} episodes, best return {ds.r_max:.3f}")
            if command in ("align", "all"):
                results["align"] = run_alignment(env, ds, train(ds))
            if command in ("components", "all"):
                results["components"] = run_components(env, ds)
            if command in ("extrapolation", "all"):
                results["extrapolation"] = run_extrapolation(env, ds)
        if command in ("safety", "all"):
            results["safety"] = run_safety()
    except Exception as e:
        print(f"Acceptance run failed: {e}")
        sys.exit(1)

    for name, passed in results.items():
        print(f"{name}: {'PASS' if passed else 'FAIL'}")
    sys.exit(0 if all(results.values()) else 1)


if __name__ == "__main__":
    main()
