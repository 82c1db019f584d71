"""
Alignment metrics, ablations and treatment safety statistics.

Every rollout of a sweep draws from its own seed stream derived from
``(seed, target index, episode)``, so results do not depend on worker count
or scheduling order.
"""
import csv
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, TypeVar, Union

import numpy as np

from alignrl.core.config import settings
from alignrl.core.exceptions import ArtifactIOError, UsageError
from alignrl.core.logging import get_logger
from alignrl.models.sequence_model import SequenceModel
from alignrl.schemas.experiment import EvalConfig, ExperimentConfig
from alignrl.schemas.infer import InferConfig
from alignrl.schemas.reports import (
    ABLATION_COLUMNS,
    ADVERSE_NORMALIZATION,
    ALIGNMENT_COLUMNS,
    SAFETY_COLUMNS,
    AblationReport,
    AblationRow,
    AlignmentReport,
    AlignmentRow,
    ExtrapolationReport,
    SafetyReport,
)
from alignrl.schemas.train import MaskMode
from alignrl.schemas.trajectory import Dataset
from alignrl.services.envs import Environment
from alignrl.services.inference import RolloutResult, Selection, rollout_aligned
from alignrl.services.trainer import Trainer

logger = get_logger(__name__)

T = TypeVar("T")

FULL_VARIANT = "full"
NO_RANDOM_MASK_VARIANT = "w/o RM"
NO_DOUBLE_CHECK_VARIANT = "w/o DB"


def abs_error(target: float, rewards: Iterable[float]) -> float:
    """``|target - sum(rewards)|``."""
    return abs(float(target) - float(np.sum(np.asarray(list(rewards), dtype=np.float64))))


def parse_target_grid(text: str) -> List[float]:
    """
    ``start:stop:step`` to ``floor((stop - start) / step) + 1`` targets.

    Raises:
        UsageError: If the text is malformed, step <= 0 or stop < start
    """
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError(f"target grid must look like start:stop:step, got {text!r}")
    try:
        start, stop, step = (float(part) for part in parts)
    except ValueError as exc:
        raise UsageError(f"target grid has a non-numeric bound: {text!r}") from exc
    if step <= 0:
        raise UsageError(f"target grid step must be positive, got {step}")
    if stop < start:
        raise UsageError(f"target grid stop {stop} is below start {start}")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 12) for i in range(count)]


def fraction_grid(r_max: float, start: float = 0.1, stop: float = 1.0, points: int = 9) -> List[float]:
    """Evenly spaced targets between ``start * r_max`` and ``stop * r_max``."""
    return [float(value) for value in np.linspace(start, stop, points) * r_max]


def target_grid(eval_config: EvalConfig, r_max: float) -> List[float]:
    """The configured ``start:stop:step`` grid, else evenly spaced fractions of r_max."""
    if eval_config.targets:
        return parse_target_grid(eval_config.targets)
    return fraction_grid(r_max, eval_config.fraction_start, eval_config.fraction_stop, eval_config.fraction_points)


def episode_rngs(seed: int, *keys: int) -> Tuple[np.random.Generator, np.random.Generator]:
    """Independent (environment, selection) generators for one rollout."""
    env_seq, select_seq = np.random.SeedSequence([seed, *keys]).spawn(2)
    return np.random.default_rng(env_seq), np.random.default_rng(select_seq)


def _map_ordered(fn: Callable[..., T], jobs: Sequence[tuple], workers: Optional[int]) -> List[T]:
    workers = max(1, min(workers or settings.WORKERS, len(jobs) or 1))
    if workers == 1:
        return [fn(*job) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))


def run_target_episodes(
    model: SequenceModel,
    env: Environment,
    targets: Sequence[float],
    episodes: int,
    config: InferConfig,
    gamma: float,
    r_max: float,
    seed: int = 0,
    selection: Selection = Selection.DOUBLE_CHECK,
    workers: Optional[int] = None,
) -> List[List[RolloutResult]]:
    """Rollouts grouped per target, ``episodes`` each."""
    if episodes < 1:
        raise UsageError(f"episodes per target must be >= 1, got {episodes}")
    delta = config.resolve_delta(r_max)
    model.eval()

    def run(target_index: int, episode: int) -> RolloutResult:
        env_rng, select_rng = episode_rngs(seed, target_index, episode)
        return rollout_aligned(
            env, model, targets[target_index], config, gamma, env_rng, select_rng, delta=delta, selection=selection
        )

    jobs = [(ti, ep) for ti in range(len(targets)) for ep in range(episodes)]
    flat = _map_ordered(run, jobs, workers)
    return [flat[ti * episodes:(ti + 1) * episodes] for ti in range(len(targets))]


def alignment_sweep(
    model: SequenceModel,
    env: Environment,
    targets: Sequence[float],
    episodes: int,
    config: InferConfig,
    gamma: float,
    r_max: float,
    seed: int = 0,
    selection: Selection = Selection.DOUBLE_CHECK,
    workers: Optional[int] = None,
    removal_percent: float = 0.0,
) -> AlignmentReport:
    """Mean, spread and absolute error of achieved returns per target."""
    grouped = run_target_episodes(model, env, targets, episodes, config, gamma, r_max, seed, selection, workers)
    return alignment_report(targets, grouped, r_max, removal_percent)


def alignment_report(
    targets: Sequence[float],
    grouped: Sequence[Sequence[RolloutResult]],
    r_max: float,
    removal_percent: float = 0.0,
) -> AlignmentReport:
    """Aggregate rollouts grouped per target into report rows."""
    rows = []
    for target, results in zip(targets, grouped):
        achieved = np.asarray([result.achieved_return for result in results], dtype=np.float64)
        rows.append(AlignmentRow(
            target=float(target),
            mean_return=float(achieved.mean()),
            std_return=float(achieved.std()),
            mean_abs_err=float(np.mean([abs_error(target, result.trajectory.rewards) for result in results])),
            episodes=len(results),
        ))
        logger.info("Target evaluated", target=target, mean_return=rows[-1].mean_return, mean_abs_err=rows[-1].mean_abs_err)
    return AlignmentReport(rows=rows, r_max=r_max, removal_percent=removal_percent)


def ablation_N(
    model: SequenceModel,
    env: Environment,
    n_list: Sequence[int],
    targets: Union[float, Sequence[float]],
    episodes: int,
    config: InferConfig,
    gamma: float,
    r_max: float,
    seed: int = 0,
    workers: Optional[int] = None,
) -> AblationReport:
    """
    Mean absolute error per candidate count. ``N = 1`` runs with radius 0,
    which is the conditioning-only collapse. Duplicate entries give duplicate rows.
    """
    if not n_list:
        raise UsageError("N list must not be empty")
    grid = [float(targets)] if np.isscalar(targets) else [float(t) for t in targets]
    rows = []
    for n in n_list:
        update = {"n_candidates": int(n)}
        if n == 1:
            update["delta"] = 0.0
        variant = config.model_copy(update=update)
        report = alignment_sweep(model, env, grid, episodes, variant, gamma, r_max, seed, workers=workers)
        rows.append(AblationRow(variant_or_N=str(n), mean_abs_err=report.mean_abs_err))
    return AblationReport(rows=rows)


def train_variant(ds: Dataset, config: ExperimentConfig, seed: int, mask_mode: MaskMode) -> SequenceModel:
    """Train one ablation variant with the given mask mode and seed."""
    train_config = config.train.model_copy(update={
        "seed": seed,
        "mask": config.train.mask.model_copy(update={"mode": mask_mode}),
    })
    trainer = Trainer(ds, config.model, train_config)
    return trainer.fit()


def ablation_components(
    ds: Dataset,
    env: Environment,
    config: ExperimentConfig,
    seeds: Sequence[int],
    targets: Optional[Sequence[float]] = None,
    workers: Optional[int] = None,
) -> AblationReport:
    """
    Seed-averaged error of the full method and its two ablations.

    ``w/o RM`` retrains with autoregressive-only masking; ``w/o DB`` reuses
    the full checkpoint with ``N = 1, delta = 0``.
    """
    if not seeds:
        raise UsageError("component ablation needs at least one seed")
    grid = list(targets) if targets else target_grid(config.eval, ds.r_max)
    gamma = config.infer.gamma or ds.gamma
    no_double_check = config.infer.model_copy(update={"n_candidates": 1, "delta": 0.0})
    errors = {FULL_VARIANT: [], NO_RANDOM_MASK_VARIANT: [], NO_DOUBLE_CHECK_VARIANT: []}

    for seed in seeds:
        full = train_variant(ds, config, seed, config.train.mask.mode)
        no_random_mask = train_variant(ds, config, seed, MaskMode.AUTOREGRESSIVE)
        sweeps = (
            (FULL_VARIANT, full, config.infer),
            (NO_RANDOM_MASK_VARIANT, no_random_mask, config.infer),
            (NO_DOUBLE_CHECK_VARIANT, full, no_double_check),
        )
        for name, model, infer_config in sweeps:
            report = alignment_sweep(
                model, env, grid, config.eval.episodes, infer_config, gamma, ds.r_max, seed, workers=workers
            )
            errors[name].append(report.mean_abs_err)
            logger.info("Ablation variant evaluated", variant=name, seed=seed, mean_abs_err=report.mean_abs_err)

    return AblationReport(rows=[
        AblationRow(variant_or_N=name, mean_abs_err=float(np.mean(values))) for name, values in errors.items()
    ])


def safety_eval(
    model: SequenceModel,
    env: Environment,
    target_fraction: float,
    episodes: int,
    config: InferConfig,
    gamma: float,
    r_max: float,
    seed: int = 0,
    workers: Optional[int] = None,
) -> SafetyReport:
    """
    Outcome statistics of aligned rollouts at ``target_fraction * r_max``.

    Raises:
        UsageError: If the model or env does not use discrete actions
    """
    if not (model.config.is_discrete and env.is_discrete):
        raise UsageError("safety evaluation needs a discrete-action model and environment")
    target = target_fraction * r_max
    (results,) = run_target_episodes(model, env, [target], episodes, config, gamma, r_max, seed, workers=workers)
    outcomes = [result.outcome for result in results]
    adverse = outcomes.count("adverse")
    remissions = outcomes.count("remission")
    returns = np.asarray([result.achieved_return for result in results], dtype=np.float64)
    report = SafetyReport(
        target_fraction=target_fraction,
        target=target,
        mean_return=float(returns.mean()),
        adverse_per_1k=adverse * ADVERSE_NORMALIZATION / episodes,
        remission_rate=remissions / episodes,
        episodes=episodes,
        adverse_events=adverse,
        remissions=remissions,
        exhausted=episodes - adverse - remissions,
    )
    logger.info("Safety evaluated", **report.model_dump())
    return report


def extrapolation_gap(
    model: SequenceModel,
    env: Environment,
    targets: Sequence[float],
    episodes: int,
    config: InferConfig,
    gamma: float,
    r_max: float,
    seed: int = 0,
    workers: Optional[int] = None,
) -> ExtrapolationReport:
    """Double-check versus conditioning-only error at (out-of-support) targets."""
    full = alignment_sweep(model, env, targets, episodes, config, gamma, r_max, seed, workers=workers)
    conditioning = alignment_sweep(
        model, env, targets, episodes, config, gamma, r_max, seed, selection=Selection.CONDITIONING, workers=workers
    )
    return ExtrapolationReport(
        targets=[float(t) for t in targets],
        full_abs_err=full.mean_abs_err,
        conditioning_only_abs_err=conditioning.mean_abs_err,
        dataset_r_max=r_max,
    )


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

def _format(value: object) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: Union[str, Path], columns: Sequence[str], rows: Iterable[Sequence[object]]) -> None:
    """
    Header row then one row per record, ``\\n``-terminated, ``.`` decimals.

    Raises:
        ArtifactIOError: If the file cannot be written
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_format(value) for value in row])
    except OSError as exc:
        raise ArtifactIOError(f"Cannot write CSV ({exc.strerror})", str(path)) from exc


def write_alignment_csv(report: AlignmentReport, path: Union[str, Path]) -> None:
    write_csv(path, ALIGNMENT_COLUMNS, (
        (row.target, row.mean_return, row.std_return, row.mean_abs_err, row.episodes) for row in report.rows
    ))


def write_ablation_csv(report: AblationReport, path: Union[str, Path]) -> None:
    write_csv(path, ABLATION_COLUMNS, ((row.variant_or_N, row.mean_abs_err) for row in report.rows))


def write_safety_csv(reports: Sequence[SafetyReport], path: Union[str, Path]) -> None:
    write_csv(path, SAFETY_COLUMNS, (
        (r.target_fraction, r.mean_return, r.adverse_per_1k, r.remission_rate, r.episodes) for r in reports
    ))
