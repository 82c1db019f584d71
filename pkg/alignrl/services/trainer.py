"""
Joint reconstruction + expectile-TD training.
"""
import copy
import math
from dataclasses import dataclass
from pathlib import Path
from typing import IO, List, Optional, Union

import numpy as np
import torch
from torch.optim import AdamW
from torch.optim.lr_scheduler import LambdaLR

from alignrl.core.exceptions import ArtifactIOError, NumericError, UsageError
from alignrl.core.logging import get_logger
from alignrl.core.runtime import configure_torch, seed_torch
from alignrl.core.serialization import dumps_record
from alignrl.models.sequence_model import MaskedSequence, SequenceModel, build_model
from alignrl.schemas.model import ModelConfig
from alignrl.schemas.train import LossBreakdown, MaskSchedule, TrainConfig
from alignrl.schemas.trajectory import Dataset, SubTrajectory
from alignrl.services.checkpoint import CheckpointInfo, save_checkpoint
from alignrl.services.dataset import sample_subtrajectory
from alignrl.services.losses import total_loss
from alignrl.services.masking import make_batch_masks

logger = get_logger(__name__)

STD_FLOOR = 1e-6


def model_config_for_dataset(config: ModelConfig, ds: Dataset) -> ModelConfig:
    """Fill modality sizes and normalisation constants from ``ds``."""
    update = {
        "state_dim": ds.state_dim,
        "action_dim": ds.action_dim,
        "action_kind": ds.action_kind,
        "return_scale": max(abs(ds.r_max), 1.0),
    }
    states = [traj.states for traj in ds.trajectories if traj.horizon]
    if states:
        stacked = np.concatenate(states, axis=0)
        std = stacked.std(axis=0)
        update["state_mean"] = stacked.mean(axis=0).tolist()
        update["state_std"] = np.where(std < STD_FLOOR, 1.0, std).tolist()
    else:
        update["state_mean"] = None
        update["state_std"] = None
    return ModelConfig.model_validate({**config.model_dump(), **update})


class BatchSampler:
    """Two-step window sampling: a uniform trajectory, then a uniform end step."""

    def __init__(self, ds: Dataset, context_len: int, batch_size: int, rng: np.random.Generator):
        self.trajectories = [traj for traj in ds.trajectories if traj.horizon]
        if not self.trajectories:
            raise UsageError("dataset has no non-empty trajectories to train on")
        self.is_discrete = ds.is_discrete
        self.context_len = context_len
        self.batch_size = batch_size
        self.rng = rng

    def sample_windows(self) -> List[SubTrajectory]:
        picks = self.rng.integers(len(self.trajectories), size=self.batch_size)
        return [
            sample_subtrajectory(self.trajectories[int(i)], self.context_len, self.rng, self.is_discrete)
            for i in picks
        ]

    def sample(self, schedule: MaskSchedule, dtype: torch.dtype = torch.float32) -> MaskedSequence:
        windows = self.sample_windows()
        pads = np.stack([window.pad for window in windows])
        masks = make_batch_masks(schedule, pads, self.rng)
        return MaskedSequence.from_windows(windows, masks, self.is_discrete, dtype)


def make_optimizer(model: SequenceModel, config: TrainConfig) -> AdamW:
    """AdamW with separate groups for the transformer and the Q heads."""
    head_params = list(model.q_heads.parameters())
    head_ids = {id(param) for param in head_params}
    body_params = [param for param in model.parameters() if id(param) not in head_ids]
    return AdamW(
        [
            {"params": body_params, "lr": config.lr, "weight_decay": config.weight_decay},
            {"params": head_params, "lr": config.head_lr, "weight_decay": config.q_weight_decay},
        ],
        betas=config.betas,
    )


def make_scheduler(optimizer: AdamW, warmup_steps: int) -> LambdaLR:
    """Linear warmup to the base rate, constant afterwards."""
    if warmup_steps <= 0:
        return LambdaLR(optimizer, lambda step: 1.0)
    return LambdaLR(optimizer, lambda step: min(1.0, (step + 1) / warmup_steps))


def train_step(
    model: SequenceModel,
    optimizer: torch.optim.Optimizer,
    batch: MaskedSequence,
    config: TrainConfig,
    gamma: float,
    scheduler: Optional[LambdaLR] = None,
    step: int = 0,
) -> LossBreakdown:
    """
    One gradient step on the joint loss.

    Raises:
        NumericError: If the loss is non-finite (reports step and components)
    """
    model.train()
    optimizer.zero_grad(set_to_none=True)
    output = model(batch.cast(model.dtype))
    total, breakdown = total_loss(
        output,
        batch,
        gamma=gamma,
        nu=config.nu,
        return_scale=model.return_scale,
        state_std=model.state_std,
        recon_weight=config.recon_weight,
        q_weight=config.q_weight,
    )
    if not torch.isfinite(total):
        raise NumericError("non-finite training loss", step=step, **breakdown.as_dict())
    total.backward()
    optimizer.step()
    if scheduler is not None:
        scheduler.step()
    return breakdown


class MetricsWriter:
    """Step-indexed metrics log, one JSON object per line."""

    def __init__(self, path: Optional[Union[str, Path]] = None):
        self.path = Path(path) if path else None
        self._handle: Optional[IO[str]] = None

    def __enter__(self) -> "MetricsWriter":
        if self.path is not None:
            try:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                self._handle = self.path.open("w", encoding="utf-8", newline="\n")
            except OSError as exc:
                raise ArtifactIOError(f"Cannot open metrics log ({exc.strerror})", str(self.path)) from exc
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    def write(self, step: int, breakdown: LossBreakdown, lr: float) -> None:
        if self._handle is None:
            return
        self._handle.write(dumps_record({"step": step, "lr": lr, **breakdown.as_dict()}))
        self._handle.write("\n")

    def close(self) -> None:
        if self._handle is not None:
            self._handle.close()
            self._handle = None


class Trainer:
    """Owns the model, optimizer, warmup schedule and batch sampler of one run."""

    def __init__(
        self,
        ds: Dataset,
        model_config: ModelConfig,
        train_config: TrainConfig,
        model: Optional[SequenceModel] = None,
        dtype: torch.dtype = torch.float32,
    ):
        configure_torch()
        seed_torch(train_config.seed)
        self.config = train_config
        self.gamma = ds.gamma if train_config.gamma is None else train_config.gamma
        self.env_id = ds.env_id
        self.r_max = ds.r_max
        self.dtype = dtype
        if model is None:
            model = build_model(model_config_for_dataset(model_config, ds), dtype=dtype)
        self.model = model
        self.rng = np.random.default_rng(train_config.seed)
        self.sampler = BatchSampler(ds, model.config.context_len, train_config.batch_size, self.rng)
        self.optimizer = make_optimizer(model, train_config)
        self.scheduler = make_scheduler(self.optimizer, train_config.warmup_steps)
        self.step = 0
        self.history: List[LossBreakdown] = []

    @property
    def lr(self) -> float:
        return float(self.optimizer.param_groups[0]["lr"])

    def use_dataset(self, ds: Dataset) -> None:
        """Draw subsequent batches from ``ds`` (same optimizer state)."""
        self.sampler = BatchSampler(ds, self.model.config.context_len, self.config.batch_size, self.rng)

    def train_step(self) -> LossBreakdown:
        batch = self.sampler.sample(self.config.mask, self.dtype)
        breakdown = train_step(self.model, self.optimizer, batch, self.config, self.gamma, self.scheduler, self.step)
        self.step += 1
        self.history.append(breakdown)
        return breakdown

    def fit(
        self,
        steps: Optional[int] = None,
        metrics_path: Optional[Union[str, Path]] = None,
        checkpoint_path: Optional[Union[str, Path]] = None,
    ) -> SequenceModel:
        """Run ``steps`` updates (default ``total_steps``); returns the model in eval mode."""
        steps = self.config.total_steps if steps is None else steps
        logger.info("Training started", steps=steps, batch_size=self.config.batch_size, gamma=self.gamma)
        with MetricsWriter(metrics_path) as metrics:
            for _ in range(steps):
                lr = self.lr
                breakdown = self.train_step()
                if self.step % self.config.log_every == 0 or self.step == 1:
                    metrics.write(self.step, breakdown, lr)
                    logger.info("Training step", step=self.step, total=breakdown.total, q_loss=breakdown.q_loss, lr=lr)
                every = self.config.checkpoint_every
                if checkpoint_path and every and self.step % every == 0:
                    self.save(checkpoint_path)
        if checkpoint_path:
            self.save(checkpoint_path)
        self.model.eval()
        return self.model

    def checkpoint_info(self) -> CheckpointInfo:
        return CheckpointInfo(
            step=self.step, seed=self.config.seed, gamma=self.gamma, env_id=self.env_id, r_max=self.r_max
        )

    def save(self, path: Union[str, Path]) -> None:
        save_checkpoint(self.model, path, self.checkpoint_info())


# ---------------------------------------------------------------------------
# Gradient verification
# ---------------------------------------------------------------------------

def grad_check_model_config() -> ModelConfig:
    """A model small enough (under 2000 parameters) to finite-difference every weight."""
    return ModelConfig(
        context_len=2,
        embed_dim=8,
        encoder_layers=1,
        decoder_layers=1,
        n_heads=2,
        mlp_ratio=2,
        dropout=0.0,
        q_layers=2,
        q_hidden=4,
    )


@dataclass
class GradCheckResult:
    max_relative_error: float
    worst_parameter: str
    n_parameters: int
    gradient_norm: float


def grad_check(
    model: SequenceModel,
    batch: MaskedSequence,
    config: TrainConfig,
    gamma: float,
    step_size: float = 1e-5,
) -> GradCheckResult:
    """
    Compare the analytic gradient of the total loss with central differences.

    Runs on a float64 copy with dropout off. The TD bootstrap values are
    frozen at the unperturbed parameters, so both sides differentiate the
    same semi-gradient objective.
    """
    checked = copy.deepcopy(model).to(torch.float64)
    checked.eval()
    batch = batch.cast(torch.float64)

    with torch.no_grad():
        frozen_next_q = checked(batch).q.clone()

    def loss() -> torch.Tensor:
        total, _ = total_loss(
            checked(batch),
            batch,
            gamma=gamma,
            nu=config.nu,
            return_scale=checked.return_scale,
            state_std=checked.state_std,
            recon_weight=config.recon_weight,
            q_weight=config.q_weight,
            next_q=frozen_next_q,
        )
        return total

    checked.zero_grad(set_to_none=False)
    loss().backward()

    worst, worst_name, sq_norm, count = 0.0, "", 0.0, 0
    with torch.no_grad():
        for name, param in checked.named_parameters():
            analytic = (param.grad if param.grad is not None else torch.zeros_like(param)).reshape(-1).clone()
            sq_norm += float((analytic ** 2).sum())
            flat = param.data.view(-1)
            for index in range(flat.numel()):
                original = float(flat[index])
                flat[index] = original + step_size
                upper = float(loss())
                flat[index] = original - step_size
                lower = float(loss())
                flat[index] = original
                numeric = (upper - lower) / (2.0 * step_size)
                a = float(analytic[index])
                error = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
                if error > worst:
                    worst, worst_name = error, f"{name}[{index}]"
                count += 1

    result = GradCheckResult(
        max_relative_error=worst,
        worst_parameter=worst_name,
        n_parameters=count,
        gradient_norm=math.sqrt(sq_norm),
    )
    logger.info("Gradient check finished", **result.__dict__)
    return result
