"""
Online fine-tuning with Boltzmann exploration.
"""
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from alignrl.core.logging import get_logger
from alignrl.models.sequence_model import SequenceModel
from alignrl.schemas.infer import InferConfig
from alignrl.schemas.train import TrainConfig
from alignrl.schemas.trajectory import Dataset
from alignrl.services.dataset import keep_top_returns, with_trajectories
from alignrl.services.envs import Environment
from alignrl.services.inference import Selection, rollout_aligned
from alignrl.services.trainer import Trainer

logger = get_logger(__name__)


@dataclass
class FinetuneResult:
    model: SequenceModel
    buffer: Dataset
    episode_returns: List[float] = field(default_factory=list)
    updates: int = 0
    learning_rates: List[float] = field(default_factory=list)


def online_finetune(
    env: Environment,
    model: SequenceModel,
    ds: Dataset,
    config: InferConfig,
    train_config: TrainConfig,
    gamma: Optional[float] = None,
) -> FinetuneResult:
    """
    Alternate exploration episodes with gradient updates.

    The replay buffer starts as the top ``online_buffer_percent``% of ``ds``.
    Each episode targets the buffer's current r_max with Boltzmann selection
    over candidates drawn from a ball of radius ``online_delta_fraction *
    r_max``; the episode joins the buffer and ``online_updates`` train steps
    follow. The optimizer is fresh but the offline warmup is not repeated:
    ``online_warmup_steps`` (default 0) replaces it. A zero budget leaves the
    model untouched.
    """
    gamma = ds.gamma if gamma is None else gamma
    buffer = keep_top_returns(ds, config.online_buffer_percent)
    result = FinetuneResult(model=model, buffer=buffer)
    if config.online_episodes == 0:
        logger.info("Online fine-tuning skipped", reason="zero interaction budget")
        return result

    online_config = train_config.model_copy(update={"warmup_steps": config.online_warmup_steps})
    trainer = Trainer(buffer, model.config, online_config, model=model, dtype=model.dtype)
    logger.info(
        "Online fine-tuning started",
        episodes=config.online_episodes,
        updates_per_episode=config.online_updates,
        buffer=len(buffer),
    )
    for episode in range(config.online_episodes):
        env_seq, select_seq = np.random.SeedSequence([config.seed, episode]).spawn(2)
        target = buffer.r_max
        model.eval()
        rollout = rollout_aligned(
            env,
            model,
            target,
            config,
            gamma,
            env_rng=np.random.default_rng(env_seq),
            select_rng=np.random.default_rng(select_seq),
            delta=config.online_delta_fraction * abs(buffer.r_max),
            selection=Selection.BOLTZMANN,
        )
        buffer = with_trajectories(buffer, buffer.trajectories + [rollout.trajectory])
        trainer.use_dataset(buffer)
        result.learning_rates.append(trainer.lr)
        for _ in range(config.online_updates):
            trainer.train_step()
        result.episode_returns.append(rollout.achieved_return)
        result.updates += config.online_updates
        logger.info(
            "Online episode finished",
            episode=episode,
            target=target,
            achieved=rollout.achieved_return,
            buffer=len(buffer),
            r_max=buffer.r_max,
        )

    model.eval()
    result.buffer = buffer
    return result
