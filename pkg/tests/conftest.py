"""
Pytest configuration and shared fixtures.
"""
from typing import List, Optional, Sequence

import numpy as np
import pytest
import torch

from alignrl.models.sequence_model import SequenceModel, build_model
from alignrl.schemas.model import ModelConfig
from alignrl.schemas.train import TrainConfig
from alignrl.schemas.trajectory import ActionKind, Dataset, Trajectory
from alignrl.services.behavior import MixturePolicy, collect_dataset
from alignrl.services.dataset import build_trajectory, make_dataset
from alignrl.services.envs import DialEnv, TreatmentEnv, make_env
from alignrl.services.trainer import grad_check_model_config, model_config_for_dataset
from tests.test_config import TestConfig, pytest_collection_modifyitems, pytest_configure  # noqa: F401


class TrajectoryFactory:
    """Factory for hand-built trajectories and datasets."""

    @staticmethod
    def continuous(rewards: Sequence[float], gamma: float = 1.0, state_dim: int = 2, action_dim: int = 1) -> Trajectory:
        horizon = len(rewards)
        states = np.arange(horizon * state_dim, dtype=np.float64).reshape(horizon, state_dim) / 10.0
        actions = np.linspace(-1.0, 1.0, max(horizon, 1))[:horizon, None].repeat(action_dim, axis=1)
        return build_trajectory(states, actions, rewards, gamma, ActionKind.CONTINUOUS, state_dim, action_dim)

    @staticmethod
    def discrete(rewards: Sequence[float], gamma: float = 1.0, state_dim: int = 3, n_actions: int = 4) -> Trajectory:
        horizon = len(rewards)
        states = np.ones((horizon, state_dim), dtype=np.float64)
        actions = np.arange(horizon) % n_actions
        return build_trajectory(states, actions, rewards, gamma, ActionKind.DISCRETE, state_dim, n_actions)

    @classmethod
    def dataset(
        cls,
        returns: Sequence[float],
        gamma: float = 1.0,
        horizon: int = 3,
        env_id: str = "dial",
    ) -> Dataset:
        """One continuous trajectory per entry, each summing to that return."""
        trajectories: List[Trajectory] = [
            cls.continuous([value / horizon] * horizon, gamma=gamma) for value in returns
        ]
        return make_dataset(trajectories, gamma, env_id, 2, 1, ActionKind.CONTINUOUS)


@pytest.fixture
def factory() -> type:
    return TrajectoryFactory


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(TestConfig.SEED)


@pytest.fixture
def dial_env() -> DialEnv:
    """Short-horizon dial task."""
    return make_env("dial", horizon=TestConfig.DIAL_HORIZON)


@pytest.fixture(scope="session")
def treatment_env() -> TreatmentEnv:
    return make_env("treatment:0")


@pytest.fixture
def dial_dataset(dial_env: DialEnv) -> Dataset:
    return collect_dataset(
        dial_env, MixturePolicy(action_dim=dial_env.action_dim), TestConfig.DIAL_EPISODES, 1.0, seed=TestConfig.SEED
    )


@pytest.fixture
def tiny_config(dial_dataset: Dataset) -> ModelConfig:
    return model_config_for_dataset(grad_check_model_config(), dial_dataset)


@pytest.fixture
def tiny_model(tiny_config: ModelConfig) -> SequenceModel:
    model = build_model(tiny_config, seed=TestConfig.SEED)
    model.eval()
    return model


@pytest.fixture
def fast_train_config() -> TrainConfig:
    """Small batches, no warmup, a few steps."""
    return TrainConfig(
        lr=1e-3,
        warmup_steps=0,
        total_steps=TestConfig.TRAIN_STEPS,
        batch_size=8,
        log_every=5,
        seed=TestConfig.SEED,
    )


def make_model(config: ModelConfig, seed: Optional[int] = None, dtype: torch.dtype = torch.float32) -> SequenceModel:
    model = build_model(config, seed=TestConfig.SEED if seed is None else seed, dtype=dtype)
    model.eval()
    return model
