"""
Environment specifications.
"""
from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from alignrl.core.exceptions import SpecValidationError

PROBABILITY_ATOL = 1e-9


class DialEnvSpec(BaseModel):
    """Return-dial control task: reward (a + 1) / 2 per step for a in [-1, 1]."""
    model_config = ConfigDict(frozen=True)

    kind: str = "dial"
    horizon: int = Field(20, ge=0, description="Episode length H")


class MazeEnvSpec(BaseModel):
    """Damped point mass in a U-shaped arena with an exponential distance reward."""
    model_config = ConfigDict(frozen=True)

    kind: str = "maze"
    horizon: int = Field(300, ge=0)
    arena: Tuple[float, float] = (3.0, 3.0)
    goal: Tuple[float, float] = (0.5, 2.5)
    start: Tuple[float, float] = (0.5, 0.5)
    start_noise: float = Field(0.05, ge=0.0)
    damping: float = Field(0.9, gt=0.0, le=1.0)
    dt: float = Field(0.1, gt=0.0)
    # internal wall: horizontal segment at wall_y spanning [0, wall_x_max]
    wall_y: float = 1.5
    wall_x_max: float = 2.0


class TreatmentEnvSpec(BaseModel):
    """
    Clinical treatment POMDP.

    Hidden states are indexed ``0 = remission``, ``1 = adverse event`` and
    ``2 + j`` for disease state ``j``. Table layouts:

    * ``base_transitions``: (n_states, n_states), row-stochastic
    * ``modulation``: (n_actions, n_states), nonnegative m_a
    * ``remission`` / ``adverse``: (n_states, n_actions) probabilities
    * ``obs_mean`` / ``obs_std``: (n_states, obs_dim) logit-space Gaussian draws
    * ``symptom_shifts``: (n_actions, obs_dim) delta_a
    """
    model_config = ConfigDict(frozen=True)

    kind: str = "treatment"
    seed: int = 0
    n_states: int = Field(8, ge=1)
    n_actions: int = Field(6, ge=1)
    obs_dim: int = Field(8, ge=1)
    base_transitions: List[List[float]]
    modulation: List[List[float]]
    remission: List[List[float]]
    adverse: List[List[float]]
    obs_mean: List[List[float]]
    obs_std: List[List[float]]
    symptom_shifts: List[List[float]]
    remission_reward: float = 16.0
    adverse_reward: float = -16.0
    treatment_cost: float = 1.0
    symptom_cost: float = 0.2
    danger_threshold: float = Field(0.6, gt=0.0, le=2.0)
    adverse_hazard: float = Field(0.15, ge=0.0, le=1.0)
    max_steps: int = Field(8, ge=1)

    @model_validator(mode="after")
    def _validate_tables(self) -> "TreatmentEnvSpec":
        n_s, n_a, d_o = self.n_states, self.n_actions, self.obs_dim
        shapes = {
            "base_transitions": (n_s, n_s),
            "modulation": (n_a, n_s),
            "remission": (n_s, n_a),
            "adverse": (n_s, n_a),
            "obs_mean": (n_s, d_o),
            "obs_std": (n_s, d_o),
            "symptom_shifts": (n_a, d_o),
        }
        for name, shape in shapes.items():
            table = np.asarray(getattr(self, name), dtype=np.float64)
            if table.shape != shape:
                raise SpecValidationError(f"{name} has shape {table.shape}, expected {shape}")
            if not np.all(np.isfinite(table)):
                raise SpecValidationError(f"{name} contains non-finite values")

        base = np.asarray(self.base_transitions)
        if np.any(base < 0) or not np.allclose(base.sum(axis=1), 1.0, atol=PROBABILITY_ATOL, rtol=0.0):
            raise SpecValidationError("base_transitions must be nonnegative and row-stochastic")
        if np.any(np.asarray(self.modulation) < 0):
            raise SpecValidationError("modulation vectors must be nonnegative")

        remission = np.asarray(self.remission)
        adverse = np.asarray(self.adverse)
        if np.any(remission < 0) or np.any(adverse < 0):
            raise SpecValidationError("remission and adverse probabilities must be nonnegative")
        if np.any(remission + adverse > 1.0 + PROBABILITY_ATOL):
            raise SpecValidationError("remission + adverse probability exceeds 1")
        if np.any(np.asarray(self.obs_std) <= 0):
            raise SpecValidationError("observation std must be positive")
        if self.remission_reward <= 0:
            raise SpecValidationError("remission reward must be positive")
        if self.adverse_reward != -self.remission_reward:
            raise SpecValidationError("adverse reward must equal -remission reward")
        return self

    @property
    def env_id(self) -> str:
        return f"treatment:{self.seed}"

    @property
    def danger_level(self) -> float:
        """Symptom level at or above which a symptom counts as dangerous."""
        return 1.0 - self.danger_threshold / 2.0

    @classmethod
    def generate(cls, seed: int, **overrides) -> "TreatmentEnvSpec":
        """
        Procedurally instantiate a disease from ``seed``.

        Transition graphs are Dirichlet rows with a self-loop bonus,
        modulation vectors are log-normal, symptom shifts are sparse.
        Size and reward constants may be overridden.
        """
        sizes = {
            "n_states": overrides.pop("n_states", 8),
            "n_actions": overrides.pop("n_actions", 6),
            "obs_dim": overrides.pop("obs_dim", 8),
        }
        n_s, n_a, d_o = sizes["n_states"], sizes["n_actions"], sizes["obs_dim"]
        rng = np.random.default_rng(seed)

        base = rng.dirichlet(np.full(n_s, 0.7), size=n_s) + np.eye(n_s)
        base /= base.sum(axis=1, keepdims=True)
        modulation = rng.lognormal(mean=0.0, sigma=0.75, size=(n_a, n_s))
        remission = rng.beta(1.2, 6.0, size=(n_s, n_a))
        adverse = rng.uniform(0.0, 0.03, size=(n_s, n_a))
        obs_mean = rng.normal(0.0, 1.0, size=(n_s, d_o))
        obs_std = rng.uniform(0.2, 0.6, size=(n_s, d_o))
        active = rng.random((n_a, d_o)) < 0.3
        shifts = np.where(active, rng.normal(0.0, 1.5, size=(n_a, d_o)), 0.0)

        remission_reward = float(overrides.pop("remission_reward", 16.0))
        fields = dict(
            seed=seed,
            **sizes,
            base_transitions=base.tolist(),
            modulation=modulation.tolist(),
            remission=remission.tolist(),
            adverse=adverse.tolist(),
            obs_mean=obs_mean.tolist(),
            obs_std=obs_std.tolist(),
            symptom_shifts=shifts.tolist(),
            remission_reward=remission_reward,
            adverse_reward=-remission_reward,
        )
        fields.update(overrides)
        return cls(**fields)


class ChainMdpSpec(BaseModel):
    """
    Tabular finite-horizon chain.

    ``transitions[s][a][s']`` is a probability table, ``rewards[s][a]`` the
    (deterministic) immediate reward of taking ``a`` in ``s``.
    """
    model_config = ConfigDict(frozen=True)

    kind: str = "chain"
    n_states: int = Field(5, ge=1)
    n_actions: int = Field(2, ge=2, le=3)
    horizon: int = Field(6, ge=0)
    gamma: float = Field(1.0, ge=0.0, le=1.0)
    start_state: int = 0
    transitions: List[List[List[float]]]
    rewards: List[List[float]]

    @model_validator(mode="after")
    def _validate_tables(self) -> "ChainMdpSpec":
        n, n_a = self.n_states, self.n_actions
        probs = np.asarray(self.transitions, dtype=np.float64)
        if probs.shape != (n, n_a, n):
            raise SpecValidationError(f"transitions has shape {probs.shape}, expected {(n, n_a, n)}")
        if np.any(probs < 0) or not np.allclose(probs.sum(axis=2), 1.0, atol=PROBABILITY_ATOL, rtol=0.0):
            raise SpecValidationError("transition rows must be probability vectors")
        if np.asarray(self.rewards).shape != (n, n_a):
            raise SpecValidationError(f"rewards must have shape {(n, n_a)}")
        if not 0 <= self.start_state < n:
            raise SpecValidationError("start_state outside the chain")
        return self

    @property
    def env_id(self) -> str:
        return "chain"

    @classmethod
    def default(
        cls,
        n_states: int = 5,
        n_actions: int = 2,
        horizon: int = 6,
        slip: float = 0.2,
        goal_reward: float = 1.0,
        start_reward: float = 0.1,
    ) -> "ChainMdpSpec":
        """
        Left/right (and optionally stay) chain with a slippery move.

        Action 0 moves left, 1 moves right, 2 stays. A move succeeds with
        probability ``1 - slip`` and otherwise leaves the state unchanged.
        The rightmost state pays ``goal_reward`` per action, the leftmost
        ``start_reward``.
        """
        probs = np.zeros((n_states, n_actions, n_states))
        for s in range(n_states):
            for a in range(n_actions):
                step = {0: -1, 1: 1, 2: 0}[a]
                target = min(max(s + step, 0), n_states - 1)
                probs[s, a, target] += 1.0 - slip
                probs[s, a, s] += slip
        rewards = np.zeros((n_states, n_actions))
        rewards[n_states - 1, :] = goal_reward
        rewards[0, :] = start_reward
        return cls(
            n_states=n_states,
            n_actions=n_actions,
            horizon=horizon,
            transitions=probs.tolist(),
            rewards=rewards.tolist(),
        )


EnvSpec = DialEnvSpec | MazeEnvSpec | TreatmentEnvSpec | ChainMdpSpec
