"""
Behavior policies and offline dataset collection.
"""
import copy
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence, Union

import numpy as np

from alignrl.core.config import settings
from alignrl.core.exceptions import UsageError
from alignrl.core.logging import get_logger
from alignrl.schemas.envs import EnvSpec
from alignrl.schemas.policy import (
    EpsilonGreedySpec,
    MixturePolicySpec,
    PolicyConfig,
    PolicyKind,
    SocPolicyState,
)
from alignrl.schemas.trajectory import Dataset, Trajectory
from alignrl.services.dataset import build_trajectory, make_dataset
from alignrl.services.envs import ChainEnv, DialEnv, Environment, MazeEnv, TreatmentEnv, env_from_spec, value_iteration
from alignrl.services.envs.base import Action

logger = get_logger(__name__)


# ---------------------------------------------------------------------------
# Standard-of-care bandit
# ---------------------------------------------------------------------------

def symptom_violations(policy_state: SocPolicyState, observation: np.ndarray) -> np.ndarray:
    """Per-action count of dangerous symptoms the action would raise."""
    dangerous = np.asarray(observation, dtype=np.float64) >= policy_state.danger_level
    return np.sum((policy_state.shifts > 0.0) & dangerous[None, :], axis=1)


def soc_select(policy_state: SocPolicyState, observation: np.ndarray) -> int:
    """
    Greedy action within the symptom-safe set.

    An action is safe when it does not raise any symptom already at or above
    ``1 - kappa / 2``. With no safe action the least-violating one is chosen.
    Ties resolve to the lowest index.
    """
    violations = symptom_violations(policy_state, observation)
    safe = violations == 0
    if not safe.any():
        return int(np.argmin(violations))
    masked = np.where(safe, policy_state.values, -np.inf)
    return int(np.argmax(masked))


def soc_update(policy_state: SocPolicyState, action: int, reward: float) -> SocPolicyState:
    """Recency-weighted update ``Q(a) += alpha * (R - Q(a))`` on the taken action only."""
    if not 0 <= action < policy_state.n_actions:
        raise UsageError(f"action index {action} outside [0, {policy_state.n_actions})")
    values = policy_state.values.copy()
    values[action] = values[action] + policy_state.alpha * (reward - values[action])
    return policy_state.with_values(values)


def estimate_initial_values(env: TreatmentEnv, n_draws: int = 10_000, seed: int = 0) -> np.ndarray:
    """
    Monte-Carlo estimate of ``Q_0(a) = E[R | a]`` from single-step draws.

    Each draw resets the environment (stationary disease mix) and applies
    ``a`` once; the estimate is the mean immediate reward.
    """
    if n_draws < 1:
        raise UsageError(f"n_draws must be >= 1, got {n_draws}")
    rng = np.random.default_rng(seed)
    values = np.zeros(env.action_dim, dtype=np.float64)
    for action in range(env.action_dim):
        total = 0.0
        for _ in range(n_draws):
            state, _ = env.reset(rng)
            total += env.step(state, action, rng).reward
        values[action] = total / n_draws
    logger.debug("Estimated initial treatment values", env_id=env.env_id, draws=n_draws, values=values.tolist())
    return values


class BehaviorPolicy(ABC):
    """Per-episode stateful behavior policy; one instance per rollout worker."""

    def begin_episode(self, rng: np.random.Generator) -> None:
        """Reset per-episode state."""

    @abstractmethod
    def act(self, observation: np.ndarray, rng: np.random.Generator) -> Action:
        """Choose an action for the current observation."""

    def observe(self, action: Action, reward: float) -> None:
        """Feed back the reward of the last action."""


class SocPolicy(BehaviorPolicy):
    """Standard-of-care policy; estimates restart from Q_0 every episode."""

    def __init__(self, initial_state: SocPolicyState):
        self.initial_state = initial_state
        self.state = initial_state

    @classmethod
    def for_env(cls, env: TreatmentEnv, alpha: float = 0.25, n_draws: int = 10_000, seed: int = 0) -> "SocPolicy":
        values = estimate_initial_values(env, n_draws=n_draws, seed=seed)
        return cls(SocPolicyState(
            values=values,
            alpha=alpha,
            danger_threshold=env.spec.danger_threshold,
            shifts=np.asarray(env.spec.symptom_shifts, dtype=np.float64),
        ))

    def begin_episode(self, rng: np.random.Generator) -> None:
        self.state = self.initial_state

    def act(self, observation: np.ndarray, rng: np.random.Generator) -> Action:
        return np.int64(soc_select(self.state, observation))

    def observe(self, action: Action, reward: float) -> None:
        self.state = soc_update(self.state, int(action), reward)


# ---------------------------------------------------------------------------
# Coverage policies for the toy environments
# ---------------------------------------------------------------------------

class MixturePolicy(BehaviorPolicy):
    """Constant bias per episode plus Gaussian jitter per step."""

    def __init__(self, spec: Optional[MixturePolicySpec] = None, action_dim: int = 1):
        self.spec = spec or MixturePolicySpec()
        self.action_dim = action_dim
        self.bias = 0.0

    def begin_episode(self, rng: np.random.Generator) -> None:
        self.bias = float(rng.uniform(self.spec.bias_low, self.spec.bias_high))

    def act(self, observation: np.ndarray, rng: np.random.Generator) -> Action:
        noise = self.spec.sigma * rng.standard_normal(self.action_dim)
        return np.clip(self.bias + noise, -1.0, 1.0)


class EpsilonGreedyPolicy(BehaviorPolicy):
    """Greedy controller that acts uniformly at random with a per-episode probability."""

    def __init__(self, spec: Optional[EpsilonGreedySpec] = None):
        self.spec = spec or EpsilonGreedySpec()
        self.epsilon = self.spec.epsilon_low

    def begin_episode(self, rng: np.random.Generator) -> None:
        self.epsilon = float(rng.uniform(self.spec.epsilon_low, self.spec.epsilon_high))

    @abstractmethod
    def greedy(self, observation: np.ndarray) -> Action:
        """Action of the underlying controller."""

    @abstractmethod
    def random_action(self, rng: np.random.Generator) -> Action:
        """Uniform exploratory action."""

    def act(self, observation: np.ndarray, rng: np.random.Generator) -> Action:
        if rng.random() < self.epsilon:
            return self.random_action(rng)
        return self.greedy(observation)


class ChainEpsilonGreedy(EpsilonGreedyPolicy):
    """Epsilon-greedy on the chain's exact Q*."""

    def __init__(self, env: ChainEnv, spec: Optional[EpsilonGreedySpec] = None):
        super().__init__(spec)
        self.env = env
        self.q_star = value_iteration(env.spec)

    def greedy(self, observation: np.ndarray) -> Action:
        horizon = self.env.spec.horizon
        position = int(np.argmax(observation[:-1]))
        t = min(int(round(float(observation[-1]) * max(horizon, 1))), horizon - 1)
        return np.int64(np.argmax(self.q_star[t, position]))

    def random_action(self, rng: np.random.Generator) -> Action:
        return np.int64(rng.integers(self.env.action_dim))


class MazeEpsilonGreedy(EpsilonGreedyPolicy):
    """
    Epsilon-greedy around a waypoint controller.

    The controller drives along the corridor past the free end of the wall,
    then up, then back to the goal, with a PD force law.
    """

    WAYPOINT_RADIUS = 0.25
    GAIN = 2.0
    DAMPING = 1.0

    def __init__(self, env: MazeEnv, spec: Optional[EpsilonGreedySpec] = None):
        super().__init__(spec)
        maze = env.spec
        corridor_x = (maze.wall_x_max + maze.arena[0]) / 2.0
        self.waypoints = [
            np.array([corridor_x, maze.start[1]]),
            np.array([corridor_x, maze.goal[1]]),
            np.asarray(maze.goal, dtype=np.float64),
        ]
        self.target = 0

    def begin_episode(self, rng: np.random.Generator) -> None:
        super().begin_episode(rng)
        self.target = 0

    def greedy(self, observation: np.ndarray) -> Action:
        position, velocity = observation[:2], observation[2:4]
        while (
            self.target < len(self.waypoints) - 1
            and np.linalg.norm(self.waypoints[self.target] - position) < self.WAYPOINT_RADIUS
        ):
            self.target += 1
        error = self.waypoints[self.target] - position
        return np.clip(self.GAIN * error - self.DAMPING * velocity, -1.0, 1.0)

    def random_action(self, rng: np.random.Generator) -> Action:
        return rng.uniform(-1.0, 1.0, size=2)


def make_behavior_policy(env: Environment, config: Optional[PolicyConfig] = None) -> BehaviorPolicy:
    """
    Build the configured behavior policy for ``env``.

    Raises:
        UsageError: If the policy kind does not apply to the environment
    """
    config = config or PolicyConfig()
    if config.kind == PolicyKind.SOC:
        if not isinstance(env, TreatmentEnv):
            raise UsageError(f"policy 'soc' needs a treatment env, got {env.env_id}")
        return SocPolicy.for_env(env, alpha=config.alpha, n_draws=config.q0_draws, seed=config.q0_seed)
    if config.kind == PolicyKind.MIXTURE:
        if not isinstance(env, DialEnv):
            raise UsageError(f"policy 'mixture' needs the dial env, got {env.env_id}")
        return MixturePolicy(config.mixture_spec(), action_dim=env.action_dim)
    if isinstance(env, ChainEnv):
        return ChainEpsilonGreedy(env, config.epsilon_spec())
    if isinstance(env, MazeEnv):
        return MazeEpsilonGreedy(env, config.epsilon_spec())
    raise UsageError(f"policy 'epsgreedy' needs the chain or maze env, got {env.env_id}")


# ---------------------------------------------------------------------------
# Collection
# ---------------------------------------------------------------------------

def run_behavior_episode(
    env: Environment,
    policy: BehaviorPolicy,
    gamma: float,
    rng: np.random.Generator,
) -> Trajectory:
    """Roll out one full episode of ``policy``; env and policy share ``rng``."""
    state, observation = env.reset(rng)
    policy.begin_episode(rng)
    states: List[np.ndarray] = []
    actions: List[Action] = []
    rewards: List[float] = []
    done = env.max_steps == 0
    while not done:
        action = env.check_action(policy.act(observation, rng))
        result = env.step(state, action, rng)
        policy.observe(action, result.reward)
        states.append(observation)
        actions.append(action)
        rewards.append(result.reward)
        state, observation, done = result.state, result.observation, result.done
    return build_trajectory(
        states, actions, rewards, gamma, env.action_kind, env.state_dim, env.action_dim
    )


def _collect_shard(
    env: Environment, policy: BehaviorPolicy, episode_indices: Sequence[int], gamma: float, seed: int
) -> List[Trajectory]:
    return [
        run_behavior_episode(env, policy, gamma, np.random.default_rng(np.random.SeedSequence([seed, int(index)])))
        for index in episode_indices
    ]


def collect_dataset(
    env: Union[Environment, EnvSpec],
    policy: BehaviorPolicy,
    n_episodes: int,
    gamma: float,
    seed: int,
    workers: Optional[int] = None,
) -> Dataset:
    """
    Roll out ``n_episodes`` behavior episodes into a dataset.

    Episode ``i`` draws from its own generator seeded by ``(seed, i)``, so
    the dataset does not depend on ``workers``. Episodes are split into
    contiguous shards, one per worker with its own copy of the policy, and
    shards are concatenated in episode order.

    Raises:
        UsageError: If n_episodes < 1 or gamma is outside [0, 1]
    """
    if n_episodes < 1:
        raise UsageError(f"n_episodes must be >= 1, got {n_episodes}")
    if not 0.0 <= gamma <= 1.0:
        raise UsageError(f"gamma must lie in [0, 1], got {gamma}")
    if not isinstance(env, Environment):
        env = env_from_spec(env)
    workers = max(1, min(workers or settings.WORKERS, n_episodes))

    shard_indices = np.array_split(np.arange(n_episodes), workers)
    logger.info(
        "Collecting dataset",
        env_id=env.env_id,
        policy=type(policy).__name__,
        episodes=n_episodes,
        workers=workers,
        seed=seed,
    )
    if workers == 1:
        shards = [_collect_shard(env, policy, range(n_episodes), gamma, seed)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_collect_shard, env, copy.deepcopy(policy), indices, gamma, seed)
                for indices in shard_indices
            ]
            shards = [future.result() for future in futures]

    trajectories = [traj for shard in shards for traj in shard]
    ds = make_dataset(trajectories, gamma, env.env_id, env.state_dim, env.action_dim, env.action_kind)
    logger.info("Dataset collected", trajectories=len(ds), transitions=ds.n_transitions, r_max=ds.r_max)
    return ds
