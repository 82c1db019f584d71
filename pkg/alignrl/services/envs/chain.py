"""
Tabular chain MDP with an exact finite-horizon Q* oracle.
"""
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from alignrl.core.exceptions import UsageError
from alignrl.schemas.envs import ChainMdpSpec
from alignrl.schemas.trajectory import ActionKind
from alignrl.services.envs.base import Action, Environment, StepResult


def value_iteration(spec: ChainMdpSpec) -> np.ndarray:
    """
    Optimal action values by backward induction.

    Returns:
        Array ``q`` of shape (horizon, n_states, n_actions) where ``q[t]`` is
        Q* at timestep ``t``, i.e. with ``horizon - t`` decisions remaining.
    """
    probs = np.asarray(spec.transitions, dtype=np.float64)
    rewards = np.asarray(spec.rewards, dtype=np.float64)
    q = np.zeros((spec.horizon, spec.n_states, spec.n_actions), dtype=np.float64)
    next_values = np.zeros(spec.n_states, dtype=np.float64)
    for t in reversed(range(spec.horizon)):
        q[t] = rewards + spec.gamma * probs @ next_values
        next_values = q[t].max(axis=1)
    return q


@dataclass(frozen=True)
class ChainState:
    t: int
    position: int


class ChainEnv(Environment):
    """Observation is the one-hot position followed by ``t / H``."""

    env_id = "chain"
    action_kind = ActionKind.DISCRETE

    def __init__(self, spec: ChainMdpSpec | None = None):
        self.spec = spec or ChainMdpSpec.default()
        self.state_dim = self.spec.n_states + 1
        self.action_dim = self.spec.n_actions
        self.max_steps = self.spec.horizon
        self._probs = np.asarray(self.spec.transitions, dtype=np.float64)
        self._rewards = np.asarray(self.spec.rewards, dtype=np.float64)

    def _observe(self, state: ChainState) -> np.ndarray:
        obs = np.zeros(self.state_dim, dtype=np.float64)
        obs[state.position] = 1.0
        obs[-1] = state.t / max(self.spec.horizon, 1)
        return obs

    def reset(self, rng: np.random.Generator) -> Tuple[ChainState, np.ndarray]:
        state = ChainState(t=0, position=self.spec.start_state)
        return state, self._observe(state)

    def step(self, state: ChainState, action: Action, rng: np.random.Generator) -> StepResult:
        if state.t >= self.spec.horizon:
            raise UsageError("episode already finished")
        a = self.check_action(action)
        reward = float(self._rewards[state.position, a])
        position = int(rng.choice(self.spec.n_states, p=self._probs[state.position, a]))
        nxt = ChainState(t=state.t + 1, position=position)
        done = nxt.t >= self.spec.horizon
        info = {"outcome": "horizon"} if done else {}
        return StepResult(state=nxt, observation=self._observe(nxt), reward=reward, done=done, info=info)
