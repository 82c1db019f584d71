"""
Return-dial control task.
"""
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from alignrl.core.exceptions import UsageError
from alignrl.schemas.envs import DialEnvSpec
from alignrl.schemas.trajectory import ActionKind
from alignrl.services.envs.base import Action, Environment, StepResult


@dataclass(frozen=True)
class DialState:
    t: int
    cumulative: float


class DialEnv(Environment):
    """
    Each step pays ``(a + 1) / 2`` for ``a`` in [-1, 1]; the observation is
    ``(t / H, reward collected so far)``. Any return in [0, H] is reachable
    with a constant action.
    """

    env_id = "dial"
    action_kind = ActionKind.CONTINUOUS
    state_dim = 2
    action_dim = 1

    def __init__(self, spec: DialEnvSpec | None = None):
        self.spec = spec or DialEnvSpec()
        self.max_steps = self.spec.horizon

    def _observe(self, state: DialState) -> np.ndarray:
        horizon = max(self.spec.horizon, 1)
        return np.array([state.t / horizon, state.cumulative], dtype=np.float64)

    def reset(self, rng: np.random.Generator) -> Tuple[DialState, np.ndarray]:
        state = DialState(t=0, cumulative=0.0)
        return state, self._observe(state)

    def step(self, state: DialState, action: Action, rng: np.random.Generator) -> StepResult:
        if state.t >= self.spec.horizon:
            raise UsageError("episode already finished")
        a = float(self.check_action(action)[0])
        reward = (a + 1.0) / 2.0
        nxt = DialState(t=state.t + 1, cumulative=state.cumulative + reward)
        done = nxt.t >= self.spec.horizon
        info = {"outcome": "horizon"} if done else {}
        return StepResult(state=nxt, observation=self._observe(nxt), reward=reward, done=done, info=info)
