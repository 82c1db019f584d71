"""
Dense-reward point-mass maze.
"""
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from alignrl.core.exceptions import UsageError
from alignrl.schemas.envs import MazeEnvSpec
from alignrl.schemas.trajectory import ActionKind
from alignrl.services.envs.base import Action, Environment, StepResult


def maze_reward(achieved: Sequence[float], desired: Sequence[float]) -> float:
    """``exp(-||achieved - desired||_2)``, in (0, 1] and 1 only at the goal."""
    distance = float(np.linalg.norm(np.asarray(achieved, dtype=np.float64) - np.asarray(desired, dtype=np.float64)))
    return float(np.exp(-distance))


@dataclass(frozen=True)
class MazeState:
    t: int
    position: np.ndarray
    velocity: np.ndarray


class MazeEnv(Environment):
    """
    Damped double integrator in a rectangular arena with one internal wall.

    The wall runs horizontally from the left boundary, so the start (bottom
    left) and goal (top left) are joined by a U-shaped corridor around its
    free end.
    """

    env_id = "maze"
    action_kind = ActionKind.CONTINUOUS
    state_dim = 4
    action_dim = 2

    def __init__(self, spec: MazeEnvSpec | None = None):
        self.spec = spec or MazeEnvSpec()
        self.max_steps = self.spec.horizon
        self.goal = np.asarray(self.spec.goal, dtype=np.float64)

    @staticmethod
    def _observe(state: MazeState) -> np.ndarray:
        return np.concatenate([state.position, state.velocity])

    def reset(self, rng: np.random.Generator) -> Tuple[MazeState, np.ndarray]:
        noise = rng.uniform(-self.spec.start_noise, self.spec.start_noise, size=2)
        state = MazeState(
            t=0,
            position=np.asarray(self.spec.start, dtype=np.float64) + noise,
            velocity=np.zeros(2, dtype=np.float64),
        )
        return state, self._observe(state)

    def _crosses_wall(self, old: np.ndarray, new: np.ndarray) -> bool:
        wall_y = self.spec.wall_y
        below_old, below_new = old[1] - wall_y, new[1] - wall_y
        if below_old == 0.0 or below_old * below_new > 0.0:
            return False
        if new[1] == old[1]:
            return False
        x_cross = old[0] + (wall_y - old[1]) * (new[0] - old[0]) / (new[1] - old[1])
        return 0.0 <= x_cross <= self.spec.wall_x_max

    def step(self, state: MazeState, action: Action, rng: np.random.Generator) -> StepResult:
        if state.t >= self.spec.horizon:
            raise UsageError("episode already finished")
        force = self.check_action(action)
        velocity = self.spec.damping * state.velocity + self.spec.dt * force
        position = state.position + self.spec.dt * velocity

        if self._crosses_wall(state.position, position):
            # slide along the wall
            position[1] = state.position[1]
            velocity[1] = 0.0

        upper = np.asarray(self.spec.arena, dtype=np.float64)
        clipped = np.clip(position, 0.0, upper)
        velocity = np.where(clipped != position, 0.0, velocity)

        nxt = MazeState(t=state.t + 1, position=clipped, velocity=velocity)
        reward = maze_reward(clipped, self.goal)
        done = nxt.t >= self.spec.horizon
        info = {"outcome": "horizon"} if done else {}
        return StepResult(state=nxt, observation=self._observe(nxt), reward=reward, done=done, info=info)
