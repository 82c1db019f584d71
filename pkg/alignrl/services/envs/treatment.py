"""
Clinical treatment POMDP.

Hidden states are indexed ``0 = remission``, ``1 = adverse event`` and
``2 + j`` for disease state ``j``; transition rows are returned in that order.
"""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.special import expit

from alignrl.core.exceptions import SpecValidationError, UsageError
from alignrl.core.logging import get_logger
from alignrl.schemas.envs import TreatmentEnvSpec
from alignrl.schemas.trajectory import ActionKind
from alignrl.services.envs.base import Action, Environment, StepResult

logger = get_logger(__name__)

REMISSION = 0
ADVERSE = 1
N_TERMINAL = 2


def count_violations(spec: TreatmentEnvSpec, observation: np.ndarray, action: int) -> int:
    """Number of dangerous symptoms that ``action`` would push further up."""
    dangerous = np.asarray(observation) >= spec.danger_level
    shifts = np.asarray(spec.symptom_shifts[action])
    return int(np.sum(dangerous & (shifts > 0.0)))


def treatment_transition_row(
    spec: TreatmentEnvSpec,
    state: int,
    action: int,
    observation: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Next-state distribution over ``[s_r, s_a, s_1 .. s_ns]``.

    Disease-state mass is ``(1 - p_r - p_a) * (m_a)_j T_ij / sum_k (m_a)_k T_ik``.
    When ``observation`` is given, the adverse probability grows by
    ``adverse_hazard`` per dangerous symptom the treatment elevates, capped at
    ``1 - p_r``.

    Raises:
        UsageError: If the state or action index is out of range
        SpecValidationError: If the modulated row has zero mass
    """
    if not 0 <= state < spec.n_states:
        raise UsageError(f"disease state {state} outside [0, {spec.n_states})")
    if not 0 <= action < spec.n_actions:
        raise UsageError(f"action index {action} outside [0, {spec.n_actions})")

    p_remission = float(spec.remission[state][action])
    p_adverse = float(spec.adverse[state][action])
    if observation is not None:
        hazard = spec.adverse_hazard * count_violations(spec, observation, action)
        p_adverse = min(1.0 - p_remission, p_adverse + hazard)

    weights = np.asarray(spec.modulation[action], dtype=np.float64) * np.asarray(
        spec.base_transitions[state], dtype=np.float64
    )
    total = weights.sum()
    if total <= 0.0:
        raise SpecValidationError(
            f"degenerate modulation: treatment {action} removes all transition mass from state {state}"
        )

    row = np.empty(spec.n_states + N_TERMINAL, dtype=np.float64)
    row[REMISSION] = p_remission
    row[ADVERSE] = p_adverse
    row[N_TERMINAL:] = (1.0 - p_remission - p_adverse) * weights / total
    return row


def stationary_distribution(spec: TreatmentEnvSpec) -> np.ndarray:
    """Stationary distribution of the base disease graph."""
    base = np.asarray(spec.base_transitions, dtype=np.float64)
    n = base.shape[0]
    system = np.vstack([base.T - np.eye(n), np.ones((1, n))])
    target = np.zeros(n + 1)
    target[-1] = 1.0
    pi, *_ = np.linalg.lstsq(system, target, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


@dataclass(frozen=True)
class TreatmentState:
    t: int
    hidden: int
    observation: np.ndarray
    done: bool = False


class TreatmentEnv(Environment):
    """Episodes end in remission, an adverse event, or after ``max_steps`` treatments."""

    action_kind = ActionKind.DISCRETE

    def __init__(self, spec: TreatmentEnvSpec):
        self.spec = spec
        self.env_id = spec.env_id
        self.state_dim = spec.obs_dim
        self.action_dim = spec.n_actions
        self.max_steps = spec.max_steps
        self.initial_distribution = stationary_distribution(spec)
        self._obs_mean = np.asarray(spec.obs_mean, dtype=np.float64)
        self._obs_std = np.asarray(spec.obs_std, dtype=np.float64)
        self._shifts = np.asarray(spec.symptom_shifts, dtype=np.float64)

    def sample_observation(self, disease: int, action: Optional[int], rng: np.random.Generator) -> np.ndarray:
        """Symptoms ``clip(expit(o_tilde + delta_a), 0, 1)`` for a disease state."""
        latent = rng.normal(self._obs_mean[disease], self._obs_std[disease])
        if action is not None:
            latent = latent + self._shifts[action]
        return np.clip(expit(latent), 0.0, 1.0)

    def reset(self, rng: np.random.Generator) -> Tuple[TreatmentState, np.ndarray]:
        disease = int(rng.choice(self.spec.n_states, p=self.initial_distribution))
        observation = self.sample_observation(disease, None, rng)
        state = TreatmentState(t=0, hidden=N_TERMINAL + disease, observation=observation)
        return state, observation

    def reward(self, next_hidden: int, observation: np.ndarray) -> float:
        if next_hidden == REMISSION:
            return self.spec.remission_reward
        if next_hidden == ADVERSE:
            return self.spec.adverse_reward
        return -self.spec.treatment_cost - self.spec.symptom_cost * float(np.sum(observation))

    def step(self, state: TreatmentState, action: Action, rng: np.random.Generator) -> StepResult:
        if state.done:
            raise UsageError("episode already finished; terminal states accept no further treatment")
        a = self.check_action(action)
        disease = state.hidden - N_TERMINAL
        row = treatment_transition_row(self.spec, disease, a, state.observation)
        next_hidden = int(rng.choice(row.size, p=row))

        if next_hidden < N_TERMINAL:
            # terminal steps repeat the last symptoms
            observation = state.observation
        else:
            observation = self.sample_observation(next_hidden - N_TERMINAL, a, rng)

        reward = self.reward(next_hidden, observation)
        t = state.t + 1
        outcome = None
        if next_hidden == REMISSION:
            outcome = "remission"
        elif next_hidden == ADVERSE:
            outcome = "adverse"
        elif t >= self.spec.max_steps:
            outcome = "horizon"
        done = outcome is not None

        nxt = TreatmentState(t=t, hidden=next_hidden, observation=observation, done=done)
        info = {"outcome": outcome} if outcome else {}
        return StepResult(state=nxt, observation=observation, reward=reward, done=done, info=info)
