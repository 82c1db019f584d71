"""
Unit tests for the environments and their registry.
"""
import numpy as np
import pytest

from alignrl.core.exceptions import UsageError, VersionMismatchError
from alignrl.core.serialization import write_records
from alignrl.schemas.envs import ChainMdpSpec, TreatmentEnvSpec
from alignrl.services.envs import (
    ChainEnv,
    env_reset,
    env_step,
    load_env_spec,
    make_env,
    maze_reward,
    save_env_spec,
    spec_for_env_id,
    stationary_distribution,
    treatment_transition_row,
    value_iteration,
)
from alignrl.services.envs.treatment import count_violations


def run_constant(env, action, seed=0):
    rng = np.random.default_rng(seed)
    state, _ = env_reset(env, rng)
    total, done, steps = 0.0, False, 0
    while not done:
        state, _, reward, done = env_step(env, state, action, rng)
        total += reward
        steps += 1
    return total, steps, state


@pytest.mark.unit
class TestDial:
    """Return-dial task."""

    def test_reset_observation(self, dial_env, rng):
        _, obs = dial_env.reset(rng)
        np.testing.assert_array_equal(obs, [0.0, 0.0])

    @pytest.mark.parametrize("action, expected", [(1.0, 5.0), (-1.0, 0.0), (0.0, 2.5), (7.0, 5.0)])
    def test_constant_action_return(self, dial_env, action, expected):
        total, steps, _ = run_constant(dial_env, np.array([action]))
        assert steps == 5
        assert total == pytest.approx(expected)

    def test_observation_tracks_progress(self, dial_env, rng):
        state, _ = dial_env.reset(rng)
        result = dial_env.step(state, np.array([0.0]), rng)
        np.testing.assert_allclose(result.observation, [0.2, 0.5])

    def test_step_after_end_is_rejected(self, dial_env):
        _, _, state = run_constant(dial_env, np.array([0.0]))
        with pytest.raises(UsageError):
            dial_env.step(state, np.array([0.0]), np.random.default_rng(0))


@pytest.mark.unit
class TestMaze:
    """Point-mass maze."""

    def test_reward_at_goal(self):
        assert maze_reward([0.5, 2.5], [0.5, 2.5]) == 1.0

    def test_reward_decays_with_distance(self):
        assert maze_reward([0.0, 0.0], [3.0, 4.0]) == pytest.approx(np.exp(-5.0))

    def test_wall_blocks_the_direct_path(self):
        env = make_env("maze", horizon=100)
        rng = np.random.default_rng(0)
        state, _ = env.reset(rng)
        for _ in range(100):
            result = env.step(state, np.array([0.0, 1.0]), rng)
            state = result.state
            assert state.position[1] < env.spec.wall_y
            assert 0.0 < result.reward <= 1.0

    def test_stays_in_the_arena(self):
        env = make_env("maze", horizon=50)
        rng = np.random.default_rng(1)
        state, _ = env.reset(rng)
        for _ in range(50):
            state = env.step(state, np.array([-1.0, -1.0]), rng).state
        assert np.all(state.position >= 0.0)


@pytest.mark.unit
class TestTreatment:
    """Clinical treatment environment."""

    def test_transition_rows_are_distributions(self, treatment_env):
        spec = treatment_env.spec
        for state in range(spec.n_states):
            for action in range(spec.n_actions):
                row = treatment_transition_row(spec, state, action)
                assert np.all(row >= 0.0)
                assert row.sum() == pytest.approx(1.0, abs=1e-12)

    def test_dangerous_symptoms_raise_adverse_risk(self):
        spec = TreatmentEnvSpec.generate(0)
        shifts = np.asarray(spec.symptom_shifts)
        action = int(np.argmax((shifts > 0).sum(axis=1)))
        assert (shifts[action] > 0).any()
        observation = np.ones(spec.obs_dim)

        assert count_violations(spec, observation, action) == int((shifts[action] > 0).sum())
        calm = treatment_transition_row(spec, 0, action)
        risky = treatment_transition_row(spec, 0, action, observation)
        assert risky[1] > calm[1] or risky[1] == pytest.approx(1.0 - calm[0])
        assert risky.sum() == pytest.approx(1.0, abs=1e-12)

    def test_calm_symptoms_add_no_risk(self, treatment_env):
        spec = treatment_env.spec
        observation = np.zeros(spec.obs_dim)
        for action in range(spec.n_actions):
            assert count_violations(spec, observation, action) == 0
            np.testing.assert_array_equal(
                treatment_transition_row(spec, 0, action, observation),
                treatment_transition_row(spec, 0, action),
            )

    def test_stationary_distribution_is_fixed_point(self, treatment_env):
        pi = stationary_distribution(treatment_env.spec)
        base = np.asarray(treatment_env.spec.base_transitions)
        np.testing.assert_allclose(pi @ base, pi, atol=1e-9)
        assert pi.sum() == pytest.approx(1.0)

    def test_rows_match_a_direct_evaluation(self):
        spec = TreatmentEnvSpec.generate(5)
        for state in range(spec.n_states):
            for action in range(spec.n_actions):
                p_r, p_a = spec.remission[state][action], spec.adverse[state][action]
                weights = [spec.modulation[action][j] * spec.base_transitions[state][j] for j in range(spec.n_states)]
                expected = [p_r, p_a] + [(1.0 - p_r - p_a) * w / sum(weights) for w in weights]
                np.testing.assert_allclose(
                    treatment_transition_row(spec, state, action), expected, rtol=1e-12, atol=1e-15
                )

    def test_identity_modulation_keeps_the_base_row(self):
        spec = TreatmentEnvSpec.generate(2)
        spec = spec.model_copy(update={"modulation": [[1.0] * spec.n_states for _ in range(spec.n_actions)]})
        base = np.asarray(spec.base_transitions)
        for state in range(spec.n_states):
            for action in range(spec.n_actions):
                row = treatment_transition_row(spec, state, action)
                scale = 1.0 - row[0] - row[1]
                np.testing.assert_allclose(row[2:], scale * base[state] / base[state].sum(), atol=1e-12)

    def test_certain_remission_is_a_point_mass(self):
        spec = TreatmentEnvSpec.generate(0)
        spec = spec.model_copy(update={
            "remission": [[1.0] * spec.n_actions for _ in range(spec.n_states)],
            "adverse": [[0.0] * spec.n_actions for _ in range(spec.n_states)],
        })
        row = treatment_transition_row(spec, 3, 1)
        expected = np.zeros(spec.n_states + 2)
        expected[0] = 1.0
        np.testing.assert_array_equal(row, expected)

    @pytest.mark.slow
    def test_initial_states_follow_the_stationary_distribution(self, treatment_env):
        rng = np.random.default_rng(0)
        n = 100_000
        starts = np.array([treatment_env.reset(rng)[0].hidden - 2 for _ in range(n)])
        freq = np.bincount(starts, minlength=treatment_env.spec.n_states) / n
        pi = stationary_distribution(treatment_env.spec)
        sigma = np.sqrt(pi * (1.0 - pi) / n)
        assert np.all(np.abs(freq - pi) <= 4 * sigma + 1e-12)

    @pytest.mark.slow
    def test_observations_stay_in_the_unit_box(self, treatment_env):
        rng = np.random.default_rng(1)
        state, obs = treatment_env.reset(rng)
        low, high = obs.min(), obs.max()
        for _ in range(100_000):
            result = treatment_env.step(state, int(rng.integers(treatment_env.action_dim)), rng)
            state, obs = result.state, result.observation
            low, high = min(low, obs.min()), max(high, obs.max())
            if result.done:
                state, obs = treatment_env.reset(rng)
        assert 0.0 <= low <= high <= 1.0

    def test_bad_indices_are_rejected(self, treatment_env):
        with pytest.raises(UsageError):
            treatment_transition_row(treatment_env.spec, treatment_env.spec.n_states, 0)
        with pytest.raises(UsageError):
            treatment_transition_row(treatment_env.spec, 0, -1)

    def test_episodes_end_with_an_outcome(self, treatment_env):
        rng = np.random.default_rng(3)
        for _ in range(20):
            state, obs = treatment_env.reset(rng)
            assert np.all((obs >= 0.0) & (obs <= 1.0))
            for _ in range(treatment_env.max_steps):
                result = treatment_env.step(state, 0, rng)
                state = result.state
                if result.done:
                    break
            assert result.done
            assert result.info["outcome"] in {"remission", "adverse", "horizon"}
            if result.info["outcome"] == "remission":
                assert result.reward == treatment_env.spec.remission_reward
            if result.info["outcome"] == "adverse":
                assert result.reward == treatment_env.spec.adverse_reward
            with pytest.raises(UsageError):
                treatment_env.step(state, 0, rng)

    def test_same_seed_same_episode(self, treatment_env):
        first = run_constant(treatment_env, 1, seed=11)
        second = run_constant(treatment_env, 1, seed=11)
        assert first[:2] == second[:2]


@pytest.mark.unit
class TestChain:
    """Tabular chain and its Q* oracle."""

    def test_two_state_backward_induction(self):
        spec = ChainMdpSpec.default(n_states=2, horizon=2, slip=0.0)
        q = value_iteration(spec)

        np.testing.assert_allclose(q[1], [[0.1, 0.1], [1.0, 1.0]])
        np.testing.assert_allclose(q[0], [[0.2, 1.1], [1.1, 2.0]])

    def test_bellman_consistency(self):
        spec = ChainMdpSpec.default(n_actions=3, slip=0.3)
        q = value_iteration(spec)
        probs = np.asarray(spec.transitions)
        rewards = np.asarray(spec.rewards)
        for t in range(spec.horizon - 1):
            np.testing.assert_allclose(q[t], rewards + probs @ q[t + 1].max(axis=1))

    def test_observation_is_one_hot_plus_time(self):
        env = ChainEnv()
        state, obs = env.reset(np.random.default_rng(0))
        assert obs.shape == (env.spec.n_states + 1,)
        assert obs[env.spec.start_state] == 1.0
        assert obs[-1] == 0.0

    @pytest.mark.parametrize("action", [2, -1, 1.0, np.array([0, 1])])
    def test_invalid_actions(self, action):
        env = ChainEnv()
        state, _ = env.reset(np.random.default_rng(0))
        with pytest.raises(UsageError):
            env.step(state, action, np.random.default_rng(0))

    def test_numpy_integer_action_is_accepted(self):
        env = ChainEnv()
        state, _ = env.reset(np.random.default_rng(0))
        assert env.step(state, np.int64(1), np.random.default_rng(0)).reward == pytest.approx(0.1)


@pytest.mark.unit
class TestRegistry:
    """Env ids and spec files."""

    @pytest.mark.parametrize("env_id, expected", [
        ("dial", "dial"), ("maze", "maze"), ("chain", "chain"), ("treatment:3", "treatment:3"),
    ])
    def test_known_ids(self, env_id, expected):
        assert make_env(env_id).env_id == expected

    @pytest.mark.parametrize("env_id", ["cartpole", "treatment:x"])
    def test_unknown_ids(self, env_id):
        with pytest.raises(UsageError):
            spec_for_env_id(env_id)

    def test_horizon_override(self):
        assert make_env("dial", horizon=7).max_steps == 7

    def test_spec_file_round_trip(self, tmp_path):
        spec = TreatmentEnvSpec.generate(2)
        path = tmp_path / "disease.jsonl"
        save_env_spec(spec, path)
        assert load_env_spec(path) == spec

    def test_spec_version_mismatch(self, tmp_path):
        path = tmp_path / "future.jsonl"
        write_records(path, {"spec_version": 2, "kind": "dial"}, [{"horizon": 3}])
        with pytest.raises(VersionMismatchError):
            load_env_spec(path)
