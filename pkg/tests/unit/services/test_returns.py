"""
Unit tests for return-to-go arithmetic.
"""
import numpy as np
import pytest

from alignrl.core.exceptions import UsageError
from alignrl.services.returns import compute_returns, return_recursion_residual, update_target_return


@pytest.mark.unit
class TestComputeReturns:
    """Test cases for compute_returns."""

    @pytest.mark.parametrize("rewards, gamma, expected", [
        ([0, 0, 0], 0.99, [0.0, 0.0, 0.0]),
        ([1, 2, 3], 1.0, [6.0, 5.0, 3.0]),
        ([1, 1, 1], 0.5, [1.75, 1.5, 1.0]),
    ])
    def test_known_values(self, rewards, gamma, expected):
        np.testing.assert_array_equal(compute_returns(rewards, gamma), expected)

    def test_matches_direct_summation(self, rng):
        rewards = rng.normal(size=25)
        gamma = 0.93
        direct = [sum(gamma ** (i - t) * rewards[i] for i in range(t, 25)) for t in range(25)]
        np.testing.assert_allclose(compute_returns(rewards, gamma), direct, rtol=1e-12)

    def test_recursion_holds_exactly(self, rng):
        rewards = rng.normal(size=50)
        returns = compute_returns(rewards, 0.97)
        assert return_recursion_residual(rewards, returns, 0.97) == 0.0

    def test_empty_rewards_rejected(self):
        with pytest.raises(UsageError):
            compute_returns([], 0.9)

    @pytest.mark.parametrize("gamma", [-0.1, 1.5])
    def test_gamma_out_of_range_rejected(self, gamma):
        with pytest.raises(UsageError):
            compute_returns([1.0], gamma)


@pytest.mark.unit
class TestUpdateTargetReturn:
    """Test cases for update_target_return."""

    @pytest.mark.parametrize("target, reward, gamma, expected", [
        (10, 1, 1.0, 9.0),
        (10, 1, 0.5, 18.0),
        (0, 0, 0.99, 0.0),
    ])
    def test_known_values(self, target, reward, gamma, expected):
        assert update_target_return(target, reward, gamma) == expected

    def test_zero_gamma_rejected(self):
        with pytest.raises(UsageError):
            update_target_return(1.0, 0.0, 0.0)

    def test_inverts_the_recursion(self):
        rewards = np.array([0.5, 1.0, 0.25, 2.0])
        gamma = 0.5
        returns = compute_returns(rewards, gamma)
        for t in range(len(rewards) - 1):
            assert update_target_return(returns[t], rewards[t], gamma) == pytest.approx(returns[t + 1], rel=1e-12)

    def test_target_may_go_negative(self):
        assert update_target_return(1.0, 3.0, 1.0) == -2.0
