"""
Unit tests for the masked sequence model.
"""
import copy

import numpy as np
import pytest
import torch

from alignrl.core.exceptions import UsageError
from alignrl.models.sequence_model import MaskedSequence, TimestepQHeads, count_parameters, q_value
from alignrl.schemas.model import ModelConfig
from alignrl.schemas.trajectory import ActionKind
from alignrl.services.dataset import slice_window
from alignrl.services.masking import inference_mask
from tests.conftest import make_model


def dial_batch(ds, context_len, mask=None):
    windows = [slice_window(traj, 0, context_len, False) for traj in ds.trajectories[:2]]
    windows += [slice_window(traj, traj.horizon - 1, context_len, False) for traj in ds.trajectories[2:4]]
    if mask is None:
        mask = np.zeros((len(windows), 3 * context_len), dtype=bool)
    return MaskedSequence.from_windows(windows, mask, is_discrete=False)


@pytest.mark.unit
class TestSequenceModel:
    """Forward pass shapes and masking."""

    def test_output_shapes(self, tiny_model, dial_dataset):
        seq = dial_batch(dial_dataset, 2)
        output = tiny_model(seq)

        assert output.latent.shape == (4, 6, 8)
        assert output.returns.shape == (4, 2)
        assert output.states.shape == (4, 2, 2)
        assert output.actions.shape == (4, 2, 1)
        assert output.q.shape == (4, 2)

    def test_tiny_model_is_small(self, tiny_model):
        assert count_parameters(tiny_model) < 2000

    def test_fresh_values_are_near_zero(self, tiny_model, dial_dataset):
        output = tiny_model(dial_batch(dial_dataset, 2))
        assert output.q.abs().max() < 0.1

    def test_masked_values_do_not_reach_the_network(self, tiny_model, dial_dataset):
        mask = np.tile(inference_mask(2), (4, 1))
        mask[:, 0] = True
        seq = dial_batch(dial_dataset, 2, mask)
        altered = seq.with_mask(seq.mask)
        altered.returns = seq.returns.clone()
        altered.returns[:, 0] = 1e3
        altered.actions = seq.actions.clone()
        altered.actions[:, -1] = 0.123

        with torch.no_grad():
            torch.testing.assert_close(tiny_model(seq).latent, tiny_model(altered).latent)

    def test_pad_values_do_not_reach_the_network(self, tiny_model, dial_dataset):
        seq = dial_batch(dial_dataset, 2)
        assert seq.pad[0, 0]
        altered = seq.with_mask(seq.mask)
        altered.states = seq.states.clone()
        altered.states[0, 0] = 50.0

        with torch.no_grad():
            torch.testing.assert_close(tiny_model(seq).q, tiny_model(altered).q)

    def test_q_value_rejects_pad_slot(self, tiny_model, dial_dataset):
        output = tiny_model(dial_batch(dial_dataset, 2))
        with pytest.raises(UsageError):
            q_value(output, 0, batch_index=0)
        assert q_value(output, 1, batch_index=0) == pytest.approx(float(output.q[0, 1]))
        with pytest.raises(UsageError):
            q_value(output, 2)

    def test_wrong_window_length_is_rejected(self, tiny_model, dial_dataset):
        with pytest.raises(UsageError):
            tiny_model(dial_batch(dial_dataset, 3))

    def test_same_seed_same_weights(self, tiny_config):
        first, second = make_model(tiny_config, seed=4), make_model(tiny_config, seed=4)
        for a, b in zip(first.parameters(), second.parameters()):
            assert torch.equal(a, b)

    def test_discrete_actions_produce_logits(self):
        config = ModelConfig(
            context_len=3, embed_dim=8, n_heads=2, encoder_layers=1, decoder_layers=1,
            action_kind=ActionKind.DISCRETE, state_dim=4, action_dim=5, dropout=0.0,
        )
        model = make_model(config)
        seq = MaskedSequence(
            returns=torch.zeros(2, 3),
            states=torch.zeros(2, 3, 4),
            actions=torch.tensor([[0, 4, 2], [1, 1, 1]]),
            rewards=torch.zeros(2, 3),
            pad=torch.zeros(2, 3, dtype=torch.bool),
            terminals=torch.zeros(2, 3, dtype=torch.bool),
            mask=torch.zeros(2, 9, dtype=torch.bool),
        )
        assert model(seq).actions.shape == (2, 3, 5)


def small_config(context_len, kind):
    return ModelConfig(
        context_len=context_len, embed_dim=8, n_heads=2, encoder_layers=1, decoder_layers=1,
        q_hidden=8, action_kind=kind, state_dim=3, action_dim=4, dropout=0.0,
    )


def random_batch(config, batch, pad=None):
    gen = torch.Generator().manual_seed(0)
    K = config.context_len
    if config.is_discrete:
        actions = torch.randint(0, config.action_dim, (batch, K), generator=gen)
    else:
        actions = torch.randn(batch, K, config.action_dim, generator=gen)
    if pad is None:
        pad = torch.zeros(batch, K, dtype=torch.bool)
    return MaskedSequence(
        returns=torch.randn(batch, K, generator=gen),
        states=torch.randn(batch, K, config.state_dim, generator=gen),
        actions=actions,
        rewards=torch.zeros(batch, K),
        pad=pad,
        terminals=torch.zeros(batch, K, dtype=torch.bool),
        mask=torch.zeros(batch, config.n_tokens, dtype=torch.bool),
    )


@pytest.mark.unit
class TestShapeContract:
    """Output shapes across window lengths and action kinds."""

    @pytest.mark.parametrize("context_len", [1, 4, 8])
    @pytest.mark.parametrize("kind", [ActionKind.CONTINUOUS, ActionKind.DISCRETE])
    def test_heads_match_the_window(self, context_len, kind):
        config = small_config(context_len, kind)
        output = make_model(config)(random_batch(config, 3))

        assert output.latent.shape == (3, 3 * context_len, 8)
        assert output.returns.shape == (3, context_len)
        assert output.states.shape == (3, context_len, 3)
        assert output.actions.shape == (3, context_len, 4)
        assert output.q.shape == (3, context_len)


@pytest.mark.unit
class TestPadExclusion:
    """Pad timesteps are invisible to real timesteps."""

    def test_swapping_two_pad_steps_leaves_real_values_unchanged(self):
        config = small_config(4, ActionKind.CONTINUOUS)
        model = make_model(config)
        pad = torch.tensor([[True, True, False, False]])
        seq = random_batch(config, 1, pad)

        swapped = seq.with_mask(seq.mask)
        order = [1, 0, 2, 3]
        swapped.returns = seq.returns[:, order]
        swapped.states = seq.states[:, order]
        swapped.actions = seq.actions[:, order]
        permuted = copy.deepcopy(model)
        tokens = [3, 4, 5, 0, 1, 2]
        with torch.no_grad():
            permuted.encoder_pos[:6] = model.encoder_pos[tokens]
            permuted.decoder_pos[:6] = model.decoder_pos[tokens]
            before = model(seq).q[:, 2:]
            after = permuted(swapped).q[:, 2:]

        assert torch.equal(before, after)


@pytest.mark.unit
class TestTimestepQHeads:
    """Per-timestep value MLPs."""

    def test_hidden_layer_is_relu(self):
        heads = TimestepQHeads(context_len=2, embed_dim=2, hidden=2, layers=2)
        with torch.no_grad():
            heads.weights[0].copy_(torch.eye(2).expand(2, 2, 2))
            heads.weights[1].fill_(1.0)
            heads.biases[0].zero_()
            heads.biases[1].zero_()
            q = heads(torch.tensor([[[1.0, -2.0], [-3.0, 4.0]]]))

        assert torch.equal(q, torch.tensor([[1.0, 4.0]]))

    def test_each_timestep_has_its_own_weights(self):
        heads = TimestepQHeads(context_len=3, embed_dim=4, hidden=5, layers=2)
        assert heads.weights[0].shape == (3, 4, 5)
        assert heads.weights[1].shape == (3, 5, 1)
