import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from softs.exceptions import ConfigError, ShapeError
from softs.model import (
    REVIN_EPS,
    ModelConfig,
    RevinState,
    SoftsModel,
    count_params,
    revin_denormalize,
    revin_normalize,
)
from softs.tensor import grad_check_params
from softs.train import mse_loss


def zero_model(cfg):
    model = SoftsModel(cfg)
    for p in model.parameters():
        p.data[...] = 0
    return model


class TestRevin:
    def test_constant_window(self):
        X = np.full((1, 4, 1), 5.0)
        Xn, state = revin_normalize(X)
        np.testing.assert_array_equal(Xn, 0)
        assert state.mean[0, 0, 0] == 5.0
        assert state.std[0, 0, 0] == pytest.approx(np.sqrt(REVIN_EPS))

    def test_already_standard(self):
        Xn, _ = revin_normalize(np.array([[[-1.0], [1.0]]]))
        np.testing.assert_allclose(Xn[0, :, 0], [-1.0, 1.0], atol=1e-4)

    def test_statistics_of_normalized_window(self, rng):
        X = rng.normal(3, 2, size=(4, 32, 5))
        Xn, _ = revin_normalize(X)
        assert np.abs(Xn.mean(axis=1)).max() < 1e-5
        np.testing.assert_allclose(Xn.std(axis=1), 1.0, atol=1e-4)

    def test_zero_prediction_denormalizes_to_mean(self, rng):
        X = rng.normal(size=(2, 8, 3))
        _, state = revin_normalize(X)
        out = revin_denormalize(np.zeros((2, 5, 3)), state)
        np.testing.assert_allclose(out, np.broadcast_to(X.mean(axis=1, keepdims=True), (2, 5, 3)))

    def test_unit_state_is_identity(self, rng):
        Y = rng.normal(size=(2, 5, 3))
        state = RevinState(np.zeros((2, 1, 3)), np.ones((2, 1, 3)))
        np.testing.assert_array_equal(revin_denormalize(Y, state), Y)

    def test_denormalize_shape_mismatch(self, rng):
        _, state = revin_normalize(rng.normal(size=(2, 8, 3)))
        with pytest.raises(ShapeError):
            revin_denormalize(np.zeros((2, 4, 2)), state)

    @settings(max_examples=60)
    @given(seed=st.integers(0, 2**32 - 1), scale=st.floats(1e-2, 1e3), shift=st.floats(-1e3, 1e3))
    def test_round_trip(self, seed, scale, shift):
        X = shift + scale * np.random.default_rng(seed).normal(size=(2, 16, 3))
        Xn, state = revin_normalize(X)
        np.testing.assert_allclose(revin_denormalize(Xn, state), X, atol=1e-5 * max(1.0, abs(shift) + scale))


class TestForward:
    def test_zero_model_predicts_window_mean(self, rng):
        cfg = ModelConfig(8, 4, 3, hidden=6, core=4, layers=2)
        X = rng.normal(size=(2, 8, 3)).astype(np.float32)
        out = zero_model(cfg)(X, training=True, rng=np.random.default_rng(0))
        np.testing.assert_allclose(out, np.broadcast_to(X.mean(axis=1, keepdims=True), out.shape), atol=1e-6)

    def test_no_layers_is_linear_composition(self, rng):
        cfg = ModelConfig(8, 4, 3, hidden=6, core=4, layers=0, use_revin=False)
        model = SoftsModel(cfg, dtype=np.float64)
        model.embedding.bias.data[...] = rng.normal(size=6)
        model.head.bias.data[...] = rng.normal(size=4)
        X = rng.normal(size=(2, 8, 3))
        e, h = model.embedding, model.head
        expected = np.empty((2, 4, 3))
        for b in range(2):
            for c in range(3):
                s = X[b, :, c] @ e.weight.data + e.bias.data
                expected[b, :, c] = s @ h.weight.data + h.bias.data
        np.testing.assert_allclose(model(X), expected, atol=1e-12)

    @pytest.mark.parametrize("pooling", ["mean", "max", "stochastic"])
    def test_channel_permutation_equivariance(self, rng, pooling):
        cfg = ModelConfig(8, 4, 5, hidden=6, core=4, layers=2, pooling=pooling)
        model = SoftsModel(cfg, dtype=np.float64)
        X = rng.normal(size=(3, 8, 5))
        perm = rng.permutation(5)
        np.testing.assert_allclose(model(X[:, :, perm]), model(X)[:, :, perm], atol=1e-5)

    def test_shape_mismatch(self, rng):
        model = SoftsModel(ModelConfig(8, 4, 3, hidden=6, core=4, layers=1))
        with pytest.raises(ShapeError):
            model(rng.normal(size=(2, 8, 4)))
        with pytest.raises(ShapeError):
            model(rng.normal(size=(2, 7, 3)))

    def test_deterministic(self, rng):
        model = SoftsModel(ModelConfig(8, 4, 3, hidden=6, core=4, layers=2))
        X = rng.normal(size=(2, 8, 3))
        a = model(X, training=True, rng=np.random.default_rng(4))
        b = model(X, training=True, rng=np.random.default_rng(4))
        assert a.tobytes() == b.tobytes()

    @settings(max_examples=30, deadline=None)
    @given(
        B=st.integers(1, 3),
        L=st.integers(1, 9),
        H=st.integers(1, 5),
        C=st.integers(1, 4),
        d=st.integers(1, 6),
        data=st.data(),
    )
    def test_output_shape_contract(self, B, L, H, C, d, data):
        dp = data.draw(st.integers(1, d))
        N = data.draw(st.integers(0, 3))
        pooling = data.draw(st.sampled_from(["mean", "max", "weighted", "stochastic"]))
        revin = data.draw(st.booleans())
        model = SoftsModel(ModelConfig(L, H, C, d, dp, N, pooling, use_revin=revin))
        X = np.random.default_rng(0).normal(size=(B, L, C))
        for training in (False, True):
            assert model(X, training=training, rng=np.random.default_rng(0)).shape == (B, H, C)


class TestConfig:
    def test_core_cannot_exceed_hidden(self):
        with pytest.raises(ConfigError):
            ModelConfig(8, 4, 3, hidden=4, core=6)

    @pytest.mark.parametrize("field", ["lookback", "horizon", "channels", "hidden", "core"])
    def test_positive_extents(self, field):
        kwargs = dict(lookback=8, horizon=4, channels=3, hidden=6, core=4)
        kwargs[field] = 0
        with pytest.raises(ConfigError):
            ModelConfig(**kwargs)

    def test_unknown_pooling(self):
        with pytest.raises(ValueError):
            ModelConfig(8, 4, 3, pooling="median")


class TestCountParams:
    def test_no_layers(self):
        assert count_params(SoftsModel(ModelConfig(4, 2, 5, hidden=3, core=3, layers=0))) == 23

    def test_one_layer(self):
        model = SoftsModel(ModelConfig(4, 2, 5, hidden=3, core=3, layers=1))
        per_layer = (3 * 3 + 3 + 3 * 3 + 3) + (6 * 3 + 3 + 3 * 3 + 3)
        assert per_layer == 57
        assert count_params(model) == 80
        assert count_params(model) == sum(p.data.size for _, p in model.named_parameters())

    @pytest.mark.parametrize("pooling", ["mean", "max", "stochastic"])
    def test_independent_of_channels(self, pooling):
        counts = {count_params(SoftsModel(ModelConfig(4, 2, C, 3, 3, 2, pooling))) for C in (1, 7, 50)}
        assert len(counts) == 1

    def test_weighted_adds_one_weight_per_channel(self):
        base = count_params(SoftsModel(ModelConfig(4, 2, 7, 3, 3, 2, "mean")))
        assert count_params(SoftsModel(ModelConfig(4, 2, 7, 3, 3, 2, "weighted"))) == base + 2 * 7

    def test_parameter_manifest_order(self):
        names = [n for n, _ in SoftsModel(ModelConfig(4, 2, 3, 3, 3, 1, "weighted")).named_parameters()]
        assert names == [
            "embedding.weight",
            "embedding.bias",
            "blocks[0].mlp1.first.weight",
            "blocks[0].mlp1.first.bias",
            "blocks[0].mlp1.second.weight",
            "blocks[0].mlp1.second.bias",
            "blocks[0].mlp2.first.weight",
            "blocks[0].mlp2.first.bias",
            "blocks[0].mlp2.second.weight",
            "blocks[0].mlp2.second.bias",
            "blocks[0].lambda",
            "head.weight",
            "head.bias",
        ]


def min_top2_gap(model):
    """Smallest margin between the two largest channel activations, over all blocks."""
    gaps = []
    for block in model.blocks:
        top = np.sort(block._A, axis=1)
        gaps.append((top[:, -1] - top[:, -2]).min())
    return min(gaps)


def model_gradcheck(pooling, training=False, use_revin=True, seed=0, min_gap=0.0):
    rng = np.random.default_rng(seed)
    cfg = ModelConfig(8, 4, 3, hidden=6, core=4, layers=2, pooling=pooling, use_revin=use_revin, seed=seed)
    model = SoftsModel(cfg, dtype=np.float64)
    for p in model.parameters():
        p.data[...] += 0.1 * rng.normal(size=p.shape)  # non-zero biases and lambdas
    X = rng.normal(size=(2, 8, 3))
    Y = rng.normal(size=(2, 4, 3))
    replay = None
    if training:
        model(X, training=True, rng=np.random.default_rng(seed + 1))
        replay = model.recorded_samples()
    model(X)
    if min_gap:
        # max pooling is differentiable only away from ties
        assert min_top2_gap(model) > min_gap

    def loss():
        model.zero_grad()
        pred = model(X, training=training, replay=replay)
        value, grad = mse_loss(pred, Y)
        model.backward(grad)
        return value

    return grad_check_params(loss, model.parameters(), h=1e-4)


@pytest.mark.parametrize("pooling", ["mean", "weighted", "stochastic"])
def test_end_to_end_gradcheck(pooling):
    assert model_gradcheck(pooling) < 1e-4


@pytest.mark.parametrize("use_revin,seed", [(True, 0), (False, 3)])
def test_end_to_end_gradcheck_max_off_tie(use_revin, seed):
    assert model_gradcheck("max", use_revin=use_revin, seed=seed, min_gap=2e-3) < 1e-4


def test_end_to_end_gradcheck_stochastic_training_fixed_samples():
    assert model_gradcheck("stochastic", training=True) < 1e-4
