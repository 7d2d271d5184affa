import numpy as np
import pytest

from mvsc.dataset import MultiViewDataset
from mvsc.graph import GraphLaplacian
from mvsc.network import (
    LayerParams,
    NetworkError,
    NetworkState,
    forward,
    init_network,
    plan_widths,
    reconstruction_loss,
    self_expression_loss,
    total_loss,
    validate_widths,
)


def tiny_data(seed=0, dims=(3, 4), n=6):
    rng = np.random.default_rng(seed)
    return MultiViewDataset(views=tuple(rng.standard_normal((d, n)) for d in dims))


def tiny_state(data, encoder=(3, 2), seed=0):
    widths = [plan_widths(d, encoder) for d in data.view_dims()]
    return init_network(widths, data.n_samples, seed=seed)


def zero_laplacian(n):
    return GraphLaplacian(laplacian=np.zeros((n, n)))


class TestWidths:
    def test_symmetric_chain_accepted(self):
        assert validate_widths((4, 3, 2, 3, 4)) == (4, 3, 2, 3, 4)

    def test_odd_layer_count_rejected(self):
        with pytest.raises(NetworkError, match="even"):
            validate_widths((4, 3, 2, 4))

    def test_mismatched_ends_rejected(self):
        with pytest.raises(NetworkError, match="reconstruct"):
            validate_widths((4, 3, 2, 3, 5))

    def test_default_plan_is_six_layers(self):
        chain = plan_widths(200)
        assert len(chain) == 7
        assert chain[0] == chain[-1] == 200
        assert chain[3] == 32  # latent at layer M/2

    def test_default_plan_small_input(self):
        chain = plan_widths(5)
        assert chain == (5, 5, 5, 5, 5, 5, 5)


class TestInit:
    def test_deterministic_in_seed(self):
        data = tiny_data()
        a = tiny_state(data, seed=42)
        b = tiny_state(data, seed=42)
        assert np.array_equal(a.coeffs, b.coeffs)
        for va, vb in zip(a.layers, b.layers):
            for la, lb in zip(va, vb):
                assert np.array_equal(la.weight, lb.weight)
                assert np.array_equal(la.bias, lb.bias)

    def test_glorot_bound_holds_everywhere(self):
        data = tiny_data(dims=(7, 9), n=5)
        state = tiny_state(data, encoder=(5, 3))
        for view in state.layers:
            for lp in view:
                fan_out, fan_in = lp.weight.shape
                bound = np.sqrt(6.0 / (fan_in + fan_out))
                assert np.abs(lp.weight).max() <= bound
                assert np.array_equal(lp.bias, np.zeros(fan_out))

    def test_coefficients_start_near_zero(self):
        state = tiny_state(tiny_data())
        assert np.abs(state.coeffs).max() <= 1e-4

    def test_bad_widths_rejected(self):
        with pytest.raises(NetworkError):
            init_network([(4, 3, 4), (4, 3, 2, 4)], 6, seed=0)


class TestForward:
    def test_zero_network_outputs_zero(self):
        data = tiny_data()
        state = tiny_state(data)
        zeroed = NetworkState(
            layers=tuple(
                tuple(LayerParams(np.zeros_like(lp.weight), np.zeros_like(lp.bias)) for lp in v)
                for v in state.layers
            ),
            coeffs=state.coeffs,
        )
        cache = forward(zeroed, data)
        for k in range(data.n_views):
            assert np.array_equal(cache.latent(k), np.zeros_like(cache.latent(k)))
            assert np.array_equal(cache.reconstruction(k), np.zeros_like(data.views[k]))

    def test_two_layer_hand_trace(self):
        # one sample, widths [1,1,1]: hidden tanh(x), linear output tanh(x)
        data = MultiViewDataset(views=(np.array([[0.7, -0.2]]),))
        layers = (
            (
                LayerParams(np.array([[1.0]]), np.array([0.0])),
                LayerParams(np.array([[1.0]]), np.array([0.0])),
            ),
        )
        state = NetworkState(layers=layers, coeffs=np.zeros((2, 2)))
        cache = forward(state, data)
        assert np.allclose(cache.latent(0), np.tanh(data.views[0]))
        assert np.allclose(cache.reconstruction(0), np.tanh(data.views[0]))
        assert np.allclose(cache.preacts[0][1], np.tanh(data.views[0]))

    def test_cache_shapes(self):
        data = tiny_data(dims=(5, 7), n=9)
        state = tiny_state(data, encoder=(4, 2))
        cache = forward(state, data)
        for k, d in enumerate(data.view_dims()):
            assert cache.latent(k).shape == (2, 9)
            assert cache.reconstruction(k).shape == (d, 9)
            assert len(cache.acts[k]) == 5  # input + 4 layers
            assert len(cache.preacts[k]) == 4

    def test_pure_function(self):
        data = tiny_data()
        state = tiny_state(data)
        a = forward(state, data)
        b = forward(state, data)
        for k in range(data.n_views):
            assert np.array_equal(a.reconstruction(k), b.reconstruction(k))

    def test_view_count_mismatch(self):
        data = tiny_data(dims=(3,))
        state = tiny_state(tiny_data(dims=(3, 4)))
        with pytest.raises(NetworkError, match="views"):
            forward(state, data)


class TestLosses:
    def test_perfect_reconstruction_is_zero(self):
        data = tiny_data()
        state = tiny_state(data)
        cache = forward(state, data)
        perfect = type(cache)(
            preacts=cache.preacts,
            acts=tuple(v[:-1] + (data.views[k],) for k, v in enumerate(cache.acts)),
        )
        assert np.allclose(reconstruction_loss(perfect, data), 0.0)

    def test_zero_reconstruction_analytic(self):
        data = tiny_data()
        state = tiny_state(data)
        cache = forward(state, data)
        zeroed = type(cache)(
            preacts=cache.preacts,
            acts=tuple(
                v[:-1] + (np.zeros_like(data.views[k]),) for k, v in enumerate(cache.acts)
            ),
        )
        losses = reconstruction_loss(zeroed, data)
        for k, X in enumerate(data.views):
            assert losses[k] == pytest.approx(0.5 * np.sum(X * X), abs=1e-12)

    def test_reconstruction_matches_loop_oracle(self):
        data = tiny_data(dims=(3,), n=4)
        state = tiny_state(data, encoder=(2, 2))
        cache = forward(state, data)
        by_loop = 0.0
        X, R = data.views[0], cache.reconstruction(0)
        for i in range(3):
            for j in range(4):
                by_loop += 0.5 * (X[i, j] - R[i, j]) ** 2
        assert reconstruction_loss(cache, data)[0] == pytest.approx(by_loop, abs=1e-12)

    def test_identity_coeffs_zero_self_expression(self):
        data = tiny_data()
        state = tiny_state(data)
        cache = forward(state, data)
        assert np.allclose(self_expression_loss(cache, np.eye(6)), 0.0)

    def test_zero_coeffs_analytic(self):
        data = tiny_data()
        state = tiny_state(data)
        cache = forward(state, data)
        losses = self_expression_loss(cache, np.zeros((6, 6)))
        for k in range(data.n_views):
            Z = cache.latent(k)
            assert losses[k] == pytest.approx(0.5 * np.sum(Z * Z), abs=1e-12)

    def test_self_expression_matches_loop_oracle(self):
        rng = np.random.default_rng(3)
        Z = rng.standard_normal((3, 5))
        C = rng.standard_normal((5, 5))
        data = tiny_data(dims=(3,), n=5)
        state = tiny_state(data, encoder=(3, 3))
        cache = forward(state, data)
        patched = type(cache)(
            preacts=cache.preacts,
            acts=((cache.acts[0][0], cache.acts[0][1], Z, cache.acts[0][3], cache.acts[0][4]),),
        )
        resid = Z - Z @ C
        by_loop = 0.5 * sum(resid[i, j] ** 2 for i in range(3) for j in range(5))
        assert self_expression_loss(patched, C)[0] == pytest.approx(by_loop, abs=1e-12)


class TestTotalLoss:
    def test_alpha_beta_zero_is_pure_reconstruction(self):
        data = tiny_data()
        state = tiny_state(data)
        total, parts = total_loss(state, data, zero_laplacian(6), 0.0, 0.0)
        assert total == parts.reconstruction

    def test_composition_matches_term_oracles(self):
        data = tiny_data(seed=5)
        state = tiny_state(data, seed=6)
        state = NetworkState(
            layers=state.layers,
            coeffs=np.random.default_rng(7).uniform(-0.2, 0.2, (6, 6)),
        )
        rng = np.random.default_rng(8)
        W = rng.uniform(0, 1, (6, 6))
        W = 0.5 * (W + W.T)
        np.fill_diagonal(W, 0.0)
        lap = GraphLaplacian(np.diag(W.sum(axis=1)) - W)
        total, parts = total_loss(state, data, lap, 0.1, 100.0)
        cache = forward(state, data)
        expected = (
            float(np.sum(reconstruction_loss(cache, data)))
            + 0.1 * float(np.sum(self_expression_loss(cache, state.coeffs)))
            + 100.0 * float(np.sum(state.coeffs * (lap.laplacian @ state.coeffs)))
        )
        assert total == pytest.approx(expected, abs=1e-10)
        assert total >= 0.0

    def test_nonnegative_for_many_states(self):
        data = tiny_data(seed=1)
        lap = zero_laplacian(6)
        for seed in range(5):
            state = tiny_state(data, seed=seed)
            total, _ = total_loss(state, data, lap, 0.5, 2.0)
            assert total >= 0.0
