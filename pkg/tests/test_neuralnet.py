import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oymb import neuralnet as nn


def reference_forward(params, x):
    """Straight-line scalar evaluation, independent of the vectorised path."""
    def affine(W, b, v):
        return [sum(W[i][j] * v[j] for j in range(len(v))) + b[i] for i in range(len(b))]

    relu = lambda v: [max(a, 0.0) for a in v]  # noqa: E731
    W1, b1, W2, b2, W3, b3 = (getattr(params, n).tolist() for n in params.names)
    h1 = relu(affine(W1, b1, list(x)))
    h2 = relu(affine(W2, b2, h1))
    return np.array(affine(W3, b3, h2))


def scalar_loss(params, x, action, target):
    q = nn.forward(params, x)[action]
    return 0.5 * (target - q) ** 2


def finite_difference_grad(params, x, action, target, h=1e-5):
    grad = np.empty_like(params.flat)
    for k in range(params.flat.size):
        old = params.flat[k]
        params.flat[k] = old + h
        up = scalar_loss(params, x, action, target)
        params.flat[k] = old - h
        down = scalar_loss(params, x, action, target)
        params.flat[k] = old
        grad[k] = (up - down) / (2 * h)
    return grad


def random_params(rng, d_in=4, n_actions=3):
    params = nn.init_params(d_in, n_actions, rng)
    # nonzero biases so every code path is exercised
    for name in ("b1", "b2", "b3"):
        getattr(params, name)[...] = rng.normal(0, 0.1, getattr(params, name).shape)
    return params


class TestForward:
    def test_zero_network(self):
        params = nn.zero_params(4, 3)
        np.testing.assert_array_equal(nn.forward(params, np.array([1.0, -2.0, 3.0, 0.5])), np.zeros(3))

    def test_single_chain(self):
        params = nn.zero_params(4, 3)
        params.W1[0, 0] = 1.0
        params.W2[0, 0] = 1.0
        params.W3[2, 0] = 1.0
        q = nn.forward(params, np.array([1.0, 0.0, 0.0, 0.0]))
        np.testing.assert_array_equal(q, [0.0, 0.0, 1.0])

    def test_matches_reference(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            params = random_params(rng)
            x = rng.normal(size=4)
            np.testing.assert_allclose(nn.forward(params, x), reference_forward(params, x), rtol=1e-12, atol=1e-12)

    def test_batch_rows_match_single(self):
        rng = np.random.default_rng(1)
        params = random_params(rng)
        X = rng.normal(size=(7, 4))
        batch = nn.forward(params, X)
        for i in range(7):
            np.testing.assert_allclose(batch[i], nn.forward(params, X[i]), rtol=1e-13, atol=1e-15)

    def test_deterministic(self):
        rng = np.random.default_rng(2)
        params = random_params(rng)
        x = rng.normal(size=4)
        assert nn.forward(params, x).tobytes() == nn.forward(params, x).tobytes()

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            nn.forward(nn.zero_params(4, 3), np.zeros(5))


class TestBackward:
    def test_zero_residual_gives_zero_gradient(self):
        rng = np.random.default_rng(3)
        params = random_params(rng)
        x = rng.normal(size=4)
        y = nn.forward(params, x)[1]
        grad = nn.backward(params, x, 1, y)
        np.testing.assert_array_equal(grad.flat, 0.0)

    def test_zero_input(self):
        rng = np.random.default_rng(4)
        params = random_params(rng)
        grad = nn.backward(params, np.zeros(4), 0, 5.0)
        np.testing.assert_array_equal(grad.W1, 0.0)
        assert np.any(grad.b1 != 0.0)

    def test_only_chosen_action_row_of_output_layer(self):
        rng = np.random.default_rng(5)
        params = random_params(rng)
        grad = nn.backward(params, rng.normal(size=4), 2, 1.0)
        np.testing.assert_array_equal(grad.W3[:2], 0.0)
        np.testing.assert_array_equal(grad.b3[:2], 0.0)

    def test_finite_differences(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            params = random_params(rng)
            x = rng.normal(size=4)
            a = int(rng.integers(3))
            y = float(rng.normal())
            fd = finite_difference_grad(params, x, a, y)
            np.testing.assert_allclose(nn.backward(params, x, a, y).flat, fd, rtol=1e-4, atol=1e-8)

    def test_batch_gradient_is_mean_of_singles(self):
        rng = np.random.default_rng(7)
        params = random_params(rng)
        X = rng.normal(size=(5, 4))
        acts = rng.integers(0, 3, 5)
        ys = rng.normal(size=5)
        loss, grad = nn.loss_and_grad(params, X, acts, ys)
        singles = [nn.backward(params, X[i], acts[i], ys[i]).flat for i in range(5)]
        np.testing.assert_allclose(grad.flat, np.mean(singles, axis=0), rtol=1e-12, atol=1e-15)
        q = nn.forward(params, X)[np.arange(5), acts]
        assert loss == pytest.approx(np.mean((ys - q) ** 2), rel=1e-12)

    def test_bad_action(self):
        with pytest.raises(ValueError):
            nn.backward(nn.zero_params(4, 3), np.zeros(4), 3, 0.0)


class TestAdam:
    def test_zero_gradient_fresh_state(self):
        rng = np.random.default_rng(8)
        params = random_params(rng)
        before = params.flat.copy()
        state = nn.AdamState.for_params(params)
        nn.adam_step(params, params.like(np.zeros_like(params.flat)), state)
        np.testing.assert_array_equal(params.flat, before)
        assert state.t == 1

    def test_first_step_unit_gradient(self):
        params = nn.zero_params(2, 2)
        state = nn.AdamState.for_params(params, lr=1e-3)
        nn.adam_step(params, params.like(np.ones_like(params.flat)), state)
        # m_hat = v_hat = 1 after bias correction
        np.testing.assert_allclose(params.flat, -1e-3 / (1.0 + 1e-8), rtol=1e-15)

    def test_two_steps_hand_unrolled(self):
        lr, b1, b2, eps, g = 0.01, 0.9, 0.999, 1e-8, 0.3
        params = nn.zero_params(2, 2)
        params.flat[:] = 0.5
        state = nn.AdamState.for_params(params, lr=lr)
        grads = params.like(np.full_like(params.flat, g))
        nn.adam_step(params, grads, state)
        nn.adam_step(params, grads, state)

        theta = 0.5
        m1, v1 = (1 - b1) * g, (1 - b2) * g * g
        theta -= lr * (m1 / (1 - b1)) / ((v1 / (1 - b2)) ** 0.5 + eps)
        m2, v2 = b1 * m1 + (1 - b1) * g, b2 * v1 + (1 - b2) * g * g
        theta -= lr * (m2 / (1 - b1 ** 2)) / ((v2 / (1 - b2 ** 2)) ** 0.5 + eps)
        np.testing.assert_allclose(params.flat, theta, rtol=0, atol=1e-12)
        assert state.t == 2
        assert np.all(state.v >= 0)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), steps=st.integers(1, 5))
    def test_zero_learning_rate_never_moves(self, seed, steps):
        rng = np.random.default_rng(seed)
        params = random_params(rng)
        before = params.flat.copy()
        state = nn.AdamState.for_params(params, lr=0.0)
        for _ in range(steps):
            nn.adam_step(params, params.like(rng.normal(size=params.flat.shape)), state)
        np.testing.assert_array_equal(params.flat, before)
        assert state.t == steps


class TestCopy:
    def test_independent(self):
        rng = np.random.default_rng(9)
        src = random_params(rng)
        dup = nn.copy_params(src)
        saved = dup.flat.copy()
        src.W2[0, 0] += 1.0
        src.flat *= 2
        np.testing.assert_array_equal(dup.flat, saved)

    def test_zero(self):
        np.testing.assert_array_equal(nn.copy_params(nn.zero_params(3, 2)).flat, 0.0)

    def test_same_outputs(self):
        rng = np.random.default_rng(10)
        src = random_params(rng)
        dup = nn.copy_params(src)
        X = rng.normal(size=(100, 4))
        np.testing.assert_array_equal(nn.forward(dup, X), nn.forward(src, X))


def test_init_shapes_and_bounds():
    params = nn.init_params(3, 5, np.random.default_rng(0))
    assert params.W1.shape == (64, 3) and params.W2.shape == (32, 64) and params.W3.shape == (5, 32)
    assert params.b1.shape == (64,) and params.b3.shape == (5,)
    assert np.abs(params.W2).max() <= np.sqrt(6 / 96)
    np.testing.assert_array_equal(params.b2, 0.0)
