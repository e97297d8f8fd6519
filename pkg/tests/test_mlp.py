import numpy as np
import pytest

from jellybench import mlp
from oracles import finite_difference_grads, max_relative_error


def test_mse_gradients_match_finite_differences():
    rng = np.random.default_rng(0)
    layers = mlp.build([4, 5, 3, 4], rng, hidden="relu", last="linear")
    X = rng.normal(size=(6, 4))
    T = rng.normal(size=(6, 4))
    _, analytic = mlp.mean_squared(layers, X, T)
    numeric = finite_difference_grads(lambda: mlp.mean_squared(layers, X, T)[0], layers)
    assert max_relative_error(analytic, numeric) < 1e-4


def test_softmax_rows():
    z = np.array([[1000.0, 0.0, -1000.0], [0.0, 0.0, 0.0]])
    p = mlp.softmax(z)
    assert np.all(np.isfinite(p)) and np.allclose(p.sum(1), 1.0)
    assert np.allclose(p[1], 1 / 3)


def test_adam_first_step_is_lr_sized():
    # bias-corrected Adam moves each parameter by ~lr on its first step
    layer = mlp.Dense(np.zeros((2, 1)), np.zeros(1), "linear")
    opt = mlp.Adam([layer], lr=0.01)
    opt.step([layer], [(np.array([[3.0], [-0.5]]), np.array([2.0]))])
    assert np.allclose(layer.W.ravel(), [-0.01, 0.01], atol=1e-8)
    assert np.allclose(layer.b, [-0.01], atol=1e-8)


def test_frozen_slice_stays_fixed():
    rng = np.random.default_rng(1)
    layers = mlp.build([3, 4, 2], rng)
    before = layers[0].W.copy()
    X = rng.normal(size=(10, 3))
    y = np.arange(10) % 2
    mlp.train(layers, X, y, mlp.cross_entropy, 3, 4, 1e-2, np.random.default_rng(0), trainable=slice(1, None))
    assert np.array_equal(layers[0].W, before)


def test_initialisation_bounds():
    rng = np.random.default_rng(0)
    relu = mlp.Dense.init(100, 50, rng, "relu")
    lin = mlp.Dense.init(100, 50, rng, "linear")
    assert np.abs(relu.W).max() <= np.sqrt(6 / 100)
    assert np.abs(lin.W).max() <= np.sqrt(6 / 150)
    assert not relu.b.any()


def test_training_reduces_loss():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(64, 5))
    y = (X[:, 0] > 0).astype(int)
    layers = mlp.build([5, 8, 2], rng)
    hist = mlp.train(layers, X, y, mlp.cross_entropy, 20, 16, 1e-2, np.random.default_rng(0))
    assert hist[-1] < hist[0]
    with pytest.raises(Exception):
        mlp.train(layers, X[:, :3], y, mlp.cross_entropy, 1, 16, 1e-2, np.random.default_rng(0))
