"""Network engine: losses, gradients, ADAM, dropout, early stopping."""

import math

import numpy as np
import pytest

from deepchroma.formats import ACT_IDENTITY, ACT_RELU, ACT_SIGMOID, ACT_SOFTMAX
from deepchroma.network import (AdamState, DenseLayer, MLPModel, TrainConfig,
                                adam_step, backward, bce_loss, forward,
                                init_mlp, input_gradient, load_model,
                                save_model, softmax_ce_loss, train)


def _bce_value(model, X, t):
    p = forward(model, X)["h"][-1]
    return bce_loss(p, t)[0]


def _ce_value(model, X, classes):
    z = forward(model, X)["z"][-1]
    return softmax_ce_loss(z, classes)[0]


def _fd_param_grad(value_fn, arr, idx, h=1e-6):
    # central finite difference on one parameter entry
    orig = arr[idx]
    arr[idx] = orig + h
    up = value_fn()
    arr[idx] = orig - h
    down = value_fn()
    arr[idx] = orig
    return (up - down) / (2.0 * h)


# ------------------------------------------------------------------ init

def test_init_shapes_and_zero_biases():
    model = init_mlp(6, (5, 4), 3, ACT_SIGMOID, seed=0)
    dims = [(layer.W.shape, layer.activation) for layer in model.layers]
    assert dims == [((5, 6), ACT_RELU), ((4, 5), ACT_RELU),
                    ((3, 4), ACT_SIGMOID)]
    for layer in model.layers:
        np.testing.assert_array_equal(layer.b, 0.0)
    assert model.input_dim == 6


def test_init_is_seeded():
    a = init_mlp(6, (5,), 3, ACT_SIGMOID, seed=1)
    b = init_mlp(6, (5,), 3, ACT_SIGMOID, seed=1)
    c = init_mlp(6, (5,), 3, ACT_SIGMOID, seed=2)
    np.testing.assert_array_equal(a.layers[0].W, b.layers[0].W)
    assert not np.array_equal(a.layers[0].W, c.layers[0].W)


def test_init_bounds():
    model = init_mlp(100, (50,), 10, ACT_SIGMOID, seed=3)
    hidden_limit = math.sqrt(6.0 / 100)
    out_limit = math.sqrt(6.0 / 60)
    assert np.abs(model.layers[0].W).max() <= hidden_limit
    assert np.abs(model.layers[1].W).max() <= out_limit


# --------------------------------------------------------------- forward

def test_forward_known_linear_net():
    W = np.array([[1.0, 2.0], [0.0, -1.0]])
    model = MLPModel([DenseLayer(W, np.array([0.5, 0.0]), ACT_IDENTITY)], 2)
    out = forward(model, np.array([[3.0, 4.0]]))["h"][-1]
    np.testing.assert_allclose(out, [[11.5, -4.0]])


def test_forward_relu_clamps():
    W = np.array([[1.0], [-1.0]])
    model = MLPModel([DenseLayer(W, np.zeros(2), ACT_RELU),
                      DenseLayer(np.eye(2), np.zeros(2), ACT_IDENTITY)], 1)
    out = forward(model, np.array([[2.0]]))["h"][1]
    np.testing.assert_array_equal(out, [[2.0, 0.0]])


def test_forward_rejects_width_mismatch():
    model = init_mlp(4, (3,), 2, ACT_SIGMOID)
    with pytest.raises(ValueError):
        forward(model, np.zeros((1, 5)))


def test_train_mode_dropout_needs_rng():
    model = init_mlp(4, (3,), 2, ACT_SIGMOID)
    with pytest.raises(ValueError):
        forward(model, np.zeros((1, 4)), mode="train", dropout_p=0.5)


# ---------------------------------------------------------------- losses

def test_bce_at_half_is_ln2():
    p = np.full((3, 4), 0.5)
    t = np.array([[0, 1, 0, 1]] * 3, dtype=float)
    loss, _ = bce_loss(p, t)
    assert abs(loss - math.log(2.0)) < 1e-12


def test_bce_clamps_loss_but_not_gradient():
    p = np.array([[0.0, 1.0]])
    t = np.array([[1.0, 0.0]])
    loss, dlogits = bce_loss(p, t)
    assert np.isfinite(loss)
    np.testing.assert_allclose(dlogits, [[-0.5, 0.5]])  # (p - t)/(k n)


def test_softmax_ce_at_zero_logits_is_ln_k():
    loss, _ = softmax_ce_loss(np.zeros((2, 25)), np.array([3, 17]))
    assert abs(loss - math.log(25.0)) < 1e-12


def test_softmax_ce_gradient_formula():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(4, 5))
    classes = np.array([0, 2, 4, 1])
    _, dlogits = softmax_ce_loss(logits, classes)
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    probs = e / e.sum(axis=1, keepdims=True)
    onehot = np.eye(5)[classes]
    np.testing.assert_allclose(dlogits, (probs - onehot) / 4.0, atol=1e-12)


def test_softmax_ce_rejects_excluded():
    with pytest.raises(ValueError):
        softmax_ce_loss(np.zeros((1, 25)), np.array([255]))


def test_softmax_ce_is_shift_invariant():
    rng = np.random.default_rng(1)
    logits = rng.normal(size=(3, 6)) * 50
    classes = np.array([1, 2, 3])
    a, _ = softmax_ce_loss(logits, classes)
    b, _ = softmax_ce_loss(logits + 1000.0, classes)
    assert abs(a - b) < 1e-9


# ------------------------------------------------------------- gradients

def test_bce_backward_matches_finite_differences():
    rng = np.random.default_rng(7)
    model = init_mlp(6, (5, 4), 3, ACT_SIGMOID, seed=7)
    X = rng.normal(size=(8, 6))
    t = rng.integers(0, 2, size=(8, 3)).astype(float)
    cache = forward(model, X)
    _, dlogits = bce_loss(cache["h"][-1], t)
    grads = backward(model, cache, dlogits)
    for li, layer in enumerate(model.layers):
        dW, db = grads[li]
        for idx in [(0, 0), (dW.shape[0] - 1, dW.shape[1] - 1)]:
            fd = _fd_param_grad(lambda: _bce_value(model, X, t), layer.W, idx)
            assert abs(dW[idx] - fd) < 1e-8 * max(1.0, abs(fd))
        fd = _fd_param_grad(lambda: _bce_value(model, X, t), layer.b, (0,))
        assert abs(db[0] - fd) < 1e-8 * max(1.0, abs(fd))


def test_softmax_backward_matches_finite_differences():
    rng = np.random.default_rng(8)
    model = init_mlp(5, (), 4, ACT_SOFTMAX, seed=8)
    X = rng.normal(size=(6, 5))
    classes = rng.integers(0, 4, size=6)
    cache = forward(model, X)
    _, dlogits = softmax_ce_loss(cache["z"][-1], classes)
    grads = backward(model, cache, dlogits)
    dW, db = grads[0]
    for idx in [(0, 0), (3, 4), (2, 2)]:
        fd = _fd_param_grad(lambda: _ce_value(model, X, classes),
                            model.layers[0].W, idx)
        assert abs(dW[idx] - fd) < 1e-8 * max(1.0, abs(fd))


def test_hidden_sigmoid_backward_matches_finite_differences():
    rng = np.random.default_rng(9)
    layers = [DenseLayer(rng.normal(size=(4, 3)), rng.normal(size=4),
                         ACT_SIGMOID),
              DenseLayer(rng.normal(size=(2, 4)), rng.normal(size=2),
                         ACT_SIGMOID)]
    model = MLPModel(layers, 3)
    X = rng.normal(size=(5, 3))
    t = rng.integers(0, 2, size=(5, 2)).astype(float)
    cache = forward(model, X)
    _, dlogits = bce_loss(cache["h"][-1], t)
    dW = backward(model, cache, dlogits)[0][0]
    fd = _fd_param_grad(lambda: _bce_value(model, X, t),
                        model.layers[0].W, (1, 2))
    assert abs(dW[1, 2] - fd) < 1e-8


def test_input_gradient_matches_finite_differences():
    rng = np.random.default_rng(10)
    model = init_mlp(4, (6,), 2, ACT_SIGMOID, seed=10)
    X = rng.normal(size=(1, 4))
    t = np.array([[1.0, 0.0]])
    cache = forward(model, X)
    _, dlogits = bce_loss(cache["h"][-1], t)
    dX = input_gradient(model, cache, dlogits)
    h = 1e-6
    for j in range(4):
        Xp, Xm = X.copy(), X.copy()
        Xp[0, j] += h
        Xm[0, j] -= h
        fd = (_bce_value(model, Xp, t) - _bce_value(model, Xm, t)) / (2 * h)
        assert abs(dX[0, j] - fd) < 1e-8


def test_dropout_gradient_uses_the_recorded_mask():
    # with a fixed mask replayed, train-mode gradients must match finite
    # differences of the masked forward pass
    rng = np.random.default_rng(11)
    model = init_mlp(3, (8,), 2, ACT_SIGMOID, seed=11)
    X = rng.normal(size=(4, 3))
    t = rng.integers(0, 2, size=(4, 2)).astype(float)
    cache = forward(model, X, mode="train", dropout_p=0.5,
                    rng=np.random.default_rng(99))
    mask = cache["mask"][0]
    _, dlogits = bce_loss(cache["h"][-1], t)
    dW = backward(model, cache, dlogits)[0][0]

    def masked_value():
        c = forward(model, X)
        h1 = c["h"][1] * mask
        z2 = h1 @ model.layers[1].W.T + model.layers[1].b
        p = 1.0 / (1.0 + np.exp(-z2))
        return bce_loss(p, t)[0]

    fd = _fd_param_grad(masked_value, model.layers[0].W, (2, 1))
    assert abs(dW[2, 1] - fd) < 1e-8


# ------------------------------------------------------------------ adam

def test_adam_first_step_has_fixed_size():
    for g0 in (0.013, -4.2, 9.9):
        p = np.array([1.0])
        state = AdamState.for_params([p])
        adam_step([p], [np.array([g0])], state)
        delta = p[0] - 1.0
        assert abs(delta + 1e-3 * np.sign(g0)) < 1e-9
    assert state.t == 1


def test_adam_matches_reference_implementation():
    # straight port of the published update equations, scalars only
    alpha, b1, b2, eps = 1e-3, 0.9, 0.999, 1e-8
    rng = np.random.default_rng(2)
    gs = rng.uniform(0.01, 10.0, size=20) * rng.choice([-1, 1], size=20)
    theta_ref, m, v = 0.7, 0.0, 0.0
    p = np.array([0.7])
    state = AdamState.for_params([p])
    for t, g in enumerate(gs, 1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta_ref -= alpha * (m / (1 - b1 ** t)) / \
            (math.sqrt(v / (1 - b2 ** t)) + eps)
        adam_step([p], [np.array([g])], state)
        assert abs(p[0] - theta_ref) < 1e-15
    assert state.t == 20


def test_adam_rejects_non_finite_gradients():
    p = np.array([1.0])
    state = AdamState.for_params([p])
    with pytest.raises(FloatingPointError):
        adam_step([p], [np.array([np.nan])], state)


# -------------------------------------------------------------- training

def _toy_sets(rng, n=64):
    X = rng.normal(size=(n, 3))
    w = np.array([[1.0, -2.0, 0.5], [-1.0, 1.0, 0.0]])
    y = (X @ w.T > 0).astype(float)
    return (X[: n // 2], y[: n // 2]), (X[n // 2:], y[n // 2:])


def test_patience_zero_runs_exactly_one_epoch():
    rng = np.random.default_rng(0)
    train_set, val_set = _toy_sets(rng)
    model = init_mlp(3, (4,), 2, ACT_SIGMOID, seed=0)
    _, history = train(model, train_set, val_set,
                       TrainConfig(patience=0, max_epochs=50, batch_size=16,
                                   dropout_p=0.0))
    assert len(history) == 1


def test_training_learns_and_restores_best_epoch():
    rng = np.random.default_rng(1)
    train_set, val_set = _toy_sets(rng, n=200)
    model = init_mlp(3, (16,), 2, ACT_SIGMOID, seed=1)
    config = TrainConfig(patience=30, max_epochs=200, batch_size=32,
                         dropout_p=0.0, learning_rate=1e-2)
    model, history = train(model, train_set, val_set, config)
    best = max(h["val_metric"] for h in history)
    assert best > 0.9
    # restored weights must reproduce the best recorded metric
    from deepchroma.network import _validation_metric
    assert _validation_metric(model, val_set[0], val_set[1],
                              "bce") == pytest.approx(best)


def test_early_stopping_waits_patience_epochs():
    # a model that cannot improve (zero inputs) stops after exactly
    # patience + 1 epochs: the first sets the best, then the counter runs
    X = np.zeros((8, 3))
    y = np.zeros((8, 2))
    model = init_mlp(3, (4,), 2, ACT_SIGMOID, seed=0)
    _, history = train(model, (X, y), (X, y),
                       TrainConfig(patience=5, max_epochs=100, batch_size=8,
                                   dropout_p=0.0))
    assert len(history) == 6


def test_training_is_deterministic():
    rng = np.random.default_rng(3)
    train_set, val_set = _toy_sets(rng)
    runs = []
    for _ in range(2):
        model = init_mlp(3, (8,), 2, ACT_SIGMOID, seed=5)
        model, history = train(model, train_set, val_set,
                               TrainConfig(patience=5, max_epochs=12,
                                           batch_size=16, dropout_p=0.5,
                                           seed=5))
        runs.append((model.copy_params(), history))
    for (W1, b1), (W2, b2) in zip(runs[0][0], runs[1][0]):
        np.testing.assert_array_equal(W1, W2)
        np.testing.assert_array_equal(b1, b2)
    assert runs[0][1] == runs[1][1]


def test_l2_penalizes_weights_only():
    rng = np.random.default_rng(4)
    train_set, val_set = _toy_sets(rng)
    norms = []
    for l2 in (0.0, 0.5):
        model = init_mlp(3, (8,), 2, ACT_SIGMOID, seed=6)
        model, _ = train(model, train_set, val_set,
                         TrainConfig(patience=100, max_epochs=60,
                                     batch_size=16, dropout_p=0.0, l2=l2))
        norms.append(sum(np.sum(layer.W ** 2) for layer in model.layers))
    assert norms[1] < norms[0]


def test_training_diverges_loudly():
    X = np.full((8, 2), 1e3)
    y = np.ones((8, 2))
    model = init_mlp(2, (4,), 2, ACT_SIGMOID, seed=0)
    model.layers[0].W[...] = 1e308  # first matmul overflows to inf
    with pytest.raises(FloatingPointError):
        train(model, (X, y), (X, y),
              TrainConfig(patience=5, max_epochs=5, batch_size=8,
                          dropout_p=0.0))


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(dropout_p=1.0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(loss="huber")


# --------------------------------------------------------------- dropout

def test_inverted_dropout_statistics():
    model = init_mlp(4, (400,), 2, ACT_SIGMOID, seed=0)
    X = np.abs(np.random.default_rng(0).normal(size=(50, 4))) + 0.5
    cache = forward(model, X, mode="train", dropout_p=0.5,
                    rng=np.random.default_rng(1))
    mask = cache["mask"][0]
    assert set(np.unique(mask)) == {0.0, 2.0}
    # keep rate concentrates near 1 - p
    assert abs((mask > 0).mean() - 0.5) < 0.02


def test_infer_mode_applies_no_mask():
    model = init_mlp(4, (8,), 2, ACT_SIGMOID, seed=0)
    X = np.random.default_rng(2).normal(size=(3, 4))
    a = forward(model, X)["h"][-1]
    b = forward(model, X)["h"][-1]
    np.testing.assert_array_equal(a, b)
    assert forward(model, X)["mask"] == [None]


# ----------------------------------------------------------- persistence

def test_save_load_round_trip(tmp_path):
    path = str(tmp_path / "model.dcx")
    model = init_mlp(6, (5,), 3, ACT_SIGMOID, seed=0, context_frames=3)
    save_model(model, path)
    back = load_model(path)
    assert back.input_dim == 6
    assert back.context_frames == 3
    assert [l.activation for l in back.layers] == [ACT_RELU, ACT_SIGMOID]
    for orig, loaded in zip(model.layers, back.layers):
        np.testing.assert_array_equal(loaded.W,
                                      orig.W.astype(np.float32))
        assert loaded.W.dtype == np.float64


def test_saved_predictions_survive_float32(tmp_path):
    path = str(tmp_path / "model.dcx")
    model = init_mlp(6, (5,), 3, ACT_SIGMOID, seed=1)
    X = np.random.default_rng(3).normal(size=(4, 6))
    before = forward(model, X)["h"][-1]
    save_model(model, path)
    after = forward(load_model(path), X)["h"][-1]
    np.testing.assert_allclose(after, before, atol=1e-5)
