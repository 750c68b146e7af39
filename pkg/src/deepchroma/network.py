"""Feed-forward network machinery, hand-rolled on numpy.

Dense layers with relu/sigmoid/softmax/identity activations, binary
cross-entropy and softmax cross-entropy losses, the ADAM update rule,
inverted dropout, mini-batch training with early stopping, and model
serialization. Training runs in float64 so analytic gradients can be
checked against finite differences; files store float32.
"""

from dataclasses import dataclass

import numpy as np

from . import formats
from .formats import (ACT_IDENTITY, ACT_RELU, ACT_SIGMOID, ACT_SOFTMAX,
                      FormatError)

LOSS_BCE = "bce"
LOSS_SOFTMAX_CE = "softmax_ce"

_CLAMP_EPS = 1e-7


@dataclass
class DenseLayer:
    """One dense layer: W (out_dim x in_dim), b (out_dim,), activation code."""

    W: np.ndarray
    b: np.ndarray
    activation: int

    @property
    def in_dim(self):
        return self.W.shape[1]

    @property
    def out_dim(self):
        return self.W.shape[0]


@dataclass
class MLPModel:
    """An ordered stack of dense layers plus input metadata."""

    layers: list
    input_dim: int
    context_frames: int = 1

    def copy_params(self):
        return [(layer.W.copy(), layer.b.copy()) for layer in self.layers]

    def set_params(self, params):
        for layer, (W, b) in zip(self.layers, params):
            layer.W[...] = W
            layer.b[...] = b


@dataclass
class AdamState:
    """First/second moment accumulators and hyperparameters."""

    m: list
    v: list
    t: int = 0
    alpha: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, alpha=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        return cls(m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params],
                   t=0, alpha=alpha, beta1=beta1, beta2=beta2, eps=eps)


@dataclass
class TrainConfig:
    """Mini-batch training settings."""

    batch_size: int = 512
    dropout_p: float = 0.5
    patience: int = 20
    max_epochs: int = 100
    seed: int = 0
    loss: str = LOSS_BCE
    learning_rate: float = 1e-3
    l2: float = 0.0

    def __post_init__(self):
        if not 0 <= self.dropout_p < 1:
            raise ValueError("dropout_p must be in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.loss not in (LOSS_BCE, LOSS_SOFTMAX_CE):
            raise ValueError("unknown loss code %r" % self.loss)


def init_mlp(input_dim, hidden_units, output_dim, output_activation,
             seed=0, context_frames=1):
    """Seeded He-uniform hidden / Glorot-uniform output initialization."""
    rng = np.random.default_rng(seed)
    layers = []
    prev = input_dim
    for units in hidden_units:
        limit = np.sqrt(6.0 / prev)
        W = rng.uniform(-limit, limit, size=(units, prev))
        layers.append(DenseLayer(W, np.zeros(units), ACT_RELU))
        prev = units
    limit = np.sqrt(6.0 / (prev + output_dim))
    W = rng.uniform(-limit, limit, size=(output_dim, prev))
    layers.append(DenseLayer(W, np.zeros(output_dim), output_activation))
    return MLPModel(layers, input_dim, context_frames)


def _softmax(z):
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _activate(z, code):
    if code == ACT_RELU:
        return np.maximum(z, 0.0)
    if code == ACT_SIGMOID:
        return 1.0 / (1.0 + np.exp(-z))
    if code == ACT_SOFTMAX:
        return _softmax(z)
    if code == ACT_IDENTITY:
        return z
    raise ValueError("unknown activation code %r" % code)


def forward(model, x, mode="infer", dropout_p=0.0, rng=None):
    """Forward pass caching everything backward needs.

    In train mode an inverted-dropout mask is applied after each hidden
    activation: units are kept with probability 1 - dropout_p and scaled
    by 1/(1 - dropout_p), so inference needs no rescaling and applies no
    mask.

    Returns
    -------
    dict with keys
        'h': list of activations, h[0] = x through h[L] = output,
        'z': list of pre-activations per layer,
        'mask': per-hidden-layer dropout mask (with the 1/(1-p) scaling
        folded in) or None.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != model.input_dim:
        raise ValueError("input width %d, model expects %d"
                         % (x.shape[1], model.input_dim))
    if mode not in ("train", "infer"):
        raise ValueError("mode must be 'train' or 'infer'")
    if mode == "train" and dropout_p > 0 and rng is None:
        raise ValueError("train mode with dropout needs an rng")
    h = [x]
    zs = []
    masks = []
    n_layers = len(model.layers)
    for i, layer in enumerate(model.layers):
        z = h[-1] @ layer.W.T + layer.b
        zs.append(z)
        a = _activate(z, layer.activation)
        if i < n_layers - 1:
            if mode == "train" and dropout_p > 0:
                keep = 1.0 - dropout_p
                mask = (rng.random(a.shape) < keep) / keep
                a = a * mask
                masks.append(mask)
            else:
                masks.append(None)
        if not np.all(np.isfinite(a)):
            raise FloatingPointError("non-finite activation in layer %d" % i)
        h.append(a)
    return {"h": h, "z": zs, "mask": masks}


def bce_loss(p, t):
    """Mean binary cross-entropy and its gradient w.r.t. the logits.

    Parameters
    ----------
    p : array (n, k)
        Sigmoid outputs in (0, 1). Clamped to [1e-7, 1 - 1e-7] for the
        loss value only; the gradient (p - t)/(k n) is exact for the
        unclamped mean loss.
    t : array (n, k)
        Targets in [0, 1].

    Returns
    -------
    (loss, dlogits)
    """
    p = np.asarray(p, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError("shape mismatch: %s vs %s" % (p.shape, t.shape))
    pc = np.clip(p, _CLAMP_EPS, 1.0 - _CLAMP_EPS)
    loss = float(np.mean(-t * np.log(pc) - (1.0 - t) * np.log(1.0 - pc)))
    dlogits = (p - t) / (p.shape[1] * p.shape[0])
    return loss, dlogits


def softmax_ce_loss(logits, classes):
    """Mean softmax cross-entropy and its gradient w.r.t. the logits.

    Parameters
    ----------
    logits : array (n, k)
        Raw pre-softmax scores.
    classes : int array (n,)
        True class indices; the EXCLUDED sentinel is rejected.

    Returns
    -------
    (loss, dlogits) with dlogits = (softmax - one_hot)/n.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim == 1:
        logits = logits[None, :]
    classes = np.asarray(classes)
    if classes.ndim == 0:
        classes = classes[None]
    classes = classes.astype(np.int64)
    n, k = logits.shape
    if classes.shape != (n,):
        raise ValueError("need one class per row")
    if np.any(classes == formats.EXCLUDED) or np.any(classes < 0) \
            or np.any(classes >= k):
        raise ValueError("class index out of range (excluded frames must be "
                         "dropped before the loss)")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(log_norm - shifted[np.arange(n), classes]))
    probs = _softmax(logits)
    probs[np.arange(n), classes] -= 1.0
    return loss, probs / n


def backward(model, cache, dlogits):
    """Exact parameter gradients from a forward cache.

    ``dlogits`` is the loss gradient w.r.t. the last layer's
    pre-activation (both losses above hand that back directly). Dropout
    masks recorded during the forward pass are replayed.

    Returns
    -------
    list of (dW, db) per layer, front to back.
    """
    h, zs, masks = cache["h"], cache["z"], cache["mask"]
    if len(h) != len(model.layers) + 1:
        raise ValueError("stale activation cache")
    grads = [None] * len(model.layers)
    dz = np.asarray(dlogits, dtype=np.float64)
    for i in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[i]
        grads[i] = (dz.T @ h[i], dz.sum(axis=0))
        if i == 0:
            break
        da = dz @ layer.W
        if masks[i - 1] is not None:
            da = da * masks[i - 1]
        prev = model.layers[i - 1]
        if prev.activation == ACT_RELU:
            dz = da * (zs[i - 1] > 0)
        elif prev.activation == ACT_IDENTITY:
            dz = da
        elif prev.activation == ACT_SIGMOID:
            a = h[i]  # hidden sigmoid: derivative from the cached activation
            dz = da * a * (1.0 - a)
        else:
            raise ValueError("softmax is only supported as the output layer")
    return grads


def input_gradient(model, cache, dlogits):
    """Gradient of the loss w.r.t. the network input (plain chain rule)."""
    h, zs, masks = cache["h"], cache["z"], cache["mask"]
    dz = np.asarray(dlogits, dtype=np.float64)
    for i in range(len(model.layers) - 1, 0, -1):
        da = dz @ model.layers[i].W
        if masks[i - 1] is not None:
            da = da * masks[i - 1]
        prev = model.layers[i - 1]
        if prev.activation == ACT_RELU:
            dz = da * (zs[i - 1] > 0)
        elif prev.activation == ACT_IDENTITY:
            dz = da
        elif prev.activation == ACT_SIGMOID:
            a = h[i]
            dz = da * a * (1.0 - a)
        else:
            raise ValueError("softmax is only supported as the output layer")
    return dz @ model.layers[0].W


def adam_step(params, grads, state):
    """One ADAM update, in place.

    m and v track first/second gradient moments; bias-corrected
    estimates drive theta <- theta - alpha * m_hat / (sqrt(v_hat) + eps).
    """
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        p -= state.alpha * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


def _flatten_params(model):
    out = []
    for layer in model.layers:
        out.append(layer.W)
        out.append(layer.b)
    return out


def _validation_metric(model, X_val, y_val, loss):
    probs = forward(model, X_val, mode="infer")["h"][-1]
    if loss == LOSS_BCE:
        # bitwise chroma accuracy at threshold 0.5
        return float(np.mean((probs > 0.5) == (y_val > 0.5)))
    return float(np.mean(np.argmax(probs, axis=1) == y_val))


def train(model, train_set, val_set, config):
    """Mini-batch training with seeded shuffling and early stopping.

    Parameters
    ----------
    model : MLPModel
        Updated in place; the best-validation-metric weights are restored
        before returning.
    train_set, val_set : (X, y)
        Float targets (n, k) for the BCE loss, int class indices (n,) for
        softmax cross-entropy.
    config : TrainConfig
        Early stopping halts when the validation metric has not improved
        for ``patience`` consecutive epochs (patience 0 stops after the
        first epoch).

    Returns
    -------
    (model, history)
        history is a list of dicts with epoch, train_loss, val_metric.
    """
    X, y = train_set
    X_val, y_val = val_set
    X = np.asarray(X, dtype=np.float64)
    X_val = np.asarray(X_val, dtype=np.float64)
    if config.loss == LOSS_BCE:
        y = np.asarray(y, dtype=np.float64)
        y_val = np.asarray(y_val, dtype=np.float64)
    else:
        y = np.asarray(y, dtype=np.int64)
        y_val = np.asarray(y_val, dtype=np.int64)
    if len(X) == 0 or len(X_val) == 0:
        raise ValueError("empty training or validation set")

    rng = np.random.default_rng(config.seed)
    params = _flatten_params(model)
    state = AdamState.for_params(params, alpha=config.learning_rate)
    best_metric = -np.inf
    best_params = model.copy_params()
    wait = 0
    history = []
    n = len(X)
    for epoch in range(config.max_epochs):
        order = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            xb, yb = X[idx], y[idx]
            cache = forward(model, xb, mode="train",
                            dropout_p=config.dropout_p, rng=rng)
            if config.loss == LOSS_BCE:
                loss, dlogits = bce_loss(cache["h"][-1], yb)
            else:
                loss, dlogits = softmax_ce_loss(cache["z"][-1], yb)
            if not np.isfinite(loss):
                raise FloatingPointError(
                    "training diverged at epoch %d (loss %r)" % (epoch, loss))
            grads = backward(model, cache, dlogits)
            flat_grads = []
            for layer, (dW, db) in zip(model.layers, grads):
                if config.l2 > 0:
                    dW = dW + config.l2 * layer.W
                flat_grads.append(dW)
                flat_grads.append(db)
            adam_step(params, flat_grads, state)
            loss_sum += loss * len(idx)
        metric = _validation_metric(model, X_val, y_val, config.loss)
        history.append({"epoch": epoch, "train_loss": loss_sum / n,
                        "val_metric": metric})
        if metric > best_metric:
            best_metric = metric
            best_params = model.copy_params()
            wait = 0
        else:
            wait += 1
        if wait >= config.patience:
            break
    model.set_params(best_params)
    return model, history


def save_model(model, path):
    """Serialize a model (float32 parameters)."""
    layers = [(layer.W, layer.b, layer.activation) for layer in model.layers]
    formats.write_dcx(path, layers, model.input_dim, model.context_frames)


def load_model(path):
    """Load a model; parameters come back as float64 copies of the
    stored float32 values."""
    layers, input_dim, context_frames = formats.read_dcx(path)
    dense = [DenseLayer(W.astype(np.float64), b.astype(np.float64), act)
             for W, b, act in layers]
    return MLPModel(dense, input_dim, context_frames)
