"""Estimator layer: the trainable pieces with a scikit-learn face.

DeepChromaExtractor learns the super-frame -> chroma mapping;
ChordClassifier is the multinomial logistic regression used to compare
feature types. Both wrap the in-package network engine, follow the
fit/transform/predict conventions, and validate their inputs with the
scikit-learn helpers. An explicit validation set may be passed to fit;
otherwise one is carved from the training data.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import network
from .chords import N_CLASSES
from .formats import ACT_SIGMOID, ACT_SOFTMAX, EXCLUDED
from .network import TrainConfig, init_mlp


def _split_validation(X, y, fraction, seed):
    n = len(X)
    n_val = max(1, int(round(n * fraction)))
    if n_val >= n:
        raise ValueError("not enough samples to carve a validation set")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    val, tr = order[:n_val], order[n_val:]
    return (X[tr], y[tr]), (X[val], y[val])


class DeepChromaExtractor(BaseEstimator, TransformerMixin):
    """Multi-layer perceptron mapping spectral context windows to chroma.

    Parameters
    ----------
    context_frames : int
        Odd number of spectrogram frames per super-frame.
    hidden_units : tuple of int
        Sizes of the rectifier hidden layers.
    learning_rate, batch_size, dropout, patience, max_epochs, seed
        Training settings (ADAM step size, mini-batch size, inverted
        dropout probability on hidden units, early-stopping patience in
        epochs, epoch cap, generator seed).
    validation_fraction : float
        Share of the training rows used for early stopping when fit is
        not given an explicit validation set.

    Attributes
    ----------
    model_ : MLPModel
        The trained network.
    history_ : list of dict
        Per-epoch train loss and validation metric.
    """

    def __init__(self, context_frames=15, n_bands=178,
                 hidden_units=(512, 512, 512), learning_rate=1e-3,
                 batch_size=512, dropout=0.5, patience=20, max_epochs=100,
                 seed=0, validation_fraction=0.15):
        self.context_frames = context_frames
        self.n_bands = n_bands
        self.hidden_units = hidden_units
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.dropout = dropout
        self.patience = patience
        self.max_epochs = max_epochs
        self.seed = seed
        self.validation_fraction = validation_fraction

    @property
    def input_dim_(self):
        return self.context_frames * self.n_bands

    def fit(self, X, y, X_val=None, y_val=None):
        """Train on super-frames X (n, context*bands) and chroma targets
        y (n, 12)."""
        X = check_array(X, dtype=np.float64)
        y = check_array(y, dtype=np.float64)
        if X.shape[1] != self.input_dim_:
            raise ValueError("expected %d input dims (context %d x %d bands),"
                             " got %d" % (self.input_dim_, self.context_frames,
                                          self.n_bands, X.shape[1]))
        if y.shape != (X.shape[0], 12):
            raise ValueError("targets must be (n, 12)")
        if X_val is None:
            (X, y), (X_val, y_val) = _split_validation(
                X, y, self.validation_fraction, self.seed)
        else:
            X_val = check_array(X_val, dtype=np.float64)
            y_val = check_array(y_val, dtype=np.float64)
        model = init_mlp(self.input_dim_, self.hidden_units, 12, ACT_SIGMOID,
                         seed=self.seed, context_frames=self.context_frames)
        config = TrainConfig(batch_size=self.batch_size,
                             dropout_p=self.dropout, patience=self.patience,
                             max_epochs=self.max_epochs, seed=self.seed,
                             loss=network.LOSS_BCE,
                             learning_rate=self.learning_rate)
        self.model_, self.history_ = network.train(
            model, (X, y), (X_val, y_val), config)
        return self

    def transform(self, X):
        """Chroma predictions, one (0, 1)^12 row per super-frame."""
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        return network.forward(self.model_, X, mode="infer")["h"][-1]

    def save(self, path):
        check_is_fitted(self, "model_")
        network.save_model(self.model_, path)

    @classmethod
    def from_model(cls, model):
        """Wrap an existing MLPModel (e.g. loaded from disk)."""
        est = cls(context_frames=model.context_frames,
                  n_bands=model.input_dim // model.context_frames)
        est.model_ = model
        est.history_ = []
        return est


class ChordClassifier(BaseEstimator, ClassifierMixin):
    """Frame-wise multinomial logistic regression over 25 chord classes.

    Realized as a single softmax layer trained with the same ADAM /
    early-stopping machinery as the extractor, plus an L2 penalty for the
    high-dimensional stacked-feature cases.
    """

    def __init__(self, n_classes=N_CLASSES, learning_rate=1e-3,
                 batch_size=512, patience=20, max_epochs=100, l2=1e-4,
                 seed=0, validation_fraction=0.15):
        self.n_classes = n_classes
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.patience = patience
        self.max_epochs = max_epochs
        self.l2 = l2
        self.seed = seed
        self.validation_fraction = validation_fraction

    def fit(self, X, y, X_val=None, y_val=None):
        """Train on feature rows X (n, d) and class indices y (n,).

        EXCLUDED-labelled frames must already be dropped.
        """
        X = check_array(X, dtype=np.float64)
        y = np.asarray(y).astype(np.int64)
        if y.shape != (X.shape[0],):
            raise ValueError("need one class label per row")
        if np.any(y == EXCLUDED):
            raise ValueError("drop EXCLUDED frames before fitting")
        if np.any((y < 0) | (y >= self.n_classes)):
            raise ValueError("class index out of range")
        if len(X) == 0:
            raise ValueError("empty training set")
        if X_val is None:
            (X, y), (X_val, y_val) = _split_validation(
                X, y, self.validation_fraction, self.seed)
        else:
            X_val = check_array(X_val, dtype=np.float64)
            y_val = np.asarray(y_val).astype(np.int64)
        model = init_mlp(X.shape[1], (), self.n_classes, ACT_SOFTMAX,
                         seed=self.seed, context_frames=1)
        config = TrainConfig(batch_size=self.batch_size, dropout_p=0.0,
                             patience=self.patience,
                             max_epochs=self.max_epochs, seed=self.seed,
                             loss=network.LOSS_SOFTMAX_CE,
                             learning_rate=self.learning_rate, l2=self.l2)
        self.model_, self.history_ = network.train(
            model, (X, y), (X_val, y_val), config)
        self.classes_ = np.arange(self.n_classes)
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        """Softmax probabilities, rows summing to 1."""
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        return network.forward(self.model_, X, mode="infer")["h"][-1]

    def predict(self, X):
        """Per-frame class indices; ties break toward the lowest index."""
        return np.argmax(self.predict_proba(X), axis=1)

    def save(self, path):
        check_is_fitted(self, "model_")
        network.save_model(self.model_, path)

    @classmethod
    def from_model(cls, model):
        est = cls(n_classes=model.layers[-1].out_dim)
        est.model_ = model
        est.history_ = []
        est.classes_ = np.arange(est.n_classes)
        est.n_features_in_ = model.input_dim
        return est
