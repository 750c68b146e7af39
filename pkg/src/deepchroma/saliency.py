"""Guided backpropagation saliency for the chroma extractor.

Guided backprop walks the gradient back through the network but lets it
pass a rectifier unit only where the unit was active in the forward pass
AND the incoming gradient is positive. Seeds are placed at the selected
output units' pre-sigmoid logits, which makes the map linear in the seed
and avoids sigmoid saturation rescaling.
"""

import numpy as np

from . import network
from .formats import ACT_IDENTITY, ACT_RELU


def _check_hidden_activations(model):
    for layer in model.layers[:-1]:
        if layer.activation not in (ACT_RELU, ACT_IDENTITY):
            raise ValueError("guided backprop expects relu (or identity) "
                             "hidden activations")


def _seed_vector(model, selector):
    out_dim = model.layers[-1].out_dim
    seed = np.zeros(out_dim)
    if isinstance(selector, str) and selector == "all":
        seed[:] = 1.0
        return seed
    units = np.asarray(selector, dtype=np.int64).ravel()
    if units.size == 0:
        raise ValueError("empty output-unit selector")
    if np.any((units < 0) | (units >= out_dim)):
        raise ValueError("selector out of range for %d output units" % out_dim)
    seed[units] = 1.0
    return seed


def guided_backprop(model, superframe, selector="all"):
    """Saliency of one super-frame w.r.t. selected output units.

    Parameters
    ----------
    model : MLPModel
        Trained extractor with relu hidden layers.
    superframe : array (input_dim,)
        One flattened context window.
    selector : 'all' or sequence of int
        Output units receiving seed gradient 1 at their pre-activation.

    Returns
    -------
    array (context_frames, n_bands)
        Signed saliency, reshaped from the flat input layout (time along
        axis 0).
    """
    _check_hidden_activations(model)
    x = np.asarray(superframe, dtype=np.float64).ravel()
    if x.shape[0] != model.input_dim:
        raise ValueError("super-frame length %d, model expects %d"
                         % (x.shape[0], model.input_dim))
    cache = network.forward(model, x[None, :], mode="infer")
    g = _seed_vector(model, selector)[None, :]
    # walk back: dense transpose, then the guided relu gate
    for i in range(len(model.layers) - 1, 0, -1):
        g = g @ model.layers[i].W
        if model.layers[i - 1].activation == ACT_RELU:
            g = g * (cache["z"][i - 1] > 0) * (g > 0)
    g = g @ model.layers[0].W
    n_bands = model.input_dim // model.context_frames
    return g.reshape(model.context_frames, n_bands)


def sum_over_time(saliency_map):
    """Column sums over the context axis: one value per band."""
    saliency_map = np.asarray(saliency_map)
    return saliency_map.sum(axis=0)


def sum_over_freq_signed(saliency_map):
    """Per-frame sums of positive and of negative entries.

    Returns
    -------
    (pos, neg) arrays of length context_frames; pos >= 0, neg <= 0.
    """
    saliency_map = np.asarray(saliency_map)
    pos = np.where(saliency_map > 0, saliency_map, 0.0).sum(axis=1)
    neg = np.where(saliency_map < 0, saliency_map, 0.0).sum(axis=1)
    return pos, neg


def average_maps(model, superframes, selectors="all"):
    """Mean saliency map over a set of super-frames.

    ``selectors`` is either 'all' (every output unit seeded for every
    frame) or a sequence with one selector per super-frame, e.g. the
    template pitch classes of each frame's reference chord.

    The mean is accumulated in input order, so a fixed input order gives
    a bit-reproducible result.
    """
    superframes = np.asarray(superframes, dtype=np.float64)
    if superframes.ndim == 1:
        superframes = superframes[None, :]
    if len(superframes) == 0:
        raise ValueError("empty super-frame set")
    per_frame = selectors if not isinstance(selectors, str) \
        else [selectors] * len(superframes)
    if len(per_frame) != len(superframes):
        raise ValueError("need one selector per super-frame")
    acc = None
    for frame, sel in zip(superframes, per_frame):
        m = guided_backprop(model, frame, sel)
        acc = m if acc is None else acc + m
    return acc / len(superframes)
