"""Feature types for the classifier comparison.

Four feature families are produced from the same quarter-tone front end:
the learned deep chroma, two folded-chroma baselines (plain energy fold
and Gaussian-weighted log fold), and the raw log spectrogram. Ideal
chroma derived from the annotations provides the performance ceiling.
"""

from dataclasses import dataclass

import numpy as np

from . import network
from .chords import frame_targets
from .spectrogram import QuarterToneSpectrogram, stack_context

KIND_DEEP = "deep"
KIND_FOLDED = "folded"
KIND_IDEAL = "ideal"


@dataclass
class Chromagram:
    """Pitch-class saliency matrix: n_frames x 12, index 0 = C."""

    data: np.ndarray
    fps: float = 10.0
    kind: str = KIND_DEEP

    @property
    def n_frames(self):
        return self.data.shape[0]


@dataclass
class FeatureMatrix:
    """Per-frame classifier input rows with the context they represent."""

    data: np.ndarray
    context_seconds: float
    fps: float = 10.0


def band_pitch_classes(band_freqs, fref=440.0):
    """Pitch class of each band's nearest semitone (A4 = 440 -> class 9).

    Quarter-tone centers falling exactly between semitones resolve by
    round-half-to-even on the semitone index.
    """
    semis = np.round(12.0 * np.log2(np.asarray(band_freqs) / fref))
    return ((semis.astype(np.int64) + 9) % 12).astype(np.int64)


def deep_chroma(model, S_log):
    """Run the extractor over a log spectrogram, one chroma row per frame.

    The spectrogram is stacked into the model's context window and pushed
    through the network in inference mode; rows are the sigmoid outputs.
    """
    frames_per_side = (model.context_frames - 1) // 2
    stacked = stack_context(S_log, frames_per_side)
    if stacked.data.shape[1] != model.input_dim:
        raise ValueError("model expects input dim %d, super-frames have %d"
                         % (model.input_dim, stacked.data.shape[1]))
    out = network.forward(model, stacked.data, mode="infer")["h"][-1]
    return Chromagram(out, fps=S_log.fps, kind=KIND_DEEP)


def fold_chroma(S):
    """Fold raw band energies onto pitch classes (baseline chromagram).

    Each band adds its energy to the pitch class of its nearest semitone;
    every frame is then max-normalized (all-zero frames stay zero).
    """
    if S.is_log:
        raise ValueError("fold_chroma expects the raw (non-log) spectrogram")
    if S.band_freqs is None:
        raise ValueError("spectrogram is missing band frequencies")
    return Chromagram(_fold(S.data, band_pitch_classes(S.band_freqs)),
                      fps=S.fps, kind=KIND_FOLDED)


def fold_chroma_weighted_log(S, center_hz=220.0, sigma_octaves=1.0):
    """Gaussian-weighted, log-compressed fold (the stronger baseline).

    Band energies are weighted by exp(-0.5 * (log2(f/center)/sigma)^2),
    log(1 + x) compressed, then folded and max-normalized like
    fold_chroma.
    """
    if S.is_log:
        raise ValueError("expects the raw (non-log) spectrogram")
    if S.band_freqs is None:
        raise ValueError("spectrogram is missing band frequencies")
    octaves = np.log2(np.asarray(S.band_freqs) / center_hz)
    weights = np.exp(-0.5 * (octaves / sigma_octaves) ** 2)
    weighted = np.log1p(S.data * weights)
    return Chromagram(_fold(weighted, band_pitch_classes(S.band_freqs)),
                      fps=S.fps, kind=KIND_FOLDED)


def _fold(data, pcs):
    out = np.zeros((data.shape[0], 12), dtype=np.float64)
    for pc in range(12):
        cols = pcs == pc
        if cols.any():
            out[:, pc] = data[:, cols].sum(axis=1)
    peaks = out.max(axis=1, keepdims=True)
    np.divide(out, peaks, out=out, where=peaks > 0)
    return out


def ideal_chroma(ann, n_frames, fps=10.0):
    """Ground-truth chromagram: each row is the governing chord template."""
    return Chromagram(frame_targets(ann, n_frames, fps), fps=fps,
                      kind=KIND_IDEAL)


def context_to_frames(context_seconds, fps=10.0):
    """Nearest odd frame count for a context window (minimum 1)."""
    n = 2 * int(round((context_seconds * fps - 1.0) / 2.0)) + 1
    return max(n, 1)


def stack_for_classifier(F, context_seconds, fps=10.0):
    """Stack feature frames into classifier rows with zero padding.

    Accepts a Chromagram, QuarterToneSpectrogram, or plain 2-d array.
    ``context_seconds`` maps to the nearest odd frame count at 10 fps
    (1.5 s -> 15 frames, 1.1 s -> 11, 0.1 s -> 1). Deep chroma is
    conventionally stacked with 0.1 s only: the network already consumed
    the context. That convention is applied by the evaluation driver,
    not enforced here.
    """
    if isinstance(F, Chromagram):
        data, fps = F.data, F.fps
    elif isinstance(F, QuarterToneSpectrogram):
        data, fps = F.data, F.fps
    elif isinstance(F, FeatureMatrix):
        data, fps = F.data, F.fps
    else:
        data = np.asarray(F, dtype=np.float64)
    if data.ndim != 2:
        raise ValueError("expected a 2-d feature matrix")
    n_ctx = context_to_frames(context_seconds, fps)
    side = (n_ctx - 1) // 2
    n_frames, dim = data.shape
    if side == 0:
        return FeatureMatrix(np.array(data, dtype=np.float64, copy=True),
                             context_seconds, fps)
    padded = np.zeros((n_frames + 2 * side, dim))
    padded[side:side + n_frames] = data
    out = np.empty((n_frames, n_ctx * dim))
    for offset in range(n_ctx):
        out[:, offset * dim:(offset + 1) * dim] = padded[offset:offset + n_frames]
    return FeatureMatrix(out, context_seconds, fps)
