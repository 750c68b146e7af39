"""Logarithmic quarter-tone spectrograms and super-frame context windows.

The front end converts audio into a 178-band log-frequency magnitude
spectrogram at 10 frames per second: STFT (frame 8192, hop 4410, Hann
window), a triangular filterbank on the quarter-tone grid between 30 Hz
and 5500 Hz, and log(1 + x) compression. Consecutive compressed frames
are concatenated into super-frames that serve as network input.
"""

import math
from dataclasses import dataclass, field

import numpy as np

FRAME_SIZE = 8192
HOP = 4410
FMIN = 30.0
FMAX = 5500.0
BINS_PER_OCTAVE = 24
REFERENCE_FREQ = 440.0
N_BANDS = 178
CONTEXT_FRAMES = 15


@dataclass
class MagnitudeSpectrogram:
    """STFT magnitudes: n_frames x n_bins, with framing metadata."""

    data: np.ndarray
    frame_size: int
    hop: int
    sample_rate: int

    @property
    def fps(self):
        return self.sample_rate / self.hop


@dataclass
class QuarterToneFilterbank:
    """Triangular filters: matrix (n_bands x n_bins) and center frequencies."""

    matrix: np.ndarray
    center_freqs: np.ndarray


@dataclass
class QuarterToneSpectrogram:
    """Filterbank output: n_frames x 178, optionally log-compressed.

    ``band_freqs`` carries the filter center frequencies so downstream
    pitch-class folding does not need the filterbank object.
    """

    data: np.ndarray
    fps: float
    is_log: bool
    band_freqs: np.ndarray = field(default=None)

    @property
    def n_frames(self):
        return self.data.shape[0]


@dataclass
class SuperFrameSequence:
    """Per-frame context windows, flattened: n_frames x (context * bands)."""

    data: np.ndarray
    context_frames: int
    fps: float


def stft_magnitude(clip, frame_size=FRAME_SIZE, hop=HOP):
    """Magnitude STFT with frames centered at n*hop.

    Frame n covers samples [n*hop - frame_size/2, n*hop + frame_size/2),
    zero-padded at the signal boundaries, so frame n corresponds to time
    n*hop/rate. n_frames = ceil(len/hop); a Hann window is applied before
    the DFT and the non-negative-frequency magnitudes are returned.
    """
    samples = np.asarray(clip.samples, dtype=np.float64)
    if samples.size == 0:
        raise ValueError("empty clip")
    if frame_size <= 0 or hop <= 0:
        raise ValueError("frame_size and hop must be positive")
    n_frames = int(math.ceil(len(samples) / hop))
    half = frame_size // 2
    window = np.hanning(frame_size)
    frames = np.empty((n_frames, frame_size), dtype=np.float64)
    for n in range(n_frames):
        start = n * hop - half
        end = start + frame_size
        lo = max(start, 0)
        hi = min(end, len(samples))
        frame = np.zeros(frame_size, dtype=np.float64)
        if hi > lo:
            frame[lo - start:hi - start] = samples[lo:hi]
        frames[n] = frame
    mags = np.abs(np.fft.rfft(frames * window, axis=1))
    return MagnitudeSpectrogram(mags, frame_size, hop, clip.sample_rate)


def _triangle_cell_weight(s, c, e, j):
    # Integral of the unit-peak triangle with anchors s < c < e (bin units)
    # over the bin cell [j - 1/2, j + 1/2].
    def rising(a, b):
        a = max(a, s)
        b = min(b, c)
        if b <= a:
            return 0.0
        return ((b - s) ** 2 - (a - s) ** 2) / (2.0 * (c - s))

    def falling(a, b):
        a = max(a, c)
        b = min(b, e)
        if b <= a:
            return 0.0
        return ((e - a) ** 2 - (e - b) ** 2) / (2.0 * (e - c))

    return rising(j - 0.5, j + 0.5) + falling(j - 0.5, j + 0.5)


def build_filterbank(sample_rate=44100, frame_size=FRAME_SIZE, fmin=FMIN,
                     fmax=FMAX, bins_per_octave=BINS_PER_OCTAVE,
                     fref=REFERENCE_FREQ):
    """Triangular quarter-tone filterbank mapped onto STFT bins.

    Centers lie on the grid f = fref * 2^(k / bins_per_octave) restricted to
    [fmin, fmax]; each filter is the triangle spanning its two neighbor grid
    frequencies, integrated over the STFT bin cells (exact treatment of the
    fractional bin positions). A triangle narrower than the bin spacing gets
    its mass split between the two bins flanking its center, which keeps
    every filter distinct. Rows are normalized to sum 1. Filters whose bin
    support still collapses onto an identical weight vector are merged;
    with the default parameters nothing merges and exactly 178 filters
    remain.
    """
    if not 0 < fmin < fmax <= sample_rate / 2:
        raise ValueError("need 0 < fmin < fmax <= Nyquist")
    delta = sample_rate / frame_size
    n_bins = frame_size // 2 + 1
    k_lo = math.ceil(bins_per_octave * math.log2(fmin / fref))
    k_hi = math.floor(bins_per_octave * math.log2(fmax / fref))
    grid = fref * 2.0 ** (np.arange(k_lo, k_hi + 1) / bins_per_octave)
    if len(grid) < 3:
        raise ValueError("degenerate parameters: no filters fit")
    rows = []
    centers = []
    for i in range(len(grid) - 2):
        s, c, e = grid[i] / delta, grid[i + 1] / delta, grid[i + 2] / delta
        row = np.zeros(n_bins, dtype=np.float64)
        for j in range(max(0, math.floor(s - 0.5)),
                       min(n_bins, math.ceil(e + 0.5) + 1)):
            w = _triangle_cell_weight(s, c, e, j)
            if w > 0.0:
                row[j] = w
        if np.count_nonzero(row) < 2:
            row[:] = 0.0
            lo = int(math.floor(c))
            frac = c - lo
            row[lo] = 1.0 - frac
            if lo + 1 < n_bins:
                row[lo + 1] = frac
        row /= row.sum()
        rows.append(row)
        centers.append(grid[i + 1])
    # merge filters that ended up with identical weight vectors (vacuous at
    # the default parameters, kept for odd parameter choices)
    merged_rows = []
    merged_centers = []
    seen = {}
    for row, center in zip(rows, centers):
        key = row.tobytes()
        if key in seen:
            continue
        seen[key] = True
        merged_rows.append(row)
        merged_centers.append(center)
    matrix = np.array(merged_rows)
    center_freqs = np.array(merged_centers)
    if (sample_rate, frame_size, fmin, fmax, bins_per_octave, fref) == \
            (44100, FRAME_SIZE, FMIN, FMAX, BINS_PER_OCTAVE, REFERENCE_FREQ):
        assert matrix.shape[0] == N_BANDS, matrix.shape
    return QuarterToneFilterbank(matrix, center_freqs)


def apply_filterbank(spec, fb):
    """Project STFT magnitudes onto the filterbank bands (not yet log)."""
    if spec.data.shape[1] != fb.matrix.shape[1]:
        raise ValueError("filterbank expects %d bins, spectrogram has %d"
                         % (fb.matrix.shape[1], spec.data.shape[1]))
    data = spec.data @ fb.matrix.T
    return QuarterToneSpectrogram(data, fps=spec.fps, is_log=False,
                                  band_freqs=fb.center_freqs.copy())


def log_compress(S):
    """Pointwise log(1 + x) compression."""
    if S.is_log:
        raise ValueError("spectrogram is already log-compressed")
    if np.any(S.data < 0):
        raise ValueError("negative magnitude entries")
    return QuarterToneSpectrogram(np.log1p(S.data), fps=S.fps, is_log=True,
                                  band_freqs=None if S.band_freqs is None
                                  else S.band_freqs.copy())


def stack_context(S_log, frames_per_side=7):
    """Concatenate each frame with its neighbors into super-frames.

    Super-frame t is the row-wise concatenation of frames t-k ... t+k
    (k = frames_per_side) in time order; frames outside the spectrogram
    are zero blocks. With the defaults each row has 15 * 178 = 2670 dims.
    """
    if not S_log.is_log:
        raise ValueError("stack_context expects the log-compressed spectrogram")
    data = np.asarray(S_log.data, dtype=np.float64)
    n_frames, n_bands = data.shape
    context = 2 * frames_per_side + 1
    padded = np.zeros((n_frames + 2 * frames_per_side, n_bands))
    padded[frames_per_side:frames_per_side + n_frames] = data
    out = np.empty((n_frames, context * n_bands))
    for offset in range(context):
        out[:, offset * n_bands:(offset + 1) * n_bands] = \
            padded[offset:offset + n_frames]
    return SuperFrameSequence(out, context_frames=context, fps=S_log.fps)


def spectrogram_pipeline(clip, fb=None, frame_size=FRAME_SIZE, hop=HOP):
    """Audio to raw and log quarter-tone spectrograms in one call."""
    if fb is None:
        fb = build_filterbank(clip.sample_rate, frame_size)
    S = apply_filterbank(stft_magnitude(clip, frame_size, hop), fb)
    return S, log_compress(S)
