"""WAV loading, channel downmix, and resampling to the 44100 Hz pipeline rate.

Only PCM WAV input is supported (8/16/24/32-bit integer or 32-bit float,
mono or stereo). Everything downstream assumes mono float samples in
[-1, 1] at 44100 Hz.
"""

from dataclasses import dataclass
from math import gcd

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

TARGET_RATE = 44100


class AudioError(ValueError):
    """Raised for unreadable or unsupported audio input."""


@dataclass
class AudioClip:
    """Mono audio samples (float64, nominal range [-1, 1]) at a sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise AudioError("AudioClip holds mono audio, got shape %s"
                             % (self.samples.shape,))
        if self.sample_rate <= 0:
            raise AudioError("sample rate must be positive")
        if not np.all(np.isfinite(self.samples)):
            raise AudioError("non-finite sample values")

    @property
    def duration(self):
        return len(self.samples) / self.sample_rate


def _normalize(data):
    # scipy returns integer PCM at full scale per dtype; 24-bit files arrive
    # left-aligned in int32, so the int32 divisor covers both.
    if data.dtype == np.uint8:
        return (data.astype(np.float64) - 128.0) / 128.0
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0
    if data.dtype == np.int32:
        return data.astype(np.float64) / 2147483648.0
    if data.dtype in (np.float32, np.float64):
        return data.astype(np.float64)
    raise AudioError("unsupported WAV encoding: %s" % data.dtype)


def resample(samples, rate_in, rate_out):
    """Band-limited (polyphase windowed-sinc) resampling."""
    if rate_in == rate_out:
        return np.asarray(samples, dtype=np.float64)
    g = gcd(int(rate_in), int(rate_out))
    return resample_poly(np.asarray(samples, dtype=np.float64),
                         rate_out // g, rate_in // g)


def load_audio(path):
    """Load a PCM WAV file as a mono 44100 Hz AudioClip.

    Multi-channel input is downmixed by the arithmetic mean of the channels;
    other sample rates are resampled with band-limited interpolation.
    """
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise AudioError("unreadable WAV file %s: %s" % (path, exc)) from exc
    if data.size == 0:
        raise AudioError("zero-length audio: %s" % path)
    samples = _normalize(data)
    if samples.ndim == 2:
        if samples.shape[1] > 2:
            raise AudioError("expected 1-2 channels, got %d" % samples.shape[1])
        samples = samples.mean(axis=1)
    elif samples.ndim != 1:
        raise AudioError("unsupported channel layout: shape %s" % (data.shape,))
    if rate != TARGET_RATE:
        samples = resample(samples, rate, TARGET_RATE)
        rate = TARGET_RATE
    return AudioClip(samples, rate)


def save_wav(path, samples, sample_rate=TARGET_RATE):
    """Write mono float samples in [-1, 1] as 16-bit PCM WAV."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1:
        raise AudioError("save_wav writes mono audio")
    pcm = np.clip(np.round(samples * 32767.0), -32768, 32767).astype(np.int16)
    wavfile.write(path, int(sample_rate), pcm)
