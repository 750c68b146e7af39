"""Deterministic synthetic chord corpus.

Each song is a random chord progression rendered as additive sine chords
with overtones, plus broadband noise bursts standing in for percussion.
The overtones deliberately leak energy into foreign pitch classes (the
3rd partial lands a fifth up, the 5th a major third up), which is
exactly the interference a learned chroma extractor should remove and a
plain energy fold cannot. Everything is keyed by (seed, song index) so
corpora are bit-reproducible.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from .audio import AudioClip, save_wav
from .chords import annotation_to_lab, chord_template, parse_chord, parse_lab

SAMPLE_RATE = 44100

_PC_NAME = ["C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B"]


@dataclass
class SynthConfig:
    """Corpus generation settings (all randomness keyed by ``seed``)."""

    seed: int = 0
    n_songs: int = 20
    song_length: float = 30.0
    chord_min_dur: float = 1.5
    chord_max_dur: float = 4.0
    # quality -> draw weight; "N" is the silence/noise-only symbol
    vocabulary: dict = field(default_factory=lambda: {
        "maj": 4.0, "min": 4.0, "min7": 1.0, "7": 1.0, "N": 1.0})
    octaves: tuple = (3, 4, 5)
    n_overtones: int = 5
    overtone_decay: float = 0.55
    noise_rate: float = 1.0
    noise_amp: float = 0.5
    noise_burst_dur: float = 0.08
    detune_cents: float = 12.0
    chord_amp: float = 0.25
    group: str = "all"

    def __post_init__(self):
        if self.chord_min_dur <= 0 or self.chord_max_dur < self.chord_min_dur:
            raise ValueError("bad chord duration range")
        if self.song_length <= 0:
            raise ValueError("song length must be positive")
        weights = list(self.vocabulary.values())
        if any(w < 0 for w in weights) or sum(weights) <= 0:
            raise ValueError("vocabulary weights must be >= 0 and sum > 0")
        if not 0 <= self.overtone_decay < 1:
            raise ValueError("overtone decay must be in [0, 1)")


def _pc_to_freq(pc, octave):
    midi = 12 * (octave + 1) + pc
    return 440.0 * 2.0 ** ((midi - 69) / 12.0)


def _draw_progression(cfg, rng):
    qualities = sorted(cfg.vocabulary)
    weights = np.array([cfg.vocabulary[q] for q in qualities])
    weights = weights / weights.sum()
    segments = []
    t = 0.0
    prev_label = None
    while t < cfg.song_length - 1e-9:
        dur = rng.uniform(cfg.chord_min_dur, cfg.chord_max_dur)
        end = min(t + dur, cfg.song_length)
        quality = qualities[rng.choice(len(qualities), p=weights)]
        if quality == "N":
            label = "N"
        else:
            label = _PC_NAME[rng.integers(0, 12)] + ":" + quality
        if label == prev_label and segments:
            # merge with the previous draw instead of an invisible boundary
            start, _, _ = segments[-1]
            segments[-1] = (start, end, label)
        else:
            segments.append((t, end, label))
        prev_label = label
        t = end
    return segments


def _render_segment(cfg, rng, label, n_samples, detune_factor):
    out = np.zeros(n_samples)
    symbol = parse_chord(label)
    if symbol.root_pc is None:
        return out
    pcs = np.nonzero(chord_template(symbol))[0]
    t = np.arange(n_samples) / SAMPLE_RATE
    n_notes = len(pcs) * len(cfg.octaves)
    for pc in pcs:
        for octave in cfg.octaves:
            f0 = _pc_to_freq(pc, octave) * detune_factor
            amp = cfg.chord_amp / n_notes * rng.uniform(0.7, 1.3)
            for h in range(1, cfg.n_overtones + 1):
                f = f0 * h
                if f >= SAMPLE_RATE / 2:
                    break
                phase = rng.uniform(0, 2 * np.pi)
                out += (amp * cfg.overtone_decay ** (h - 1)
                        * np.sin(2 * np.pi * f * t + phase))
    # short attack/release ramps against boundary clicks
    ramp = min(int(0.02 * SAMPLE_RATE), n_samples // 2)
    if ramp > 0:
        env = np.ones(n_samples)
        env[:ramp] = np.linspace(0.0, 1.0, ramp, endpoint=False)
        env[-ramp:] = np.linspace(1.0, 0.0, ramp)
        out *= env
    return out


def _add_noise_bursts(cfg, rng, samples):
    if cfg.noise_rate <= 0 or cfg.noise_amp <= 0:
        return
    duration = len(samples) / SAMPLE_RATE
    n_bursts = rng.poisson(cfg.noise_rate * duration)
    burst_len = max(1, int(cfg.noise_burst_dur * SAMPLE_RATE))
    env = np.hanning(burst_len)
    for _ in range(n_bursts):
        start = rng.integers(0, max(1, len(samples) - burst_len))
        amp = cfg.noise_amp * rng.uniform(0.5, 1.0)
        samples[start:start + burst_len] += \
            amp * env * rng.standard_normal(burst_len)


def gen_song(cfg, index):
    """Render one song. Fully determined by (cfg.seed, index).

    Returns
    -------
    (AudioClip, ChordAnnotation)
        Annotation boundaries match the rendered sample timing exactly.
    """
    rng = np.random.default_rng([cfg.seed, index])
    segments = _draw_progression(cfg, rng)
    n_total = int(round(cfg.song_length * SAMPLE_RATE))
    samples = np.zeros(n_total)
    detune_factor = 2.0 ** (rng.uniform(-cfg.detune_cents,
                                        cfg.detune_cents) / 1200.0)
    snapped = []
    for start, end, label in segments:
        a = int(round(start * SAMPLE_RATE))
        b = min(int(round(end * SAMPLE_RATE)), n_total)
        if b <= a:
            continue
        samples[a:b] += _render_segment(cfg, rng, label, b - a, detune_factor)
        snapped.append((a / SAMPLE_RATE, b / SAMPLE_RATE, label))
    _add_noise_bursts(cfg, rng, samples)
    peak = np.abs(samples).max()
    if peak > 0.99:
        samples *= 0.99 / peak
    lab_text = "\n".join("%.6f %.6f %s" % seg for seg in snapped) + "\n"
    ann = parse_lab(lab_text, song_id="song%03d" % index)
    return AudioClip(samples, SAMPLE_RATE), ann


@dataclass
class CorpusSong:
    """One manifest row."""

    song_id: str
    wav_path: str
    lab_path: str
    duration: float
    group: str


def gen_corpus(cfg, out_dir):
    """Generate WAV + .lab pairs plus a manifest file.

    The manifest has one song per line: id, wav path, lab path, duration
    in seconds, fold group tag (whitespace-separated, paths relative to
    the manifest).

    Returns
    -------
    list of CorpusSong
    """
    os.makedirs(out_dir, exist_ok=True)
    songs = []
    lines = []
    for i in range(cfg.n_songs):
        clip, ann = gen_song(cfg, i)
        song_id = "song%03d" % i
        wav_name = song_id + ".wav"
        lab_name = song_id + ".lab"
        save_wav(os.path.join(out_dir, wav_name), clip.samples,
                 clip.sample_rate)
        with open(os.path.join(out_dir, lab_name), "w", encoding="utf-8") as fh:
            fh.write(annotation_to_lab(ann))
        songs.append(CorpusSong(song_id, os.path.join(out_dir, wav_name),
                                os.path.join(out_dir, lab_name),
                                clip.duration, cfg.group))
        lines.append("%s %s %s %.6f %s"
                     % (song_id, wav_name, lab_name, clip.duration, cfg.group))
    with open(os.path.join(out_dir, "manifest.txt"), "w",
              encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return songs


def load_manifest(path):
    """Read a corpus manifest; paths come back absolute."""
    base = os.path.dirname(os.path.abspath(path))
    songs = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 5:
                raise ValueError("malformed manifest line: %r" % line)
            song_id, wav, lab, dur, group = parts
            songs.append(CorpusSong(song_id, os.path.join(base, wav),
                                    os.path.join(base, lab), float(dur),
                                    group))
    if not songs:
        raise ValueError("empty manifest: %s" % path)
    return songs
