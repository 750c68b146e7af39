"""Chord annotation parsing, chroma templates, and the maj/min class reduction.

Chord labels follow the common ``ROOT[:QUALITY][/BASS]`` text syntax with
``N`` for no-chord and ``X`` for unknown. Parsed symbols feed two distinct
consumers that must not be conflated: chroma *templates* keep the full
pitch-class set of the chord (a min7 keeps its seventh), while classifier
*classes* reduce every chord to one of 24 major/minor classes plus
no-chord according to its third.
"""

import re
from dataclasses import dataclass, field

import numpy as np

from .formats import EXCLUDED

N_CLASSES = 25
NO_CHORD_CLASS = 24

_ROOT_PC = {"C": 0, "D": 2, "E": 4, "F": 5, "G": 7, "A": 9, "B": 11}
_PC_NAME = ["C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B"]

# semitone intervals of the supported quality shorthands, relative to the root
_QUALITY_INTERVALS = {
    "maj": (0, 4, 7),
    "min": (0, 3, 7),
    "dim": (0, 3, 6),
    "aug": (0, 4, 8),
    "maj7": (0, 4, 7, 11),
    "min7": (0, 3, 7, 10),
    "7": (0, 4, 7, 10),
    "dim7": (0, 3, 6, 9),
    "hdim7": (0, 3, 6, 10),
    "minmaj7": (0, 3, 7, 11),
    "maj6": (0, 4, 7, 9),
    "min6": (0, 3, 7, 9),
    "9": (0, 4, 7, 10, 14),
    "maj9": (0, 4, 7, 11, 14),
    "min9": (0, 3, 7, 10, 14),
    "11": (0, 4, 7, 10, 14, 17),
    "min11": (0, 3, 7, 10, 14, 17),
    "13": (0, 4, 7, 10, 14, 17, 21),
    "maj13": (0, 4, 7, 11, 14, 21),
    "min13": (0, 3, 7, 10, 14, 17, 21),
    "sus2": (0, 2, 7),
    "sus4": (0, 5, 7),
    "5": (0, 7),
    "1": (0,),
}

# major scale degrees in semitones; degree d maps through (d - 1) mod 7 with
# octave carries, plus accidental offsets
_SCALE = (0, 2, 4, 5, 7, 9, 11)

_LABEL_RE = re.compile(
    r"^(?P<root>[A-G][#b]*)"
    r"(?::(?P<quality>[a-z0-9]+))?"
    r"(?:\((?P<degrees>[^)]*)\))?"
    r"(?:/(?P<bass>[#b]*\d+))?$")
_DEGREE_RE = re.compile(r"^(?P<mod>[#b]*)(?P<num>\d+)$")


class ChordError(ValueError):
    """Raised for labels or annotation files that do not parse."""


@dataclass(frozen=True)
class ChordSymbol:
    """A parsed chord label.

    Parameters
    ----------
    root_pc : int or None
        Pitch class of the root, 0 = C. None for no-chord and unknown.
    quality : str
        Quality shorthand ('maj', 'min7', ...), or 'N' / 'X'.
    extra_degrees : tuple of str
        Additional scale degrees given in parentheses, canonical spelling.
    bass_degree : str or None
        Bass degree after '/', canonical spelling. Parsed and preserved but
        irrelevant to templates (pitch classes carry no octave).
    """

    root_pc: object
    quality: str
    extra_degrees: tuple = ()
    bass_degree: object = None

    @property
    def is_nochord(self):
        return self.quality == "N"

    @property
    def is_unknown(self):
        return self.quality == "X"


NO_CHORD = ChordSymbol(None, "N")
UNKNOWN_CHORD = ChordSymbol(None, "X")


@dataclass(frozen=True)
class ChordSegment:
    """A time interval [start, end) governed by one chord symbol."""

    start: float
    end: float
    symbol: ChordSymbol


@dataclass
class ChordAnnotation:
    """Sorted, non-overlapping chord segments for one song."""

    segments: list
    song_id: str = ""

    @property
    def end(self):
        return self.segments[-1].end if self.segments else 0.0


def _degree_to_semitone(degree):
    m = _DEGREE_RE.match(degree)
    if not m:
        raise ChordError("malformed degree %r" % degree)
    num = int(m.group("num"))
    if num < 1:
        raise ChordError("degree numbers start at 1, got %r" % degree)
    semitone = _SCALE[(num - 1) % 7] + 12 * ((num - 1) // 7)
    for ch in m.group("mod"):
        semitone += 1 if ch == "#" else -1
    return semitone


def _canonical_degree(degree):
    # normalize accidental spelling so serialization round-trips exactly
    semitone = _degree_to_semitone(degree)
    names = ["1", "b2", "2", "b3", "3", "4", "b5", "5", "#5", "6", "b7", "7"]
    octave, pc = divmod(semitone, 12)
    if octave == 0:
        return names[pc]
    # degrees above the octave keep their compound number where it is exact
    compound = {14: "9", 13: "b9", 15: "#9", 17: "11", 18: "#11",
                21: "13", 20: "b13"}
    return compound.get(semitone, degree)


def parse_chord(label):
    """Parse one chord label into a ChordSymbol.

    Parameters
    ----------
    label : str
        ``ROOT[:QUALITY][(DEGREES)][/BASS]``, ``N``, or ``X``. Roots are
        A-G with any number of '#'/'b' modifiers; a bare root means 'maj'.

    Returns
    -------
    ChordSymbol

    Examples
    --------
    >>> parse_chord('F#:min').root_pc
    6
    >>> parse_chord('Db:7').root_pc
    1
    >>> parse_chord('C').quality
    'maj'
    """
    label = label.strip()
    if label == "N":
        return NO_CHORD
    if label == "X":
        return UNKNOWN_CHORD
    m = _LABEL_RE.match(label)
    if not m:
        raise ChordError("cannot parse chord label %r" % label)
    root = m.group("root")
    pc = _ROOT_PC[root[0]]
    for ch in root[1:]:
        pc += 1 if ch == "#" else -1
    pc %= 12
    quality = m.group("quality") or "maj"
    if quality not in _QUALITY_INTERVALS:
        raise ChordError("unknown quality %r in %r" % (quality, label))
    extras = ()
    if m.group("degrees") is not None:
        parts = [d.strip() for d in m.group("degrees").split(",") if d.strip()]
        if not parts:
            raise ChordError("empty degree list in %r" % label)
        for d in parts:
            if d.startswith("*"):
                raise ChordError("degree omissions are not supported: %r"
                                 % label)
        extras = tuple(_canonical_degree(d) for d in parts)
    bass = m.group("bass")
    if bass is not None:
        bass = _canonical_degree(bass)
    return ChordSymbol(pc, quality, extras, bass)


def chord_to_string(symbol):
    """Serialize a ChordSymbol back to label text (sharp spellings)."""
    if symbol.is_nochord:
        return "N"
    if symbol.is_unknown:
        return "X"
    out = _PC_NAME[symbol.root_pc] + ":" + symbol.quality
    if symbol.extra_degrees:
        out += "(" + ",".join(symbol.extra_degrees) + ")"
    if symbol.bass_degree is not None:
        out += "/" + symbol.bass_degree
    return out


def chord_template(symbol):
    """Binary 12-vector of the chord's full pitch-class set.

    The template keeps every chord tone including extensions (A:min7 sets
    {9, 0, 4, 7}); no-chord and unknown map to the all-zero vector.

    Parameters
    ----------
    symbol : ChordSymbol

    Returns
    -------
    numpy array, shape (12,), float64 in {0, 1}, index 0 = C.
    """
    bits = np.zeros(12, dtype=np.float64)
    if symbol.root_pc is None:
        return bits
    for interval in _QUALITY_INTERVALS[symbol.quality]:
        bits[(symbol.root_pc + interval) % 12] = 1.0
    for degree in symbol.extra_degrees:
        bits[(symbol.root_pc + _degree_to_semitone(degree)) % 12] = 1.0
    return bits


def reduce_majmin(symbol):
    """Map a chord symbol to its major/minor class index.

    Classes 0-11 are major chords by root pitch class, 12-23 minor,
    24 no-chord. Qualities containing a major third reduce to major,
    a minor third to minor; thirdless qualities (sus2, sus4, power
    chords) and unknown labels return EXCLUDED.

    Returns
    -------
    int
        Class index 0-24, or EXCLUDED (255).
    """
    if symbol.is_nochord:
        return NO_CHORD_CLASS
    if symbol.root_pc is None:
        return EXCLUDED
    intervals = _QUALITY_INTERVALS[symbol.quality]
    if 4 in intervals:
        return symbol.root_pc
    if 3 in intervals:
        return 12 + symbol.root_pc
    return EXCLUDED


def class_to_string(index):
    """Readable name of a class index ('C:maj', 'A:min', 'N')."""
    if index == NO_CHORD_CLASS:
        return "N"
    if index == EXCLUDED:
        return "X"
    if 0 <= index < 12:
        return _PC_NAME[index] + ":maj"
    if 12 <= index < 24:
        return _PC_NAME[index - 12] + ":min"
    raise ValueError("bad class index %r" % index)


def parse_lab(text, song_id=""):
    """Parse .lab annotation text into a ChordAnnotation.

    Parameters
    ----------
    text : str
        Lines of ``start end label`` separated by whitespace. Blank lines
        and '#' comments are skipped.
    song_id : str
        Identifier stored on the annotation.

    Returns
    -------
    ChordAnnotation
        Segments sorted by start time and validated non-overlapping.
    """
    segments = []
    for lineno, line in enumerate(text.splitlines(), 1):
        # '#' opens a comment only at line start or after whitespace;
        # inside a label it is an accidental (F#:maj)
        for i, ch in enumerate(line):
            if ch == "#" and (i == 0 or line[i - 1] in " \t"):
                line = line[:i]
                break
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ChordError("line %d: expected 'start end label', got %r"
                             % (lineno, line))
        try:
            start = float(parts[0])
            end = float(parts[1])
        except ValueError as exc:
            raise ChordError("line %d: malformed number in %r"
                             % (lineno, line)) from exc
        if start < 0:
            raise ChordError("line %d: negative start time" % lineno)
        if end <= start:
            raise ChordError("line %d: end %.6f not after start %.6f"
                             % (lineno, end, start))
        segments.append(ChordSegment(start, end, parse_chord(parts[2])))
    segments.sort(key=lambda s: s.start)
    for a, b in zip(segments, segments[1:]):
        if b.start < a.end:
            raise ChordError("overlapping segments at %.6f" % b.start)
    return ChordAnnotation(segments, song_id)


def load_lab(path, song_id=None):
    """Read and parse a .lab file."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    if song_id is None:
        song_id = str(path)
    return parse_lab(text, song_id)


def annotation_to_lab(ann):
    """Serialize an annotation back to .lab text."""
    lines = ["%.6f %.6f %s" % (seg.start, seg.end, chord_to_string(seg.symbol))
             for seg in ann.segments]
    return "\n".join(lines) + "\n"


def symbol_at(ann, time):
    """Chord symbol governing a point in time (no-chord past the end).

    Segments are half-open [start, end), so a time exactly on a boundary
    belongs to the following segment.
    """
    for seg in ann.segments:
        if seg.start <= time < seg.end:
            return seg.symbol
        if seg.start > time:
            break
    return NO_CHORD


def frame_labels(ann, n_frames, fps=10.0):
    """Per-frame maj/min class labels sampled at frame centers.

    Frame t is labelled by the segment containing time t/fps; times past
    the last segment count as no-chord.

    Returns
    -------
    numpy array, shape (n_frames,), uint8
        Class indices 0-24 or EXCLUDED.
    """
    if fps <= 0:
        raise ValueError("fps must be positive")
    out = np.empty(n_frames, dtype=np.uint8)
    for t in range(n_frames):
        out[t] = reduce_majmin(symbol_at(ann, t / fps))
    return out


def frame_targets(ann, n_frames, fps=10.0):
    """Per-frame chroma templates sampled at frame centers.

    Same frame rule as frame_labels, emitting the full chroma template of
    the governing symbol (zeros past the annotation).

    Returns
    -------
    numpy array, shape (n_frames, 12), float64 in {0, 1}.
    """
    if fps <= 0:
        raise ValueError("fps must be positive")
    out = np.zeros((n_frames, 12), dtype=np.float64)
    for t in range(n_frames):
        out[t] = chord_template(symbol_at(ann, t / fps))
    return out
