"""WCSR scoring, cross-validation, context sweeps, and paired t-tests.

Scores are duration-weighted: every frame is a 0.1 s slice of the song,
a frame is correct when the predicted class matches the maj/min
reduction of the reference chord at the frame center, and frames whose
reference does not reduce to the maj/min vocabulary are excluded from
both numerator and denominator. Corpus-level WCSR is the ratio of summed
correct seconds to summed mappable seconds.
"""

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats
from sklearn.base import clone

from .audio import load_audio
from .chords import frame_labels, frame_targets, load_lab
from .estimators import ChordClassifier, DeepChromaExtractor
from .features import (deep_chroma, fold_chroma, fold_chroma_weighted_log,
                       ideal_chroma, stack_for_classifier)
from .formats import EXCLUDED, write_bytes_atomic
from .spectrogram import build_filterbank, spectrogram_pipeline, stack_context

FEATURE_KINDS = ("deep", "c", "cwlog", "slog", "ideal")
NO_CHORD_CLASS = 24


def wcsr(predictions, ann, fps=10.0):
    """Correct and mappable seconds for one song.

    Parameters
    ----------
    predictions : int array
        Per-frame class indices at ``fps``; padded with no-chord if the
        annotation outlasts them.
    ann : ChordAnnotation

    Returns
    -------
    (correct_seconds, mappable_seconds)
    """
    if not ann.segments:
        raise ValueError("empty reference annotation")
    predictions = np.asarray(predictions, dtype=np.int64)
    n = max(len(predictions), int(math.ceil(ann.end * fps)))
    pred = np.full(n, NO_CHORD_CLASS, dtype=np.int64)
    pred[:len(predictions)] = predictions
    ref = frame_labels(ann, n, fps).astype(np.int64)
    mappable = ref != EXCLUDED
    correct = mappable & (pred == ref)
    frame_s = 1.0 / fps
    return correct.sum() * frame_s, mappable.sum() * frame_s


@dataclass
class FoldSplit:
    """Partition of songs into k folds with per-rotation train/val/test."""

    k: int
    fold_of: dict
    order: list

    def songs_in(self, fold):
        return [s for s in self.order if self.fold_of[s] == fold]

    def rotation(self, r):
        """Train/validation/test song ids for test fold ``r``.

        For k >= 3 the validation fold is (r + 1) % k and the rest train.
        For k = 2 there is only one remaining fold, so the last quarter
        of its songs (at least one) become the validation set.
        """
        if not 0 <= r < self.k:
            raise ValueError("rotation %d out of range for k=%d" % (r, self.k))
        test = self.songs_in(r)
        if self.k == 2:
            pool = self.songs_in(1 - r)
            n_val = max(1, len(pool) // 4)
            if n_val >= len(pool):
                raise ValueError("fold too small to carve a validation set")
            return pool[:-n_val], pool[-n_val:], test
        val_fold = (r + 1) % self.k
        val = self.songs_in(val_fold)
        train = [s for s in self.order
                 if self.fold_of[s] not in (r, val_fold)]
        if not train or not val:
            raise ValueError("empty train or validation fold")
        return train, val, test


def make_folds(song_ids, k=8, seed=0, groups=None):
    """Seeded round-robin fold assignment, optionally group-stratified.

    With ``groups`` (one tag per song) the songs of each group are
    shuffled and dealt round-robin with a running fold counter, so every
    fold receives a proportional share of each group.
    """
    song_ids = list(song_ids)
    if len(song_ids) < k:
        raise ValueError("%d songs cannot fill %d folds" % (len(song_ids), k))
    if k < 2:
        raise ValueError("need at least 2 folds")
    rng = np.random.default_rng(seed)
    if groups is None:
        grouped = {"": song_ids}
    else:
        if len(groups) != len(song_ids):
            raise ValueError("need one group tag per song")
        grouped = {}
        for sid, g in zip(song_ids, groups):
            grouped.setdefault(g, []).append(sid)
    fold_of = {}
    order = []
    counter = 0
    for g in sorted(grouped):
        members = list(grouped[g])
        perm = rng.permutation(len(members))
        for i in perm:
            fold_of[members[i]] = counter % k
            order.append(members[i])
            counter += 1
    return FoldSplit(k, fold_of, order)


@dataclass
class PreparedSong:
    """Cached per-song inputs shared across folds and feature kinds."""

    song_id: str
    ann: object
    S: object
    S_log: object
    group: str = "all"

    @property
    def n_frames(self):
        return self.S.n_frames


def prepare_corpus(manifest_songs, fb=None):
    """Load audio and annotations, compute both spectrograms per song."""
    if fb is None:
        fb = build_filterbank()
    prepared = []
    for song in manifest_songs:
        clip = load_audio(song.wav_path)
        ann = load_lab(song.lab_path, song_id=song.song_id)
        S, S_log = spectrogram_pipeline(clip, fb)
        prepared.append(PreparedSong(song.song_id, ann, S, S_log, song.group))
    return prepared


def song_features(ps, kind, context_seconds, extractor=None):
    """Classifier feature rows for one prepared song.

    ``kind`` is one of FEATURE_KINDS or a callable mapping a
    PreparedSong to an (n_frames, d) array (test hook). Deep chroma is
    always stacked with a single frame; the network consumed the context.
    """
    if callable(kind):
        base = np.asarray(kind(ps), dtype=np.float64)
        return stack_for_classifier(base, context_seconds).data
    if kind == "deep":
        if extractor is None:
            raise ValueError("deep features need a trained extractor")
        model = extractor.model_ if hasattr(extractor, "model_") else extractor
        return deep_chroma(model, ps.S_log).data
    if kind == "c":
        base = fold_chroma(ps.S)
    elif kind == "cwlog":
        base = fold_chroma_weighted_log(ps.S)
    elif kind == "slog":
        base = ps.S_log
    elif kind == "ideal":
        base = ideal_chroma(ps.ann, ps.n_frames)
    else:
        raise ValueError("unknown feature kind %r" % (kind,))
    return stack_for_classifier(base, context_seconds).data


def _extractor_data(songs, context_frames):
    side = (context_frames - 1) // 2
    xs, ys = [], []
    for ps in songs:
        xs.append(stack_context(ps.S_log, side).data)
        ys.append(frame_targets(ps.ann, ps.n_frames))
    return np.vstack(xs), np.vstack(ys)


def train_extractor_on_songs(prototype, train_songs, val_songs):
    """Fit a clone of the extractor prototype on whole songs."""
    extractor = clone(prototype)
    X_tr, y_tr = _extractor_data(train_songs, extractor.context_frames)
    X_val, y_val = _extractor_data(val_songs, extractor.context_frames)
    return extractor.fit(X_tr, y_tr, X_val=X_val, y_val=y_val)


def _classifier_data(songs, kind, context_seconds, extractor):
    xs, ys = [], []
    for ps in songs:
        feats = song_features(ps, kind, context_seconds, extractor)
        labels = frame_labels(ps.ann, ps.n_frames).astype(np.int64)
        keep = labels != EXCLUDED
        xs.append(feats[keep])
        ys.append(labels[keep])
    X = np.vstack(xs)
    y = np.concatenate(ys)
    if len(X) == 0:
        raise ValueError("no mappable frames to train on")
    return X, y


@dataclass
class SongScore:
    song_id: str
    fold: int
    correct_s: float
    mappable_s: float

    @property
    def wcsr(self):
        return self.correct_s / self.mappable_s if self.mappable_s else 0.0


@dataclass
class EvalResult:
    """Per-song scores plus totals for one feature configuration."""

    feature: str
    context_seconds: float
    scores: list

    @property
    def total_wcsr(self):
        mappable = sum(s.mappable_s for s in self.scores)
        if mappable == 0:
            return 0.0
        return sum(s.correct_s for s in self.scores) / mappable

    def per_song(self):
        return {s.song_id: s.wcsr for s in self.scores}


def cross_validate(corpus, kind, context_seconds, folds, extractor=None,
                   classifier=None):
    """Full k-fold protocol for one feature configuration.

    For every rotation: the extractor (deep features only) and the
    classifier are trained on the train folds with early stopping on the
    validation fold, then the test fold is scored with WCSR. Runs are
    deterministic given the estimator seeds and fold split.
    """
    by_id = {ps.song_id: ps for ps in corpus}
    if classifier is None:
        classifier = ChordClassifier()
    if kind == "deep" and extractor is None:
        extractor = DeepChromaExtractor()
    scores = []
    for r in range(folds.k):
        train_ids, val_ids, test_ids = folds.rotation(r)
        train_songs = [by_id[s] for s in train_ids]
        val_songs = [by_id[s] for s in val_ids]
        fitted_extractor = None
        if kind == "deep":
            fitted_extractor = train_extractor_on_songs(
                extractor, train_songs, val_songs)
        X_tr, y_tr = _classifier_data(train_songs, kind, context_seconds,
                                      fitted_extractor)
        X_val, y_val = _classifier_data(val_songs, kind, context_seconds,
                                        fitted_extractor)
        clf = clone(classifier)
        clf.fit(X_tr, y_tr, X_val=X_val, y_val=y_val)
        for sid in test_ids:
            ps = by_id[sid]
            feats = song_features(ps, kind, context_seconds, fitted_extractor)
            pred = clf.predict(feats)
            correct_s, mappable_s = wcsr(pred, ps.ann)
            scores.append(SongScore(sid, r, correct_s, mappable_s))
    name = kind if isinstance(kind, str) else getattr(kind, "__name__",
                                                      "custom")
    return EvalResult(name, context_seconds, scores)


def sweep_context(corpus, kind, contexts, folds, rotations=(0,),
                  extractor=None, classifier=None):
    """Validation-fold WCSR for each candidate context width.

    For the deep feature the context varies the extractor's own input
    window; for every other feature it varies the classifier's frame
    stack. Scores come from the validation fold (the sweep is a
    hyperparameter search; the test fold stays untouched).

    Returns
    -------
    list of dict rows: feature, context_s, rotation, correct_s,
    mappable_s, wcsr.
    """
    from .features import context_to_frames

    by_id = {ps.song_id: ps for ps in corpus}
    if classifier is None:
        classifier = ChordClassifier()
    if kind == "deep" and extractor is None:
        extractor = DeepChromaExtractor()
    rows = []
    for context_seconds in contexts:
        for r in rotations:
            train_ids, val_ids, _ = folds.rotation(r)
            train_songs = [by_id[s] for s in train_ids]
            val_songs = [by_id[s] for s in val_ids]
            fitted_extractor = None
            if kind == "deep":
                proto = clone(extractor)
                proto.set_params(
                    context_frames=context_to_frames(context_seconds))
                fitted_extractor = train_extractor_on_songs(
                    proto, train_songs, val_songs)
                clf_context = 0.1
            else:
                clf_context = context_seconds
            X_tr, y_tr = _classifier_data(train_songs, kind, clf_context,
                                          fitted_extractor)
            X_val, y_val = _classifier_data(val_songs, kind, clf_context,
                                            fitted_extractor)
            clf = clone(classifier)
            clf.fit(X_tr, y_tr, X_val=X_val, y_val=y_val)
            correct = mappable = 0.0
            for ps in val_songs:
                feats = song_features(ps, kind, clf_context, fitted_extractor)
                c, m = wcsr(clf.predict(feats), ps.ann)
                correct += c
                mappable += m
            rows.append({"feature": kind if isinstance(kind, str) else "custom",
                         "context_s": context_seconds, "rotation": r,
                         "correct_s": correct, "mappable_s": mappable,
                         "wcsr": correct / mappable if mappable else 0.0})
    return rows


def paired_t_test(a, b):
    """Two-sided paired t-test over per-song score pairs.

    Returns
    -------
    (t, p); all-zero differences give t = 0, p = 1, and zero variance
    with a nonzero mean gives p = 0.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("need two equal-length score vectors")
    n = len(a)
    if n < 2:
        raise ValueError("need at least 2 paired scores")
    d = a - b
    mean = d.mean()
    sd = d.std(ddof=1)
    if sd == 0.0:
        if mean == 0.0:
            return 0.0, 1.0
        return math.copysign(math.inf, mean), 0.0
    t = mean / (sd / math.sqrt(n))
    p = 2.0 * stats.t.sf(abs(t), n - 1)
    return float(t), float(p)


_CSV_FIELDS = ("song", "feature", "context_s", "fold", "correct_s",
               "mappable_s", "wcsr")


def write_results_csv(path, result):
    """Per-song rows for one EvalResult (header + one row per song)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_CSV_FIELDS)
    for s in result.scores:
        writer.writerow([s.song_id, result.feature,
                         "%g" % result.context_seconds, s.fold,
                         "%.6f" % s.correct_s, "%.6f" % s.mappable_s,
                         "%.6f" % s.wcsr])
    write_bytes_atomic(path, buf.getvalue().encode("utf-8"))


def read_results_csv(path):
    """Read a results CSV back into an EvalResult."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or \
                tuple(reader.fieldnames) != _CSV_FIELDS:
            raise ValueError("unexpected CSV columns in %s" % path)
        scores = []
        feature = ""
        context = 0.0
        for row in reader:
            feature = row["feature"]
            context = float(row["context_s"])
            scores.append(SongScore(row["song"], int(row["fold"]),
                                    float(row["correct_s"]),
                                    float(row["mappable_s"])))
    if not scores:
        raise ValueError("no rows in %s" % path)
    return EvalResult(feature, context, scores)


def write_sweep_csv(path, rows):
    """Context-sweep rows (feature, context_s, rotation, scores)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("feature", "context_s", "rotation", "correct_s",
                     "mappable_s", "wcsr"))
    for row in rows:
        writer.writerow([row["feature"], "%g" % row["context_s"],
                         row["rotation"], "%.6f" % row["correct_s"],
                         "%.6f" % row["mappable_s"], "%.6f" % row["wcsr"]])
    write_bytes_atomic(path, buf.getvalue().encode("utf-8"))
