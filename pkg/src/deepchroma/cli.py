"""Command-line interface.

One executable exposes the whole pipeline: corpus synthesis, spectrogram
and target extraction, extractor/classifier training, cross-validated
evaluation, context sweeps, saliency maps, rendering, and result
reports. Exit codes: 0 success, 1 usage error, 2 data or model error.
Every randomized command takes --seed and reruns byte-identically.
"""

import argparse
import math
import sys

import numpy as np

from . import evaluate as ev
from . import formats, network, render, saliency, synth
from .audio import AudioError, load_audio
from .chords import (ChordError, chord_template, chord_to_string, frame_labels,
                     frame_targets, load_lab, parse_chord, symbol_at)
from .estimators import ChordClassifier, DeepChromaExtractor
from .features import deep_chroma
from .formats import FormatError
from .spectrogram import (build_filterbank, spectrogram_pipeline,
                          stack_context)


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _read_config(path):
    """Flat ``key = value`` per line; '#' comments and blanks allowed."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError("config line %d: expected key = value"
                                 % lineno)
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return values


class _Settings:
    """Resolves option values: CLI flag > config file > built-in default."""

    def __init__(self, args):
        self.args = args
        self.config = _read_config(args.config) if getattr(
            args, "config", None) else {}

    def get(self, name, cast, default):
        cli = getattr(self.args, name.replace("-", "_"), None)
        if cli is not None:
            return cli
        if name in self.config:
            try:
                return cast(self.config[name])
            except ValueError as exc:
                raise UsageError("config value for %r: %s" % (name, exc))
        return default


def _parse_float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError("expected a comma-separated number list, got %r"
                         % text)


def _parse_int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError("expected a comma-separated integer list, got %r"
                         % text)


def build_parser():
    parser = _Parser(prog="deepchroma",
                     description="chroma feature learning and chord "
                                 "recognition toolkit")
    sub = parser.add_subparsers(dest="command", metavar="command")

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="flat key = value settings file")
        return p

    p = add("synth", "generate a synthetic chord corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--songs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--length", type=float, help="song length in seconds")
    p.add_argument("--overtone-decay", type=float)
    p.add_argument("--noise-amp", type=float)
    p.add_argument("--noise-rate", type=float)
    p.add_argument("--detune-cents", type=float)
    p.add_argument("--majmin-only", action="store_true",
                   help="restrict the vocabulary to maj/min/N")

    p = add("spectrogram", "quarter-tone spectrogram of a WAV file")
    p.add_argument("--wav", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--raw", action="store_true",
                   help="skip the log compression")

    p = add("targets", "per-frame chroma targets (and labels) from a .lab")
    p.add_argument("--lab", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int,
                   help="frame count (default: annotation span at 10 fps)")
    p.add_argument("--wav", help="derive the frame count from this audio")
    p.add_argument("--labels-out", help="also write class labels (DCL1)")

    p = add("train-extractor", "train the chroma extractor on a corpus")
    p.add_argument("--corpus", required=True, help="manifest file or its dir")
    p.add_argument("--out", required=True)
    p.add_argument("--folds", type=int)
    p.add_argument("--rotation", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--context-frames", type=int)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--learning-rate", type=float)

    p = add("extract", "deep chroma of a WAV file with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--wav", required=True)
    p.add_argument("--out", required=True)

    p = add("train-classifier", "train the chord classifier on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--feature", required=True,
                   choices=sorted(ev.FEATURE_KINDS))
    p.add_argument("--out", required=True)
    p.add_argument("--model", help="extractor model (deep feature only)")
    p.add_argument("--context", type=float)
    p.add_argument("--folds", type=int)
    p.add_argument("--rotation", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--l2", type=float)

    p = add("evaluate", "cross-validated WCSR for one feature kind")
    p.add_argument("--corpus", required=True)
    p.add_argument("--feature", required=True,
                   choices=sorted(ev.FEATURE_KINDS))
    p.add_argument("--out", required=True, help="per-song results CSV")
    p.add_argument("--context", type=float)
    p.add_argument("--folds", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--l2", type=float)

    p = add("sweep-context", "validation WCSR across context widths")
    p.add_argument("--corpus", required=True)
    p.add_argument("--feature", required=True,
                   choices=sorted(ev.FEATURE_KINDS))
    p.add_argument("--contexts", required=True,
                   help="comma-separated seconds, e.g. 0.1,0.7,1.5")
    p.add_argument("--out", required=True, help="sweep CSV")
    p.add_argument("--folds", type=int)
    p.add_argument("--rotations", help="comma-separated rotation indices")
    p.add_argument("--seed", type=int)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--patience", type=int)

    p = add("saliency", "guided-backprop saliency map")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--wav", help="single-frame mode: audio file")
    p.add_argument("--frame", type=int, help="frame index in --wav mode")
    p.add_argument("--units",
                   help="'all', 'template', or comma-separated output units")
    p.add_argument("--corpus", help="average mode: corpus manifest")
    p.add_argument("--chord", help="average over frames of this chord label")
    p.add_argument("--limit", type=int,
                   help="cap on averaged frames (default 200)")

    p = add("render", "render a feature file to a PGM/PPM image")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kind", choices=("auto", "chroma", "saliency"),
                   default="auto")
    p.add_argument("--bands", type=int,
                   help="bands per frame for saliency reshape (default 178)")

    p = add("report", "aligned WCSR table and paired t-tests from CSVs")
    p.add_argument("csvs", nargs="+", help="results CSVs from `evaluate`")
    p.add_argument("--out", help="also write the report text here")

    return parser


def _load_corpus(path):
    import os
    manifest = path
    if os.path.isdir(path):
        manifest = os.path.join(path, "manifest.txt")
    return synth.load_manifest(manifest)


def _synth_config(s):
    vocab = {"maj": 4.0, "min": 4.0, "min7": 1.0, "7": 1.0, "N": 1.0}
    if s.get("majmin-only", bool, False):
        vocab = {"maj": 4.0, "min": 4.0, "N": 1.0}
    return synth.SynthConfig(
        seed=s.get("seed", int, 0),
        n_songs=s.get("songs", int, 20),
        song_length=s.get("length", float, 30.0),
        overtone_decay=s.get("overtone-decay", float, 0.55),
        noise_amp=s.get("noise-amp", float, 0.5),
        noise_rate=s.get("noise-rate", float, 1.0),
        detune_cents=s.get("detune-cents", float, 12.0),
        vocabulary=vocab)


def _cmd_synth(args):
    s = _Settings(args)
    cfg = _synth_config(s)
    songs = synth.gen_corpus(cfg, args.out)
    total = sum(song.duration for song in songs)
    print("wrote %d songs (%.1f s audio) to %s"
          % (len(songs), total, args.out))
    return 0


def _cmd_spectrogram(args):
    clip = load_audio(args.wav)
    S, S_log = spectrogram_pipeline(clip)
    chosen = S if args.raw else S_log
    formats.write_dcf(args.out, chosen.data, fps=chosen.fps)
    print("wrote %d x %d %s spectrogram to %s"
          % (chosen.data.shape[0], chosen.data.shape[1],
             "raw" if args.raw else "log", args.out))
    return 0


def _cmd_targets(args):
    ann = load_lab(args.lab)
    if args.frames is not None:
        n_frames = args.frames
    elif args.wav:
        clip = load_audio(args.wav)
        n_frames = int(math.ceil(len(clip.samples) / 4410))
    else:
        n_frames = int(math.ceil(ann.end * 10.0))
    targets = frame_targets(ann, n_frames)
    formats.write_dcf(args.out, targets, fps=10.0)
    if args.labels_out:
        formats.write_dcl(args.labels_out, frame_labels(ann, n_frames))
    print("wrote %d frames of targets to %s" % (n_frames, args.out))
    return 0


def _extractor_from_settings(s):
    return DeepChromaExtractor(
        context_frames=s.get("context-frames", int, 15),
        max_epochs=s.get("max-epochs", int, 100),
        patience=s.get("patience", int, 20),
        batch_size=s.get("batch-size", int, 512),
        dropout=s.get("dropout", float, 0.5),
        learning_rate=s.get("learning-rate", float, 1e-3),
        seed=s.get("seed", int, 0))


def _cmd_train_extractor(args):
    s = _Settings(args)
    corpus = ev.prepare_corpus(_load_corpus(args.corpus))
    folds = ev.make_folds([ps.song_id for ps in corpus],
                          k=s.get("folds", int, 2),
                          seed=s.get("seed", int, 0),
                          groups=[ps.group for ps in corpus])
    train_ids, val_ids, _ = folds.rotation(s.get("rotation", int, 0))
    by_id = {ps.song_id: ps for ps in corpus}
    extractor = ev.train_extractor_on_songs(
        _extractor_from_settings(s),
        [by_id[i] for i in train_ids], [by_id[i] for i in val_ids])
    extractor.save(args.out)
    best = max(h["val_metric"] for h in extractor.history_)
    print("trained %d epochs, best validation chroma accuracy %.4f; model "
          "saved to %s" % (len(extractor.history_), best, args.out))
    return 0


def _cmd_extract(args):
    model = network.load_model(args.model)
    clip = load_audio(args.wav)
    _, S_log = spectrogram_pipeline(clip)
    chroma = deep_chroma(model, S_log)
    formats.write_dcf(args.out, chroma.data, fps=chroma.fps)
    print("wrote %d x 12 chromagram to %s"
          % (chroma.data.shape[0], args.out))
    return 0


def _classifier_from_settings(s):
    return ChordClassifier(
        max_epochs=s.get("max-epochs", int, 100),
        patience=s.get("patience", int, 20),
        l2=s.get("l2", float, 1e-4),
        seed=s.get("seed", int, 0))


def _cmd_train_classifier(args):
    s = _Settings(args)
    if args.feature == "deep" and not args.model:
        raise UsageError("--feature deep needs --model")
    corpus = ev.prepare_corpus(_load_corpus(args.corpus))
    folds = ev.make_folds([ps.song_id for ps in corpus],
                          k=s.get("folds", int, 2),
                          seed=s.get("seed", int, 0),
                          groups=[ps.group for ps in corpus])
    train_ids, val_ids, _ = folds.rotation(s.get("rotation", int, 0))
    by_id = {ps.song_id: ps for ps in corpus}
    extractor = network.load_model(args.model) if args.model else None
    context = s.get("context", float, 0.1)
    if args.feature == "deep":
        context = 0.1
    X_tr, y_tr = ev._classifier_data([by_id[i] for i in train_ids],
                                     args.feature, context, extractor)
    X_val, y_val = ev._classifier_data([by_id[i] for i in val_ids],
                                       args.feature, context, extractor)
    clf = _classifier_from_settings(s)
    clf.fit(X_tr, y_tr, X_val=X_val, y_val=y_val)
    clf.save(args.out)
    best = max(h["val_metric"] for h in clf.history_)
    print("trained %d epochs, best validation frame accuracy %.4f; model "
          "saved to %s" % (len(clf.history_), best, args.out))
    return 0


def _cmd_evaluate(args):
    s = _Settings(args)
    corpus = ev.prepare_corpus(_load_corpus(args.corpus))
    folds = ev.make_folds([ps.song_id for ps in corpus],
                          k=s.get("folds", int, 2),
                          seed=s.get("seed", int, 0),
                          groups=[ps.group for ps in corpus])
    context = s.get("context", float, 0.1)
    extractor = _extractor_from_settings(s) if args.feature == "deep" else None
    result = ev.cross_validate(corpus, args.feature, context, folds,
                               extractor=extractor,
                               classifier=_classifier_from_settings(s))
    ev.write_results_csv(args.out, result)
    print("feature %s (context %g s): total WCSR %.4f over %d songs; "
          "results in %s" % (result.feature, result.context_seconds,
                             result.total_wcsr, len(result.scores), args.out))
    return 0


def _cmd_sweep_context(args):
    s = _Settings(args)
    corpus = ev.prepare_corpus(_load_corpus(args.corpus))
    folds = ev.make_folds([ps.song_id for ps in corpus],
                          k=s.get("folds", int, 2),
                          seed=s.get("seed", int, 0),
                          groups=[ps.group for ps in corpus])
    contexts = _parse_float_list(args.contexts)
    if not contexts:
        raise UsageError("--contexts must name at least one width")
    rotations = tuple(_parse_int_list(args.rotations)) if args.rotations \
        else (0,)
    rows = ev.sweep_context(corpus, args.feature, contexts, folds,
                            rotations=rotations,
                            extractor=_extractor_from_settings(s),
                            classifier=_classifier_from_settings(s))
    ev.write_sweep_csv(args.out, rows)
    for row in rows:
        print("context %5.2f s  rotation %d  validation WCSR %.4f"
              % (row["context_s"], row["rotation"], row["wcsr"]))
    return 0


def _saliency_units(model, text, symbol=None):
    if text is None or text == "all":
        return "all"
    if text == "template":
        if symbol is None:
            raise UsageError("--units template needs --chord")
        return np.nonzero(chord_template(symbol))[0]
    return _parse_int_list(text)


def _cmd_saliency(args):
    s = _Settings(args)
    model = network.load_model(args.model)
    if args.wav and args.corpus:
        raise UsageError("pass either --wav or --corpus, not both")
    if args.wav:
        if args.frame is None:
            raise UsageError("--wav mode needs --frame")
        clip = load_audio(args.wav)
        _, S_log = spectrogram_pipeline(clip)
        stacked = stack_context(S_log, (model.context_frames - 1) // 2)
        if not 0 <= args.frame < stacked.data.shape[0]:
            raise DataError("frame %d out of range (%d frames)"
                            % (args.frame, stacked.data.shape[0]))
        units = _saliency_units(model, args.units)
        sal = saliency.guided_backprop(model, stacked.data[args.frame], units)
    elif args.corpus:
        if not args.chord:
            raise UsageError("--corpus mode needs --chord")
        symbol = parse_chord(args.chord)
        units = _saliency_units(model, args.units or "template", symbol)
        limit = s.get("limit", int, 200)
        corpus = ev.prepare_corpus(_load_corpus(args.corpus))
        frames = []
        for ps in corpus:
            stacked = stack_context(ps.S_log, (model.context_frames - 1) // 2)
            for t in range(ps.n_frames):
                if len(frames) >= limit:
                    break
                seg_symbol = symbol_at(ps.ann, t / 10.0)
                if seg_symbol == symbol:
                    frames.append(stacked.data[t])
            if len(frames) >= limit:
                break
        if not frames:
            raise DataError("no frames labelled %s in the corpus"
                            % chord_to_string(symbol))
        # one shared unit selector, repeated per averaged frame
        selectors = units if isinstance(units, str) \
            else [units] * len(frames)
        sal = saliency.average_maps(model, np.array(frames), selectors)
    else:
        raise UsageError("need --wav or --corpus")
    formats.write_dcf(args.out, sal.reshape(1, -1), fps=10.0)
    print("wrote %d x %d saliency map to %s"
          % (sal.shape[0], sal.shape[1], args.out))
    return 0


def _cmd_render(args):
    data, _ = formats.read_dcf(args.input)
    kind = args.kind
    bands = args.bands or 178
    if kind == "auto":
        if data.shape[1] == 12:
            kind = "chroma"
        elif data.shape[0] == 1 and data.shape[1] % bands == 0:
            kind = "saliency"
        else:
            kind = "chroma"
    if kind == "saliency":
        if data.shape[0] != 1 or data.shape[1] % bands != 0:
            raise DataError("saliency input must be 1 x (frames * %d)"
                            % bands)
        grid = data[0].reshape(-1, bands)
        render.render_saliency(args.out, grid)
        h, w = grid.shape[1], grid.shape[0]
    else:
        render.render_chromagram(args.out, data)
        h, w = data.shape[1], data.shape[0]
    print("wrote %d x %d pixel %s image to %s" % (w, h, kind, args.out))
    return 0


def _format_report(results):
    song_sets = [frozenset(r.per_song()) for r in results]
    if len(set(song_sets)) != 1:
        raise DataError("result sets cover different song lists")
    lines = []
    lines.append("%-10s %-10s %8s %8s" % ("feature", "context", "WCSR",
                                          "song sd"))
    for r in results:
        per_song = list(r.per_song().values())
        lines.append("%-10s %8.2f s %8.4f %8.4f"
                     % (r.feature, r.context_seconds, r.total_wcsr,
                        float(np.std(per_song, ddof=1))
                        if len(per_song) > 1 else 0.0))
    lines.append("")
    songs = sorted(song_sets[0])
    for i in range(len(results)):
        for j in range(i + 1, len(results)):
            a = [results[i].per_song()[s] for s in songs]
            b = [results[j].per_song()[s] for s in songs]
            t, p = ev.paired_t_test(a, b)
            lines.append("paired t-test %s vs %s: t = %.4f, p = %.3g"
                         % (results[i].feature, results[j].feature, t, p))
    return "\n".join(lines) + "\n"


def _cmd_report(args):
    if len(args.csvs) < 2:
        raise UsageError("report needs at least 2 results CSVs")
    results = [ev.read_results_csv(path) for path in args.csvs]
    text = _format_report(results)
    sys.stdout.write(text)
    if args.out:
        formats.write_bytes_atomic(args.out, text.encode("utf-8"))
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "spectrogram": _cmd_spectrogram,
    "targets": _cmd_targets,
    "train-extractor": _cmd_train_extractor,
    "extract": _cmd_extract,
    "train-classifier": _cmd_train_classifier,
    "evaluate": _cmd_evaluate,
    "sweep-context": _cmd_sweep_context,
    "saliency": _cmd_saliency,
    "render": _cmd_render,
    "report": _cmd_report,
}


def run(argv):
    """Parse and dispatch. Returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 1
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print("usage error: %s" % exc, file=sys.stderr)
        return 1
    except SystemExit as exc:
        # argparse --help exits itself
        return int(exc.code or 0)
    except (DataError, FormatError, AudioError, ChordError, FileNotFoundError,
            NotADirectoryError, PermissionError, ValueError,
            FloatingPointError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
