"""End-to-end command tests, all run in-process through cli.run()."""

import math
import os

import numpy as np
import pytest

from deepchroma.audio import load_audio
from deepchroma.chords import (chord_to_string, frame_labels, frame_targets,
                               load_lab)
from deepchroma.cli import run
from deepchroma.evaluate import read_results_csv
from deepchroma.formats import read_dcf, read_dcl
from deepchroma.spectrogram import spectrogram_pipeline
from deepchroma.synth import load_manifest


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


@pytest.fixture(scope="module")
def corpus_dir(work):
    out = str(work / "corpus")
    code = run(["synth", "--out", out, "--songs", "6", "--seed", "3",
                "--length", "8", "--noise-amp", "0.3", "--majmin-only"])
    assert code == 0
    return out


@pytest.fixture(scope="module")
def song0(corpus_dir):
    return (os.path.join(corpus_dir, "song000.wav"),
            os.path.join(corpus_dir, "song000.lab"))


@pytest.fixture(scope="module")
def extractor_model(work, corpus_dir):
    path = str(work / "extractor.dcx")
    code = run(["train-extractor", "--corpus", corpus_dir, "--out", path,
                "--context-frames", "3", "--max-epochs", "2",
                "--patience", "5", "--seed", "0"])
    assert code == 0
    return path


@pytest.fixture(scope="module")
def spec_dcf(work, song0):
    wav, _ = song0
    path = str(work / "spec.dcf")
    assert run(["spectrogram", "--wav", wav, "--out", path]) == 0
    return path


@pytest.fixture(scope="module")
def deep_dcf(work, song0, extractor_model):
    wav, _ = song0
    path = str(work / "deep.dcf")
    assert run(["extract", "--model", extractor_model, "--wav", wav,
                "--out", path]) == 0
    return path


@pytest.fixture(scope="module")
def sal_dcf(work, song0, extractor_model):
    wav, _ = song0
    path = str(work / "sal.dcf")
    assert run(["saliency", "--model", extractor_model, "--wav", wav,
                "--frame", "5", "--out", path]) == 0
    return path


@pytest.fixture(scope="module")
def ideal_csv(work, corpus_dir):
    path = str(work / "ideal.csv")
    code = run(["evaluate", "--corpus", corpus_dir, "--feature", "ideal",
                "--out", path, "--folds", "2", "--seed", "0",
                "--max-epochs", "5"])
    assert code == 0
    return path


@pytest.fixture(scope="module")
def slog_csv(work, corpus_dir):
    path = str(work / "slog.csv")
    code = run(["evaluate", "--corpus", corpus_dir, "--feature", "slog",
                "--out", path, "--folds", "2", "--seed", "0",
                "--max-epochs", "5"])
    assert code == 0
    return path


class TestDispatch:
    def test_no_command_is_usage_error(self, capsys):
        assert run([]) == 1
        capsys.readouterr()

    def test_unknown_command(self, capsys):
        assert run(["frobnicate"]) == 1
        capsys.readouterr()

    def test_missing_required_flag(self, capsys):
        assert run(["spectrogram", "--out", "x.dcf"]) == 1
        capsys.readouterr()

    def test_bad_feature_choice(self, capsys, corpus_dir):
        assert run(["evaluate", "--corpus", corpus_dir, "--feature", "wlog",
                    "--out", "x.csv"]) == 1
        capsys.readouterr()

    def test_help_exits_zero(self, capsys):
        assert run(["--help"]) == 0
        assert run(["synth", "--help"]) == 0
        capsys.readouterr()

    def test_missing_input_file_is_data_error(self, work, capsys):
        assert run(["spectrogram", "--wav", str(work / "missing.wav"),
                    "--out", str(work / "x.dcf")]) == 2
        assert run(["render", "--in", str(work / "missing.dcf"),
                    "--out", str(work / "x.pgm")]) == 2
        assert run(["train-extractor", "--corpus", str(work / "nowhere"),
                    "--out", str(work / "m.dcx")]) == 2
        capsys.readouterr()


class TestSynth:
    def test_corpus_layout(self, corpus_dir):
        songs = load_manifest(os.path.join(corpus_dir, "manifest.txt"))
        assert len(songs) == 6
        for song in songs:
            assert os.path.exists(song.wav_path)
            assert os.path.exists(song.lab_path)
            assert song.duration == pytest.approx(8.0)

    def test_majmin_vocabulary(self, corpus_dir):
        songs = load_manifest(os.path.join(corpus_dir, "manifest.txt"))
        qualities = set()
        for song in songs:
            for seg in load_lab(song.lab_path).segments:
                qualities.add(seg.symbol.quality)
        assert qualities <= {"maj", "min", "N"}

    def test_rerun_is_byte_identical(self, work, corpus_dir, capsys):
        again = str(work / "corpus_again")
        assert run(["synth", "--out", again, "--songs", "6", "--seed", "3",
                    "--length", "8", "--noise-amp", "0.3",
                    "--majmin-only"]) == 0
        capsys.readouterr()
        for name in ("song000.wav", "song005.wav", "manifest.txt"):
            a = open(os.path.join(corpus_dir, name), "rb").read()
            b = open(os.path.join(again, name), "rb").read()
            assert a == b

    def test_config_file_precedence(self, work, capsys):
        cfg = work / "synth.cfg"
        cfg.write_text("songs = 3\nlength = 4.0\n# comment\n")
        out = str(work / "cfg_corpus")
        # --songs beats the config; length comes from the config
        assert run(["synth", "--out", out, "--songs", "1",
                    "--config", str(cfg)]) == 0
        capsys.readouterr()
        songs = load_manifest(os.path.join(out, "manifest.txt"))
        assert len(songs) == 1
        assert songs[0].duration == pytest.approx(4.0)

    def test_bad_config_line(self, work, capsys):
        cfg = work / "broken.cfg"
        cfg.write_text("no equals sign here\n")
        assert run(["synth", "--out", str(work / "never"),
                    "--config", str(cfg)]) == 1
        capsys.readouterr()


class TestSpectrogramAndTargets:
    def test_log_spectrogram(self, song0, spec_dcf):
        wav, _ = song0
        data, fps = read_dcf(spec_dcf)
        assert data.shape == (80, 178)
        assert fps == pytest.approx(10.0)
        _, S_log = spectrogram_pipeline(load_audio(wav))
        np.testing.assert_allclose(data, S_log.data.astype(np.float32),
                                   rtol=0, atol=0)

    def test_raw_spectrogram_differs(self, work, song0, spec_dcf, capsys):
        wav, _ = song0
        out = str(work / "spec_raw.dcf")
        assert run(["spectrogram", "--wav", wav, "--out", out,
                    "--raw"]) == 0
        capsys.readouterr()
        raw, _ = read_dcf(out)
        log, _ = read_dcf(spec_dcf)
        np.testing.assert_allclose(np.log1p(raw), log, atol=1e-5)

    def test_targets_default_frames(self, work, song0, capsys):
        _, lab = song0
        out = str(work / "targets.dcf")
        labels_out = str(work / "labels.dcl")
        assert run(["targets", "--lab", lab, "--out", out,
                    "--labels-out", labels_out]) == 0
        capsys.readouterr()
        ann = load_lab(lab)
        n = int(math.ceil(ann.end * 10.0))
        data, fps = read_dcf(out)
        assert data.shape == (n, 12)
        np.testing.assert_array_equal(
            data, frame_targets(ann, n).astype(np.float32))
        np.testing.assert_array_equal(read_dcl(labels_out),
                                      frame_labels(ann, n))

    def test_targets_frame_overrides(self, work, song0, capsys):
        wav, lab = song0
        out = str(work / "t17.dcf")
        assert run(["targets", "--lab", lab, "--out", out,
                    "--frames", "17"]) == 0
        assert read_dcf(out)[0].shape == (17, 12)
        out2 = str(work / "twav.dcf")
        assert run(["targets", "--lab", lab, "--out", out2,
                    "--wav", wav]) == 0
        capsys.readouterr()
        n = int(math.ceil(len(load_audio(wav).samples) / 4410))
        assert read_dcf(out2)[0].shape == (n, 12)


class TestTrainAndExtract:
    def test_extractor_model_loads(self, extractor_model):
        from deepchroma.network import load_model
        model = load_model(extractor_model)
        assert model.context_frames == 3
        assert model.input_dim == 3 * 178
        assert [l.out_dim for l in model.layers] == [512, 512, 512, 12]

    def test_extract_writes_chromagram(self, deep_dcf):
        data, fps = read_dcf(deep_dcf)
        assert data.shape == (80, 12)
        assert fps == pytest.approx(10.0)
        assert np.all(data >= 0.0) and np.all(data <= 1.0)

    def test_train_classifier_ideal(self, work, corpus_dir, capsys):
        out = str(work / "clf.dcx")
        assert run(["train-classifier", "--corpus", corpus_dir,
                    "--feature", "ideal", "--out", out,
                    "--max-epochs", "3", "--seed", "0"]) == 0
        stdout = capsys.readouterr().out
        assert "saved to" in stdout
        from deepchroma.network import load_model
        clf = load_model(out)
        assert clf.layers[-1].out_dim == 25

    def test_train_classifier_deep_needs_model(self, corpus_dir, work,
                                               capsys):
        assert run(["train-classifier", "--corpus", corpus_dir,
                    "--feature", "deep",
                    "--out", str(work / "x.dcx")]) == 1
        capsys.readouterr()


class TestEvaluateAndReport:
    def test_evaluate_csv(self, ideal_csv, capsys):
        res = read_results_csv(ideal_csv)
        assert res.feature == "ideal"
        assert len(res.scores) == 6
        assert 0.0 <= res.total_wcsr <= 1.0

    def test_evaluate_stdout(self, work, corpus_dir, capsys):
        out = str(work / "c.csv")
        assert run(["evaluate", "--corpus", corpus_dir, "--feature", "c",
                    "--out", out, "--folds", "2", "--seed", "0",
                    "--max-epochs", "5"]) == 0
        stdout = capsys.readouterr().out
        assert "total WCSR" in stdout
        assert "feature c" in stdout

    def test_evaluate_rerun_byte_identical(self, work, corpus_dir, ideal_csv,
                                           capsys):
        again = str(work / "ideal_again.csv")
        assert run(["evaluate", "--corpus", corpus_dir, "--feature", "ideal",
                    "--out", again, "--folds", "2", "--seed", "0",
                    "--max-epochs", "5"]) == 0
        capsys.readouterr()
        assert open(ideal_csv, "rb").read() == open(again, "rb").read()

    def test_report_table_and_t_tests(self, work, ideal_csv, slog_csv,
                                      capsys):
        out = str(work / "report.txt")
        assert run(["report", ideal_csv, slog_csv, "--out", out]) == 0
        stdout = capsys.readouterr().out
        assert "ideal" in stdout and "slog" in stdout
        assert "paired t-test ideal vs slog" in stdout
        assert open(out).read() == stdout

    def test_report_needs_two_csvs(self, ideal_csv, capsys):
        assert run(["report", ideal_csv]) == 1
        capsys.readouterr()

    def test_report_rejects_mismatched_songs(self, work, ideal_csv, capsys):
        other = work / "other.csv"
        other.write_text(
            "song,feature,context_s,fold,correct_s,mappable_s,wcsr\n"
            "zzz,c,0.1,0,1.000000,2.000000,0.500000\n")
        assert run(["report", ideal_csv, str(other)]) == 2
        capsys.readouterr()


class TestSweep:
    def test_sweep_rows_and_csv(self, work, corpus_dir, capsys):
        out = str(work / "sweep.csv")
        assert run(["sweep-context", "--corpus", corpus_dir,
                    "--feature", "slog", "--contexts", "0.1,0.3",
                    "--out", out, "--folds", "2", "--rotations", "0",
                    "--seed", "0", "--max-epochs", "3"]) == 0
        stdout = capsys.readouterr().out
        assert stdout.count("validation WCSR") == 2
        lines = open(out).read().splitlines()
        assert lines[0] == \
            "feature,context_s,rotation,correct_s,mappable_s,wcsr"
        assert len(lines) == 3
        assert lines[1].startswith("slog,0.1,0,")
        assert lines[2].startswith("slog,0.3,0,")

    def test_sweep_empty_contexts(self, work, corpus_dir, capsys):
        assert run(["sweep-context", "--corpus", corpus_dir,
                    "--feature", "slog", "--contexts", ",",
                    "--out", str(work / "never.csv")]) == 1
        capsys.readouterr()


class TestSaliency:
    def test_wav_frame_mode(self, sal_dcf):
        data, _ = read_dcf(sal_dcf)
        assert data.shape == (1, 3 * 178)

    def test_unit_subset(self, work, song0, extractor_model, capsys):
        wav, _ = song0
        out = str(work / "sal_units.dcf")
        assert run(["saliency", "--model", extractor_model, "--wav", wav,
                    "--frame", "5", "--units", "0,4,7", "--out", out]) == 0
        capsys.readouterr()
        assert read_dcf(out)[0].shape == (1, 3 * 178)

    def test_frame_out_of_range(self, work, song0, extractor_model, capsys):
        wav, _ = song0
        assert run(["saliency", "--model", extractor_model, "--wav", wav,
                    "--frame", "99999", "--out", str(work / "n.dcf")]) == 2
        capsys.readouterr()

    def test_wav_mode_needs_frame(self, work, song0, extractor_model,
                                  capsys):
        wav, _ = song0
        assert run(["saliency", "--model", extractor_model, "--wav", wav,
                    "--out", str(work / "n.dcf")]) == 1
        capsys.readouterr()

    def test_corpus_average_mode(self, work, corpus_dir, extractor_model,
                                 capsys):
        # average over a chord that is guaranteed present
        chord = None
        for song in load_manifest(os.path.join(corpus_dir, "manifest.txt")):
            for seg in load_lab(song.lab_path).segments:
                if seg.symbol.root_pc is not None:
                    chord = chord_to_string(seg.symbol)
                    break
            if chord:
                break
        assert chord is not None
        out = str(work / "avg.dcf")
        assert run(["saliency", "--model", extractor_model,
                    "--corpus", corpus_dir, "--chord", chord,
                    "--limit", "10", "--out", out]) == 0
        capsys.readouterr()
        assert read_dcf(out)[0].shape == (1, 3 * 178)

    def test_corpus_mode_unseen_chord(self, work, corpus_dir,
                                      extractor_model, capsys):
        assert run(["saliency", "--model", extractor_model,
                    "--corpus", corpus_dir, "--chord", "C:min7",
                    "--out", str(work / "n.dcf")]) == 2
        capsys.readouterr()

    def test_template_units_need_chord(self, work, song0, extractor_model,
                                       capsys):
        wav, _ = song0
        assert run(["saliency", "--model", extractor_model, "--wav", wav,
                    "--frame", "3", "--units", "template",
                    "--out", str(work / "n.dcf")]) == 1
        capsys.readouterr()


class TestRender:
    def test_auto_chroma_from_12_columns(self, work, deep_dcf, capsys):
        out = str(work / "deep.pgm")
        assert run(["render", "--in", deep_dcf, "--out", out]) == 0
        stdout = capsys.readouterr().out
        assert "chroma" in stdout
        raw = open(out, "rb").read()
        assert raw.startswith(b"P5\n80 12\n255\n")

    def test_auto_saliency_from_flat_row(self, work, sal_dcf, capsys):
        out = str(work / "sal.ppm")
        assert run(["render", "--in", sal_dcf, "--out", out]) == 0
        stdout = capsys.readouterr().out
        assert "saliency" in stdout
        assert open(out, "rb").read().startswith(b"P6\n3 178\n255\n")

    def test_wide_matrix_defaults_to_chroma(self, work, spec_dcf, capsys):
        out = str(work / "spec.pgm")
        assert run(["render", "--in", spec_dcf, "--out", out]) == 0
        capsys.readouterr()
        assert open(out, "rb").read().startswith(b"P5\n80 178\n255\n")

    def test_explicit_saliency_wrong_shape(self, work, spec_dcf, capsys):
        assert run(["render", "--in", spec_dcf,
                    "--out", str(work / "never.ppm"),
                    "--kind", "saliency"]) == 2
        capsys.readouterr()
