"""Shared fixtures plus a visible summary for the acceptance criteria."""

import re

import pytest

from deepchroma.synth import SynthConfig, gen_corpus

_CRITERION_RE = re.compile(r"test_acceptance\.py::test_criterion_(\d+)")
_criterion_results = {}

_CRITERION_NAMES = {
    1: "structural constants (178 bands, 2670 dims, 10 fps)",
    2: "gradient check vs central finite differences",
    3: "first ADAM step identity",
    4: "loss anchors (ln 2, ln 25)",
    5: "oracle equivalence (wcsr, folds, saliency sums)",
    6: "ideal-chroma ceiling (WCSR >= 0.95)",
    7: "feature ordering (deep vs baselines)",
    8: "context sweep (1.5 s beats 0.1 s on validation)",
    9: "byte-identical retraining and evaluation",
    10: "guided backprop micro oracles",
}


def pytest_runtest_logreport(report):
    m = _CRITERION_RE.search(report.nodeid)
    if not m:
        return
    n = int(m.group(1))
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _criterion_results[n] = report


def pytest_terminal_summary(terminalreporter):
    if not _criterion_results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(_criterion_results):
        rep = _criterion_results[n]
        word = "PASS" if rep.passed else "FAIL"
        terminalreporter.write_line(
            "[%s] criterion %2d: %s (%.1f s)"
            % (word, n, _CRITERION_NAMES.get(n, "?"), rep.duration))


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """Six short songs, noise kept mild so everything trains quickly."""
    out = tmp_path_factory.mktemp("tiny_corpus")
    cfg = SynthConfig(seed=3, n_songs=6, song_length=8.0,
                      vocabulary={"maj": 4.0, "min": 4.0, "N": 1.0},
                      noise_rate=0.5, noise_amp=0.3)
    songs = gen_corpus(cfg, str(out))
    return str(out), songs
