"""Learned chroma features for chord recognition.

The package turns audio into logarithmic quarter-tone spectrograms,
trains a multi-layer perceptron to map spectral context windows onto
chord-template chroma targets, compares the learned features against
folded-chroma baselines with a linear chord classifier under WCSR, and
explains the trained network with guided-backprop saliency maps.
"""

from .audio import AudioClip, load_audio, resample, save_wav
from .chords import (ChordAnnotation, ChordSegment, ChordSymbol, NO_CHORD,
                     chord_template, chord_to_string, frame_labels,
                     frame_targets, load_lab, parse_chord, parse_lab,
                     reduce_majmin, symbol_at)
from .estimators import ChordClassifier, DeepChromaExtractor
from .evaluate import (cross_validate, make_folds, paired_t_test,
                       prepare_corpus, sweep_context, wcsr)
from .features import (Chromagram, FeatureMatrix, deep_chroma, fold_chroma,
                       fold_chroma_weighted_log, ideal_chroma,
                       stack_for_classifier)
from .formats import (EXCLUDED, read_dcf, read_dcl, read_dcx, write_dcf,
                      write_dcl, write_dcx)
from .network import (AdamState, DenseLayer, MLPModel, TrainConfig, adam_step,
                      backward, bce_loss, forward, init_mlp, load_model,
                      save_model, softmax_ce_loss, train)
from .saliency import (average_maps, guided_backprop, sum_over_freq_signed,
                       sum_over_time)
from .spectrogram import (MagnitudeSpectrogram, QuarterToneFilterbank,
                          QuarterToneSpectrogram, SuperFrameSequence,
                          apply_filterbank, build_filterbank, log_compress,
                          spectrogram_pipeline, stack_context, stft_magnitude)
from .synth import SynthConfig, gen_corpus, gen_song, load_manifest

__version__ = "0.1.0"
