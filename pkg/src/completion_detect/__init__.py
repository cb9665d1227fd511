"""Localise the moment of action completion in per-frame feature sequences.

Two temporal models label every frame as pre- or post-completion: a
supervised two-state Gaussian HMM decoded with Viterbi (usually on
PCA-reduced features) and a single-layer LSTM with a softmax head. The
metrics module scores them per frame and by the signed shift between
predicted and annotated completion frames.
"""

from .core import (
    POST,
    PRE,
    CompletionLabel,
    Dataset,
    FeatureSequence,
    LabeledSequence,
    SequenceMeta,
    derive_labels,
    filter_complete,
    load_dataset,
    loso_splits,
    save_dataset,
)
from .hmm import CompletionHmm, GaussianEmission, decode_completion, train_hmm, viterbi
from .lstm import LstmModel, TrainConfig, lstm_forward, lstm_gradients, lstm_predict, train_lstm
from .metrics import (
    CompletionCurve,
    CompletionShift,
    FrameMetrics,
    completion_shift,
    cumulative_curve,
    frame_metrics,
    summarize,
)
from .pca import PcaModel, fit_pca
from .synth import SynthConfig, generate

__version__ = "0.1.0"
