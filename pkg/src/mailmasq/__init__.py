"""mailmasq: generate synthetic emails with a word-level LSTM and measure how
well bag-of-words detectors hold up against them."""

__version__ = "0.1.0"

from .corpus import (  # noqa: F401
    CorpusStats,
    EmailRecord,
    PreprocessedEmail,
    TrainingMix,
    Vocabulary,
    build_vocab,
    corpus_stats,
    filter_corpus,
    load_corpus,
    make_mix,
    preprocess,
)
from .detector import run_detection_experiment  # noqa: F401
from .errors import CheckpointError, InputError  # noqa: F401
from .generator import SampleSetSpec, SampleSpec, generate, generate_sample_set  # noqa: F401
from .lstm_lm import LmConfig, load_checkpoint, perplexity, save_checkpoint, train  # noqa: F401
