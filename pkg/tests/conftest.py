"""Shared fixtures: tiny vocabularies, synthetic corpora, and one small
trained model reused by the generator/CLI tests (training it once keeps the
suite fast)."""

from __future__ import annotations

import pytest

from mailmasq import corpus as cp
from mailmasq import lstm_lm as lm
from mailmasq import synthetic


def records_from(raw: list[dict]) -> list[cp.EmailRecord]:
    return [cp.EmailRecord(r["id"], r["body"], r["label"], r["source"]) for r in raw]


# One line per acceptance criterion, printed after the run so the verdicts
# survive pytest's output capture.
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log() -> list[str]:
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def tiny_vocab() -> cp.Vocabulary:
    return cp.Vocabulary(list(cp.RESERVED_TOKENS) + ["a", "b", "c"])


@pytest.fixture(scope="session")
def legit_pre() -> list[cp.PreprocessedEmail]:
    records = records_from(synthetic.make_corpus("legitimate", 80, seed=101))
    return [cp.preprocess(rec) for rec in records]


@pytest.fixture(scope="session")
def phish_pre() -> list[cp.PreprocessedEmail]:
    records = records_from(synthetic.make_corpus("phishing", 60, seed=102))
    return [cp.preprocess(rec) for rec in records]


@pytest.fixture(scope="session")
def trained_tiny(legit_pre):
    """A small trained model: desk-profile hidden size but few epochs, enough
    for sampling to be non-degenerate."""
    vocab = cp.build_vocab(legit_pre)
    mix = cp.make_mix(legit_pre, [], 0.0, seed=7)
    config = lm.LmConfig(hidden=64, embed_dim=32, epochs=8, seed=7)
    result = lm.train(legit_pre, mix, vocab, config)
    return result.params, config, vocab
