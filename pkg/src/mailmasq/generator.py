"""Synthetic email generation from a trained language model.

Sampling walks the network one word at a time: feed the last token, apply
temperature softmax to the logits, draw the next token (or take the argmax in
greedy mode), feed it back.  <UNK> is masked out of every sampling
distribution so generated bodies never contain it.  All draws are seeded, so
a sample set regenerates byte-identically from its seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import RESERVED_TOKENS, TAG_EOS, Vocabulary
from .errors import InputError
from .lstm_lm import LmConfig, forward, zero_state
from .numerics import Params, RngStream, derive_seed, softmax_temp


@dataclass
class SampleSpec:
    temperature: float = 1.0
    n_words: int = 40
    seed: int = 0
    prime: str = TAG_EOS
    greedy: bool = False
    stop_at_eos: bool = False

    def __post_init__(self) -> None:
        if not self.greedy and not (0.0 < self.temperature <= 1.0):
            raise InputError(f"temperature must be in (0, 1.0], got {self.temperature}")
        if self.n_words < 1:
            raise InputError(f"n_words must be >= 1, got {self.n_words}")


@dataclass
class GeneratedEmail:
    tokens: list[str]
    rendered: str
    spec: SampleSpec
    model_id: str = ""


@dataclass
class SampleSetSpec:
    """Counts per temperature plus the shared length and seed.

    The usual evaluation protocol is {0.2: 2, 0.5: 10, 0.7: 5, 1.0: 8} —
    25 emails total.
    """

    temps: dict[float, int] = field(default_factory=lambda: {0.2: 2, 0.5: 10, 0.7: 5, 1.0: 8})
    seed: int = 0
    n_words: int = 40

    def __post_init__(self) -> None:
        if not self.temps:
            raise InputError("sample set needs at least one temperature")
        for temp, count in self.temps.items():
            if not (0.0 < temp <= 1.0):
                raise InputError(f"temperature must be in (0, 1.0], got {temp}")
            if count < 1:
                raise InputError(f"sample count must be positive, got {count} at temp {temp}")

    @property
    def total(self) -> int:
        return sum(self.temps.values())


def next_word_dist(
    params: Params,
    config: LmConfig,
    state,
    last_token: int,
    temperature: float,
):
    """One decoding step: temperature-softmax distribution over the next word
    and the advanced LSTM state."""
    logits, new_state, _ = forward(params, config, [last_token], state)
    return softmax_temp(logits[0], temperature), new_state


def generate(
    params: Params,
    config: LmConfig,
    vocab: Vocabulary,
    spec: SampleSpec,
    model_id: str = "",
) -> GeneratedEmail:
    """Sample one email body of spec.n_words tokens (fewer only when
    stop_at_eos is set and <EOS> is drawn; the terminator itself is dropped).

    Greedy mode takes the argmax instead of drawing (ties resolve to the
    lowest index); temperature is ignored in that case.
    """
    if spec.prime not in vocab:
        raise InputError(f"prime token {spec.prime!r} is not in the vocabulary")
    rng = RngStream(derive_seed(spec.seed, "generate", 0))
    unk = vocab.unk_index
    temperature = 1.0 if spec.greedy else spec.temperature
    state = zero_state(config, 1)
    last = vocab.token_to_index[spec.prime]
    tokens: list[str] = []
    for _ in range(spec.n_words):
        dist, state = next_word_dist(params, config, state, last, temperature)
        dist = dist.copy()
        dist[unk] = 0.0
        dist /= dist.sum()
        nxt = int(np.argmax(dist)) if spec.greedy else rng.categorical(dist)
        if spec.stop_at_eos and vocab.index_to_token[nxt] == TAG_EOS:
            break
        tokens.append(vocab.index_to_token[nxt])
        last = nxt
    return GeneratedEmail(tokens, " ".join(tokens), spec, model_id)


def generate_sample_set(
    params: Params,
    config: LmConfig,
    vocab: Vocabulary,
    set_spec: SampleSetSpec,
    model_id: str = "",
) -> list[GeneratedEmail]:
    """Generate the requested count of emails at each temperature.

    Temperatures are processed in ascending order and each sample gets its
    own seed derived from (set seed, "sample", running index), so the output
    is independent of dict insertion order and reproducible per sample.
    """
    out: list[GeneratedEmail] = []
    index = 0
    for temp in sorted(set_spec.temps):
        for _ in range(set_spec.temps[temp]):
            spec = SampleSpec(
                temperature=temp,
                n_words=set_spec.n_words,
                seed=derive_seed(set_spec.seed, "sample", index),
            )
            out.append(generate(params, config, vocab, spec, model_id))
            index += 1
    return out


def _max_block_run(tokens: list[str], period: int) -> int:
    """Longest chain of consecutive repeats of any length-`period` block,
    checked at every phase offset."""
    best = 0
    n = len(tokens)
    for offset in range(period):
        blocks = [
            tuple(tokens[i : i + period])
            for i in range(offset, n - period + 1, period)
        ]
        run = 0
        for j, block in enumerate(blocks):
            run = run + 1 if j > 0 and block == blocks[j - 1] else 1
            best = max(best, run)
    return best


def diagnostics(email, vocab: Vocabulary | None = None) -> dict:
    """Repetition and tag-placement report for one email.

    max_consecutive_repeat is the longest consecutive repetition of any token
    block of length 1 to 4 — length 1 catches stuttered words, 2 and 4 catch
    the alternating tag-pair loops that low-temperature sampling falls into.
    repetition_flag is set at a run of 4 or more.  link_positions gives each
    <LINK>'s index as a fraction of body length; oov_rate is the share of
    tokens outside `vocab` (0.0 when no vocabulary is supplied).
    """
    tokens = list(email.tokens) if hasattr(email, "tokens") else list(email)
    max_repeat = max((_max_block_run(tokens, p) for p in (1, 2, 3, 4)), default=0) if tokens else 0
    tag_histogram = {tag: 0 for tag in RESERVED_TOKENS}
    for t in tokens:
        if t in tag_histogram:
            tag_histogram[t] += 1
    link_positions = [i / len(tokens) for i, t in enumerate(tokens) if t == "<LINK>"]
    if vocab is None or not tokens:
        oov_rate = 0.0
    else:
        oov_rate = sum(1 for t in tokens if t not in vocab) / len(tokens)
    return {
        "max_consecutive_repeat": max_repeat,
        "repetition_flag": max_repeat >= 4,
        "tag_histogram": tag_histogram,
        "link_positions": link_positions,
        "oov_rate": oov_rate,
    }
