"""Email corpus handling: ingestion, filtering, preprocessing, vocabulary, mixing.

The preprocessing pipeline normalizes raw email bodies into flat token lists:
URLs, email addresses, and named entities collapse into the reserved tags
<LINK>, <EID>, <NET>; a fixed set of special characters is deleted; everything
except reserved tags is lowercased.  Tokens are whitespace-delimited
throughout, so every operation downstream of `preprocess` works on
`list[str]`.
"""

from __future__ import annotations

import json
import re
import warnings
from collections import Counter
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

from .errors import InputError
from .numerics import RngStream, derive_seed

LABELS = ("legitimate", "phishing", "generated")

# Reserved vocabulary tokens, in index order. <NME> is accepted on input as a
# legacy alias of <NET> and never appears in outputs.
TAG_LINK = "<LINK>"
TAG_EID = "<EID>"
TAG_NET = "<NET>"
TAG_UNK = "<UNK>"
TAG_EOS = "<EOS>"
RESERVED_TOKENS = (TAG_LINK, TAG_EID, TAG_NET, TAG_UNK, TAG_EOS)
_NET_ALIAS = "<NME>"
_INPUT_TAGS = frozenset(RESERVED_TOKENS) | {_NET_ALIAS}

# Characters deleted outright during preprocessing (no whitespace inserted).
REMOVE_CHARS = "@#$%.,;:!?\"'()"
_REMOVE_TABLE = str.maketrans("", "", REMOVE_CHARS)

_URL_RE = re.compile(r"(?:[A-Za-z][A-Za-z0-9+.-]*://\S+|www\.\S+)")
_EMAIL_CORE_RE = re.compile(r"^[^@\s]+@[^@\s]+\.[^@\s]+$")
_MARKUP_RE = re.compile(r"<[^<>]*>")
_EDGE_PUNCT = "\"'(),.;:!?<>[]{}"
_TAG_EDGE_PUNCT = "\"'(),.;:!?"

# 150 common English function words; an email where fewer than 5% of tokens
# land in this set (and which has at least 20 tokens) is treated as
# non-English and filtered out.
FUNCTION_WORDS = frozenset(
    """
    a about above after again against all also am an and any are as at be
    because been before being below between both but by can cannot could did
    do does doing down during each either else ever every few for from
    further had has have having he her here hers herself him himself his how
    however i if in into is it its itself just may me might more most much
    must my myself neither no none nor not nothing now of off on once only
    onto or other our ours ourselves out over own per shall she should since
    so some something such than that the their theirs them themselves then
    there these they this those through to too under until up upon us very
    was we were what when where whether which while who whom why will with
    within without would yet you your yours yourself yourselves
    """.split()
)

# Small gazetteer of organization/person names matched case-insensitively by
# the heuristic named-entity pass.  Covers the corporate corpora this tool is
# typically pointed at plus a few common first names.
GAZETTEER = frozenset(
    """
    enron paypal ebay amazon microsoft google apple citibank chase wellsfargo
    visa mastercard irs fedex ups dhl netflix adobe oracle intel cisco
    john sarah michael jennifer david susan robert karen james linda kenneth
    """.split()
)


@dataclass
class EmailRecord:
    """One raw email: stable id, body text, label, and source name."""

    record_id: str
    body: str
    label: str
    source: str


@dataclass
class PreprocessedEmail:
    record_id: str
    tokens: list[str]
    tag_counts: dict[str, int]


@dataclass
class CorpusStats:
    count: int
    avg_length: float
    avg_vocab: float


@dataclass
class TrainingMix:
    """Ids selected for a language-model training run at a given phishing fraction."""

    legit_ids: list[str]
    phish_ids: list[str]
    fraction: float
    seed: int


@dataclass
class Vocabulary:
    """Bidirectional token/index mapping with the reserved tags at indices 0-4."""

    index_to_token: list[str]
    token_to_index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if tuple(self.index_to_token[:5]) != RESERVED_TOKENS:
            raise ValueError(f"vocabulary must start with {RESERVED_TOKENS}")
        self.token_to_index = {tok: i for i, tok in enumerate(self.index_to_token)}
        if len(self.token_to_index) != len(self.index_to_token):
            dupes = [t for t, c in Counter(self.index_to_token).items() if c > 1]
            raise ValueError(f"duplicate vocabulary tokens: {dupes}")

    @property
    def size(self) -> int:
        return len(self.index_to_token)

    @property
    def unk_index(self) -> int:
        return self.token_to_index[TAG_UNK]

    @property
    def eos_index(self) -> int:
        return self.token_to_index[TAG_EOS]

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_index

    def encode_token(self, token: str) -> int:
        return self.token_to_index.get(token, self.unk_index)

    def encode(self, tokens: list[str]) -> list[int]:
        unk = self.unk_index
        t2i = self.token_to_index
        return [t2i.get(tok, unk) for tok in tokens]

    def decode(self, indices: list[int]) -> list[str]:
        return [self.index_to_token[i] for i in indices]


def _validate_label(label: str) -> str:
    if label not in LABELS:
        raise InputError(f"unknown label {label!r}; expected one of {LABELS}")
    return label


def load_corpus(path: str | Path, label: str, source: str) -> list[EmailRecord]:
    """Load emails from a JSONL file or a directory of .txt files.

    JSONL lines must carry a "body" field; "id", "label", and "source" are
    optional and default to the record position, `label`, and `source`.
    Directory mode reads *.txt files in name order, one email per file, with
    the file stem as id.
    """
    _validate_label(label)
    p = Path(path)
    if p.is_dir():
        records = _load_dir(p, label, source)
    elif p.is_file():
        records = _load_jsonl(p, label, source)
    else:
        raise InputError(f"corpus path does not exist: {p}")
    seen: set[str] = set()
    for rec in records:
        if rec.record_id in seen:
            raise InputError(f"duplicate record id {rec.record_id!r} in {p}")
        seen.add(rec.record_id)
    if not records:
        warnings.warn(f"no emails loaded from {p}", stacklevel=2)
    return records


def _load_dir(p: Path, label: str, source: str) -> list[EmailRecord]:
    records = []
    for f in sorted(p.glob("*.txt")):
        body = f.read_text(encoding="utf-8", errors="replace")
        if not body.strip():
            warnings.warn(f"skipping empty email file {f}", stacklevel=3)
            continue
        records.append(EmailRecord(f.stem, body, label, source))
    return records


def _load_jsonl(p: Path, label: str, source: str) -> list[EmailRecord]:
    records = []
    with open(p, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InputError(f"{p}:{lineno}: malformed JSON record: {exc}") from exc
            if not isinstance(obj, dict) or not str(obj.get("body", "")).strip():
                raise InputError(f"{p}:{lineno}: record has no usable 'body' field")
            rec_label = obj.get("label", label)
            _validate_label(rec_label)
            records.append(
                EmailRecord(
                    record_id=str(obj.get("id", f"{p.stem}-{lineno:06d}")),
                    body=str(obj["body"]),
                    label=rec_label,
                    source=str(obj.get("source", source)),
                )
            )
    return records


def _strip_edge_punct(token: str) -> str:
    return token.strip(_EDGE_PUNCT)


def _tag_core(token: str) -> str:
    """Strip quote/comma-style edge punctuation but keep angle brackets, so
    reserved tags survive adjacent punctuation (e.g. '<LINK>,' -> '<LINK>')."""
    return token.strip(_TAG_EDGE_PUNCT)


def _is_html_dominated(body: str) -> bool:
    """True when markup swamps the text: >30% of tokens contain angle-bracket
    markup, or markup characters outweigh half the remaining text."""
    tokens = body.split()
    if not tokens:
        return False
    markup_tokens = sum(
        1 for t in tokens if ("<" in t or ">" in t) and _tag_core(t) not in _INPUT_TAGS
    )
    if markup_tokens / len(tokens) > 0.30:
        return True
    markup_chars = sum(
        len(m.group(0)) for m in _MARKUP_RE.finditer(body) if m.group(0) not in _INPUT_TAGS
    )
    text_chars = len(body) - markup_chars
    if markup_chars == 0:
        return False
    return text_chars <= 0 or markup_chars / text_chars > 0.5


def _is_non_english(body: str) -> bool:
    """True when fewer than 5% of a >=20-token body are English function words."""
    tokens = [_strip_edge_punct(t).lower() for t in body.split()]
    tokens = [t for t in tokens if t]
    if len(tokens) < 20:
        return False
    hits = sum(1 for t in tokens if t in FUNCTION_WORDS)
    return hits / len(tokens) < 0.05


def filter_corpus(
    records: list[EmailRecord],
) -> tuple[list[EmailRecord], list[tuple[str, str]]]:
    """Drop HTML-dominated and non-English emails.

    Returns the kept records (original order preserved) and a list of
    (record_id, reason) pairs for the dropped ones.
    """
    kept: list[EmailRecord] = []
    dropped: list[tuple[str, str]] = []
    for rec in records:
        if _is_html_dominated(rec.body):
            dropped.append((rec.record_id, "html_dominated"))
        elif _is_non_english(rec.body):
            dropped.append((rec.record_id, "non_english"))
        else:
            kept.append(rec)
    return kept, dropped


def _substitute_urls(text: str) -> str:
    return _URL_RE.sub(TAG_LINK, text)


def _substitute_emails(text: str) -> str:
    out = []
    for token in text.split():
        core = _strip_edge_punct(token)
        if core.count("@") == 1 and _EMAIL_CORE_RE.match(core):
            out.append(TAG_EID)
        else:
            out.append(token)
    return " ".join(out)


def _apply_entity_spans(body: str, spans: list[tuple[int, int]]) -> str:
    """Replace annotated [start, end) character spans with <NET>, right to left."""
    n = len(body)
    ordered = sorted(spans, key=lambda s: s[0])
    prev_end = -1
    for start, end in ordered:
        if not (0 <= start < end <= n):
            raise ValueError(f"entity span ({start}, {end}) out of bounds for body of length {n}")
        if start < prev_end:
            raise ValueError(f"overlapping entity span ({start}, {end})")
        prev_end = end
    out = body
    for start, end in reversed(ordered):
        out = out[:start] + f" {TAG_NET} " + out[end:]
    return out


def _substitute_entities_heuristic(text: str) -> str:
    """Tag likely named entities: capitalized non-sentence-initial alphabetic
    words that are not function words, plus case-insensitive gazetteer hits."""
    tokens = text.split()
    sentence_initial = [True] * len(tokens)
    for i in range(1, len(tokens)):
        sentence_initial[i] = tokens[i - 1].rstrip("\"')").endswith((".", "!", "?"))
    out = []
    for i, token in enumerate(tokens):
        if _tag_core(token) in _INPUT_TAGS:
            out.append(token)
            continue
        core = _strip_edge_punct(token)
        if not core:
            out.append(token)
            continue
        if core.lower() in GAZETTEER:
            out.append(TAG_NET)
            continue
        if (
            not sentence_initial[i]
            and core.isalpha()
            and len(core) >= 2
            and core[0].isupper()
            and core.lower() not in FUNCTION_WORDS
        ):
            out.append(TAG_NET)
            continue
        out.append(token)
    return " ".join(out)


def preprocess(
    record: EmailRecord,
    entity_spans: list[tuple[int, int]] | None = None,
    ner: str = "auto",
) -> PreprocessedEmail:
    """Normalize one email body into a token list.

    Substitution order: URLs -> <LINK>, addresses -> <EID>, named entities ->
    <NET> (annotated character spans when provided, else the heuristic pass),
    then deletion of special characters, whitespace tokenization, and
    lowercasing of everything except reserved tags.

    `ner` selects the entity pass: "auto" uses spans when given, "spans"
    requires them, "heuristic" forces the heuristic, "off" skips entities.
    """
    if ner not in ("auto", "spans", "heuristic", "off"):
        raise InputError(f"unknown ner mode {ner!r}")
    body = record.body.replace(_NET_ALIAS, TAG_NET)
    if ner == "spans" and entity_spans is None:
        raise InputError(f"ner='spans' but record {record.record_id!r} has no entity spans")
    if entity_spans and ner in ("auto", "spans"):
        body = _apply_entity_spans(body, entity_spans)
    body = _substitute_urls(body)
    body = _substitute_emails(body)
    if ner == "heuristic" or (ner == "auto" and not entity_spans):
        body = _substitute_entities_heuristic(body)
    body = body.translate(_REMOVE_TABLE)
    tokens = [t if t in RESERVED_TOKENS else t.lower() for t in body.split()]
    tag_counts = {tag: 0 for tag in (TAG_LINK, TAG_EID, TAG_NET)}
    for t in tokens:
        if t in tag_counts:
            tag_counts[t] += 1
    return PreprocessedEmail(record.record_id, tokens, tag_counts)


def build_vocab(emails: list[PreprocessedEmail], min_count: int = 1) -> Vocabulary:
    """Build a vocabulary: reserved tags first, then tokens with frequency >=
    min_count ordered by descending frequency (ties alphabetically)."""
    if not emails:
        raise InputError("cannot build a vocabulary from zero emails")
    if min_count < 1:
        raise InputError(f"min_count must be >= 1, got {min_count}")
    counts: Counter[str] = Counter()
    for em in emails:
        counts.update(t for t in em.tokens if t not in RESERVED_TOKENS)
    ranked = sorted(
        (tok for tok, c in counts.items() if c >= min_count),
        key=lambda tok: (-counts[tok], tok),
    )
    return Vocabulary(list(RESERVED_TOKENS) + ranked)


def corpus_stats(emails: list[PreprocessedEmail]) -> CorpusStats:
    """Count, mean token length, and mean distinct-token count per email."""
    if not emails:
        return CorpusStats(0, 0.0, 0.0)
    n = len(emails)
    total_len = sum(len(em.tokens) for em in emails)
    total_vocab = sum(len(set(em.tokens)) for em in emails)
    return CorpusStats(n, total_len / n, total_vocab / n)


def _selection_count(fraction: float, n: int) -> tuple[int, bool]:
    """round(fraction * n) with halves rounding up, done in decimal so that
    e.g. 0.3 * 2275 counts as exactly 682.5 rather than its float neighbour.

    Returns (count, was_half_integral).
    """
    product = Decimal(str(fraction)) * Decimal(n)
    count = int(product.quantize(Decimal("1"), rounding=ROUND_HALF_UP))
    half_integral = (product * 2) % 2 == 1
    return count, half_integral


def make_mix(
    legit: list[EmailRecord],
    phish: list[EmailRecord],
    fraction: float,
    seed: int,
) -> TrainingMix:
    """Select round_half_up(fraction * len(phish)) phishing emails, without
    replacement, to blend into the legitimate training pool."""
    if not 0.0 <= fraction <= 1.0:
        raise InputError(f"fraction must be in [0, 1], got {fraction}")
    count, half = _selection_count(fraction, len(phish))
    if half:
        warnings.warn(
            f"fraction * corpus size = {fraction} * {len(phish)} is exactly half-integral; "
            f"rounding half up to {count} — sources that round such products differently "
            f"may quote another count",
            stacklevel=2,
        )
    rng = RngStream(derive_seed(seed, "mix", 0))
    order = list(range(len(phish)))
    rng.shuffle(order)
    chosen = sorted(order[:count])
    return TrainingMix(
        legit_ids=[em.record_id for em in legit],
        phish_ids=[phish[i].record_id for i in chosen],
        fraction=fraction,
        seed=seed,
    )
