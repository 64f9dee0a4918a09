"""Turn execution records into model-ready training data.

Covers candidate de-duplication, assembly of (description, source, label,
feedback) samples, a deterministic whitespace + punctuation tokenizer, and
the two input encodings (classification and generation) that differ only in
their leading tag token.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .core import (
    LABEL_IDS,
    Candidate,
    CorpusError,
    ExecutionRecord,
    Problem,
    RankSample,
)
from .feedback import render_feedback

PAD, UNK, BOS, EOS, CLS, GEN, QUERY, CODE = range(8)
RESERVED_TOKENS = ("[PAD]", "[UNK]", "[BOS]", "[EOS]", "[CLS]", "[GEN]", "[QUERY]", "[CODE]")

DEFAULT_MAX_SEQ_LEN = 512
DEFAULT_MAX_TARGET_LEN = 128
DEFAULT_MAX_VOCAB = 8192

CLS_VARIANT = "CLS"
GEN_VARIANT = "GEN"


class EmptyCorpus(Exception):
    """No samples were provided to build a vocabulary from."""


class MissingRecord(Exception):
    """A candidate has no execution record to join against."""


def tokenize(text: str) -> list[str]:
    """Split on whitespace; every punctuation character is its own token.

    Word characters (alphanumerics and underscore) group into runs, so
    "a+b" -> ["a", "+", "b"] and "print(x)" -> ["print", "(", "x", ")"].
    Deterministic and reversible up to whitespace.
    """
    tokens: list[str] = []
    for chunk in text.split():
        run = ""
        for ch in chunk:
            if ch.isalnum() or ch == "_":
                run += ch
            else:
                if run:
                    tokens.append(run)
                    run = ""
                tokens.append(ch)
        if run:
            tokens.append(run)
    return tokens


@dataclass(frozen=True)
class Vocabulary:
    """Bijective token<->id map with eight fixed reserved ids at the front."""

    tokens: tuple[str, ...]

    def __post_init__(self):
        if self.tokens[: len(RESERVED_TOKENS)] != RESERVED_TOKENS:
            raise ValueError("vocabulary must start with the reserved tokens")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("vocabulary tokens must be unique")
        object.__setattr__(
            self, "_ids", {tok: i for i, tok in enumerate(self.tokens)}
        )

    def __len__(self) -> int:
        return len(self.tokens)

    def id_of(self, token: str) -> int:
        return self._ids.get(token, UNK)

    def token_of(self, token_id: int) -> str:
        return self.tokens[token_id]

    def encode_text(self, text: str) -> list[int]:
        return [self.id_of(t) for t in tokenize(text)]

    def content_hash(self) -> str:
        payload = json.dumps(list(self.tokens), ensure_ascii=False).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()


def build_vocab(samples: Sequence[RankSample], max_vocab: int = DEFAULT_MAX_VOCAB) -> Vocabulary:
    """Frequency-ranked vocabulary over descriptions, sources, and feedback.

    Keeps the max_vocab - 8 most frequent tokens; frequency ties break
    lexicographically. Everything else maps to [UNK].
    """
    if not samples:
        raise EmptyCorpus("cannot build a vocabulary from zero samples")
    if max_vocab < len(RESERVED_TOKENS):
        raise ValueError(f"max_vocab must be >= {len(RESERVED_TOKENS)}")
    counts: Counter[str] = Counter()
    for s in samples:
        counts.update(tokenize(s.description))
        counts.update(tokenize(s.source))
        counts.update(tokenize(s.feedback))
    budget = max_vocab - len(RESERVED_TOKENS)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:budget]
    return Vocabulary(tokens=RESERVED_TOKENS + tuple(tok for tok, _ in ranked))


def save_vocab(path: str | Path, vocab: Vocabulary, config_hash: str = "") -> None:
    payload = {"tokens": list(vocab.tokens), "config_hash": config_hash}
    Path(path).write_text(
        json.dumps(payload, ensure_ascii=False, indent=0) + "\n", encoding="utf-8"
    )


def load_vocab(path: str | Path) -> Vocabulary:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return Vocabulary(tokens=tuple(payload["tokens"]))


def _normalize_newlines(text: str) -> str:
    return text.replace("\r\n", "\n").replace("\r", "\n")


def dedup_candidates(candidates: Iterable[Candidate]) -> list[Candidate]:
    """Keep, per problem, the first candidate of each exact source string.

    Sources are compared after normalizing line endings to "\\n"; input
    order is preserved.
    """
    seen: set[tuple[str, str]] = set()
    kept = []
    for c in candidates:
        key = (c.problem_id, _normalize_newlines(c.source))
        if key in seen:
            continue
        seen.add(key)
        kept.append(c)
    return kept


def build_rank_samples(
    problems: Sequence[Problem],
    candidates: Sequence[Candidate],
    records: Sequence[ExecutionRecord],
) -> list[RankSample]:
    """Join candidates with their execution records into training samples."""
    problems_by_id = {p.problem_id: p for p in problems}
    records_by_key = {(r.problem_id, r.candidate_id): r for r in records}
    samples = []
    for c in candidates:
        record = records_by_key.get((c.problem_id, c.candidate_id))
        if record is None:
            raise MissingRecord(
                f"no execution record for candidate ({c.problem_id!r}, {c.candidate_id})"
            )
        problem = problems_by_id.get(c.problem_id)
        if problem is None:
            raise CorpusError(f"candidate references unknown problem {c.problem_id!r}")
        samples.append(
            RankSample(
                problem_id=c.problem_id,
                candidate_id=c.candidate_id,
                description=problem.description,
                source=c.source,
                label=record.outcome,
                feedback=render_feedback(record.outcome, record.failure_detail),
            )
        )
    return samples


@dataclass(frozen=True)
class EncodedSample:
    """Token ids ready for the model; CLS or GEN variant.

    input_ids starts with the variant tag and ends with [EOS]; target_ids is
    [BOS] feedback tokens [EOS]. Lengths are pre-padding lengths.
    """

    problem_id: str
    candidate_id: int
    input_ids: tuple[int, ...]
    label: int
    target_ids: tuple[int, ...]
    input_len: int
    target_len: int


def encode(
    sample: RankSample,
    variant: str,
    vocab: Vocabulary,
    max_seq_len: int = DEFAULT_MAX_SEQ_LEN,
    max_target_len: int = DEFAULT_MAX_TARGET_LEN,
) -> EncodedSample:
    """Encode one sample as [tag][QUERY] N [CODE] S [EOS] plus feedback target.

    When the input overflows max_seq_len, source tokens are dropped from
    their tail first, then description tokens from theirs; the four
    separator tokens always survive. The target keeps [EOS] as its final
    token no matter how much feedback is cut.
    """
    if variant not in (CLS_VARIANT, GEN_VARIANT):
        raise ValueError(f"variant must be CLS or GEN, got {variant!r}")
    if max_seq_len < 4:
        raise ValueError("max_seq_len must fit the four separator tokens")
    if max_target_len < 2:
        raise ValueError("max_target_len must fit [BOS] and [EOS]")

    desc_ids = vocab.encode_text(sample.description)
    src_ids = vocab.encode_text(sample.source)
    overflow = (4 + len(desc_ids) + len(src_ids)) - max_seq_len
    if overflow > 0:
        cut = min(overflow, len(src_ids))
        src_ids = src_ids[: len(src_ids) - cut]
        overflow -= cut
    if overflow > 0:
        desc_ids = desc_ids[: len(desc_ids) - overflow]

    tag = CLS if variant == CLS_VARIANT else GEN
    input_ids = (tag, QUERY, *desc_ids, CODE, *src_ids, EOS)

    fb_ids = vocab.encode_text(sample.feedback)[: max_target_len - 2]
    target_ids = (BOS, *fb_ids, EOS)

    return EncodedSample(
        problem_id=sample.problem_id,
        candidate_id=sample.candidate_id,
        input_ids=input_ids,
        label=LABEL_IDS[sample.label],
        target_ids=target_ids,
        input_len=len(input_ids),
        target_len=len(target_ids),
    )


def detokenize(token_ids: Iterable[int], vocab: Vocabulary) -> str:
    """Join tokens with single spaces; stop at [EOS].

    Structural reserved tokens are dropped, but a predicted [UNK] renders
    literally since it stands for a real (unknown) word.
    """
    words = []
    for tid in token_ids:
        if tid == EOS:
            break
        if tid < len(RESERVED_TOKENS) and tid != UNK:
            continue
        words.append(vocab.token_of(tid))
    return " ".join(words)
