"""Domain types shared by every pipeline stage, plus corpus I/O and validation.

All corpus files are JSONL (one record per line, UTF-8) with lower_snake_case
field names matching the dataclass fields below. Values are immutable after
construction and safe to hand to concurrent workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Union


class CorpusError(Exception):
    """Raised when a corpus file cannot be parsed into domain types."""


class OutcomeClass(Enum):
    """Three-way execution outcome of a candidate against its unit tests."""

    CORRECT = "Correct"
    INTENT_ERROR = "IntentError"
    EXECUTION_ERROR = "ExecutionError"


# Frozen class-id coding used by the ranker; never reorder.
LABEL_IDS = {
    OutcomeClass.CORRECT: 0,
    OutcomeClass.INTENT_ERROR: 1,
    OutcomeClass.EXECUTION_ERROR: 2,
}


@dataclass(frozen=True)
class TestCase:
    """One stdin/expected-stdout pair. expected_output may be empty text."""

    __test__ = False  # keep pytest from collecting this

    input: str
    expected_output: str


@dataclass(frozen=True)
class Problem:
    """A task description plus its ordered unit tests."""

    problem_id: str
    description: str
    tests: tuple[TestCase, ...]
    difficulty: Optional[str] = None  # introductory | interview | competition

    def __post_init__(self):
        if not self.problem_id:
            raise CorpusError("problem_id must be non-empty")
        if not self.description:
            raise CorpusError(f"problem {self.problem_id!r}: description must be non-empty")
        if not isinstance(self.tests, tuple):
            object.__setattr__(self, "tests", tuple(self.tests))
        if self.difficulty is not None and self.difficulty not in DIFFICULTIES:
            raise CorpusError(
                f"problem {self.problem_id!r}: unknown difficulty {self.difficulty!r}"
            )


DIFFICULTIES = ("introductory", "interview", "competition")


@dataclass(frozen=True)
class Candidate:
    """One generated source program tied to a problem."""

    problem_id: str
    candidate_id: int
    source: str

    def __post_init__(self):
        if self.candidate_id < 0:
            raise CorpusError("candidate_id must be nonnegative")
        if not self.source:
            raise CorpusError(
                f"candidate ({self.problem_id!r}, {self.candidate_id}): source must be non-empty"
            )


@dataclass(frozen=True)
class IntentMismatch:
    """First failing test of a clean-exit run whose output mismatched."""

    test_index: int
    input: str
    expected_output: str
    actual_output: str


@dataclass(frozen=True)
class RuntimeFault:
    """Distilled interpreter fault: type, location, source line, message."""

    error_type: str
    line_no: Optional[int]
    line_code: Optional[str]
    message: str


FailureDetail = Union[IntentMismatch, RuntimeFault]


@dataclass(frozen=True)
class PerTestResult:
    """Result of one test run; wall_ms is wall-clock milliseconds."""

    test_index: int
    passed: bool
    actual_output: str
    wall_ms: int


@dataclass(frozen=True)
class ExecutionRecord:
    """Per-candidate execution result with its classified outcome.

    per_test covers a prefix of the problem's tests (execution short-circuits
    on the first failing test). failure_detail is an IntentMismatch exactly
    when outcome is INTENT_ERROR and a RuntimeFault exactly when outcome is
    EXECUTION_ERROR.
    """

    problem_id: str
    candidate_id: int
    outcome: OutcomeClass
    per_test: tuple[PerTestResult, ...]
    failure_detail: Optional[FailureDetail]
    raw_stderr: str

    def __post_init__(self):
        if not isinstance(self.per_test, tuple):
            object.__setattr__(self, "per_test", tuple(self.per_test))
        if self.outcome is OutcomeClass.CORRECT and self.failure_detail is not None:
            raise CorpusError("Correct record must not carry a failure_detail")
        if self.outcome is OutcomeClass.INTENT_ERROR and not isinstance(
            self.failure_detail, IntentMismatch
        ):
            raise CorpusError("IntentError record requires an IntentMismatch detail")
        if self.outcome is OutcomeClass.EXECUTION_ERROR and not isinstance(
            self.failure_detail, RuntimeFault
        ):
            raise CorpusError("ExecutionError record requires a RuntimeFault detail")


@dataclass(frozen=True)
class RankSample:
    """The training quadruple: description, source, outcome label, feedback."""

    problem_id: str
    candidate_id: int
    description: str
    source: str
    label: OutcomeClass
    feedback: str


@dataclass(frozen=True)
class ScoredCandidate:
    """Ranker score for one candidate; score is P(correct) in [0, 1]."""

    problem_id: str
    candidate_id: int
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")


# ---------------------------------------------------------------------------
# Validation


@dataclass
class ValidationReport:
    """Corpus-level consistency findings; any entry blocks the pipeline."""

    duplicate_problem_ids: list[str] = field(default_factory=list)
    duplicate_candidate_keys: list[tuple[str, int]] = field(default_factory=list)
    dangling_candidates: list[tuple[str, int]] = field(default_factory=list)
    empty_test_problems: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (
            self.duplicate_problem_ids
            or self.duplicate_candidate_keys
            or self.dangling_candidates
            or self.empty_test_problems
        )

    def summary(self) -> str:
        if self.ok:
            return "corpus ok"
        lines = []
        for pid in self.duplicate_problem_ids:
            lines.append(f"duplicate problem_id: {pid}")
        for key in self.duplicate_candidate_keys:
            lines.append(f"duplicate candidate: {key}")
        for key in self.dangling_candidates:
            lines.append(f"candidate references unknown problem: {key}")
        for pid in self.empty_test_problems:
            lines.append(f"problem has no tests: {pid}")
        return "\n".join(lines)


def validate_corpus(
    problems: Iterable[Problem], candidates: Iterable[Candidate]
) -> ValidationReport:
    """Report duplicate ids, dangling references, and empty-test problems."""
    report = ValidationReport()
    seen_pids: set[str] = set()
    for p in problems:
        if p.problem_id in seen_pids:
            report.duplicate_problem_ids.append(p.problem_id)
        seen_pids.add(p.problem_id)
        if not p.tests:
            report.empty_test_problems.append(p.problem_id)
    seen_keys: set[tuple[str, int]] = set()
    for c in candidates:
        key = (c.problem_id, c.candidate_id)
        if key in seen_keys:
            report.duplicate_candidate_keys.append(key)
        seen_keys.add(key)
        if c.problem_id not in seen_pids:
            report.dangling_candidates.append(key)
    return report


# ---------------------------------------------------------------------------
# JSONL serialization
#
# Field names in the files are exactly the dataclass field names. The
# failure_detail union is tagged with a "kind" discriminator.


def problem_to_dict(p: Problem) -> dict:
    d = {
        "problem_id": p.problem_id,
        "description": p.description,
        "tests": [{"input": t.input, "expected_output": t.expected_output} for t in p.tests],
    }
    if p.difficulty is not None:
        d["difficulty"] = p.difficulty
    return d


def problem_from_dict(d: dict) -> Problem:
    try:
        tests = tuple(
            TestCase(input=t["input"], expected_output=t["expected_output"])
            for t in d["tests"]
        )
        return Problem(
            problem_id=d["problem_id"],
            description=d["description"],
            tests=tests,
            difficulty=d.get("difficulty"),
        )
    except KeyError as exc:
        raise CorpusError(f"problem record missing field {exc}") from exc


def candidate_to_dict(c: Candidate) -> dict:
    return {"problem_id": c.problem_id, "candidate_id": c.candidate_id, "source": c.source}


def candidate_from_dict(d: dict, fallback_id: int) -> Candidate:
    """Build a Candidate; candidate_id defaults to input order when absent."""
    try:
        return Candidate(
            problem_id=d["problem_id"],
            candidate_id=int(d.get("candidate_id", fallback_id)),
            source=d["source"],
        )
    except KeyError as exc:
        raise CorpusError(f"candidate record missing field {exc}") from exc


def _detail_to_dict(detail: FailureDetail) -> dict:
    if isinstance(detail, IntentMismatch):
        return {
            "kind": "intent_mismatch",
            "test_index": detail.test_index,
            "input": detail.input,
            "expected_output": detail.expected_output,
            "actual_output": detail.actual_output,
        }
    return {
        "kind": "runtime_fault",
        "error_type": detail.error_type,
        "line_no": detail.line_no,
        "line_code": detail.line_code,
        "message": detail.message,
    }


def _detail_from_dict(d: Optional[dict]) -> Optional[FailureDetail]:
    if d is None:
        return None
    kind = d.get("kind")
    if kind == "intent_mismatch":
        return IntentMismatch(
            test_index=d["test_index"],
            input=d["input"],
            expected_output=d["expected_output"],
            actual_output=d["actual_output"],
        )
    if kind == "runtime_fault":
        return RuntimeFault(
            error_type=d["error_type"],
            line_no=d["line_no"],
            line_code=d["line_code"],
            message=d["message"],
        )
    raise CorpusError(f"unknown failure_detail kind: {kind!r}")


def record_to_dict(r: ExecutionRecord) -> dict:
    return {
        "problem_id": r.problem_id,
        "candidate_id": r.candidate_id,
        "outcome": r.outcome.value,
        "per_test": [
            {
                "test_index": t.test_index,
                "passed": t.passed,
                "actual_output": t.actual_output,
                "wall_ms": t.wall_ms,
            }
            for t in r.per_test
        ],
        "failure_detail": None if r.failure_detail is None else _detail_to_dict(r.failure_detail),
        "raw_stderr": r.raw_stderr,
    }


def record_from_dict(d: dict) -> ExecutionRecord:
    try:
        return ExecutionRecord(
            problem_id=d["problem_id"],
            candidate_id=d["candidate_id"],
            outcome=OutcomeClass(d["outcome"]),
            per_test=tuple(
                PerTestResult(
                    test_index=t["test_index"],
                    passed=t["passed"],
                    actual_output=t["actual_output"],
                    wall_ms=t["wall_ms"],
                )
                for t in d["per_test"]
            ),
            failure_detail=_detail_from_dict(d.get("failure_detail")),
            raw_stderr=d["raw_stderr"],
        )
    except KeyError as exc:
        raise CorpusError(f"execution record missing field {exc}") from exc


def sample_to_dict(s: RankSample) -> dict:
    return {
        "problem_id": s.problem_id,
        "candidate_id": s.candidate_id,
        "description": s.description,
        "source": s.source,
        "label": s.label.value,
        "feedback": s.feedback,
    }


def sample_from_dict(d: dict) -> RankSample:
    try:
        return RankSample(
            problem_id=d["problem_id"],
            candidate_id=d["candidate_id"],
            description=d["description"],
            source=d["source"],
            label=OutcomeClass(d["label"]),
            feedback=d["feedback"],
        )
    except KeyError as exc:
        raise CorpusError(f"rank sample record missing field {exc}") from exc


def _read_jsonl(path: Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
    return rows


def _write_jsonl(path: Path, dicts: Iterable[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for d in dicts:
            fh.write(json.dumps(d, ensure_ascii=False) + "\n")


def load_problems(path: str | Path) -> list[Problem]:
    return [problem_from_dict(d) for d in _read_jsonl(Path(path))]


def save_problems(path: str | Path, problems: Iterable[Problem]) -> None:
    _write_jsonl(Path(path), (problem_to_dict(p) for p in problems))


def load_candidates(path: str | Path) -> list[Candidate]:
    """Load candidates; records without candidate_id get ids in input order.

    The fallback counter is per problem, so a file listing several problems'
    candidates without ids still yields unique (problem_id, candidate_id).
    """
    rows = _read_jsonl(Path(path))
    next_id: dict[str, int] = {}
    out = []
    for d in rows:
        pid = d.get("problem_id", "")
        fallback = next_id.get(pid, 0)
        c = candidate_from_dict(d, fallback)
        next_id[pid] = max(fallback, c.candidate_id) + 1
        out.append(c)
    return out


def save_candidates(path: str | Path, candidates: Iterable[Candidate]) -> None:
    _write_jsonl(Path(path), (candidate_to_dict(c) for c in candidates))


def load_records(path: str | Path) -> list[ExecutionRecord]:
    return [record_from_dict(d) for d in _read_jsonl(Path(path))]


def save_records(path: str | Path, records: Iterable[ExecutionRecord]) -> None:
    _write_jsonl(Path(path), (record_to_dict(r) for r in records))


def load_samples(path: str | Path) -> list[RankSample]:
    return [sample_from_dict(d) for d in _read_jsonl(Path(path))]


def save_samples(path: str | Path, samples: Iterable[RankSample]) -> None:
    _write_jsonl(Path(path), (sample_to_dict(s) for s in samples))
