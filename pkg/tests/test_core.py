import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rankef import core
from rankef.core import (
    Candidate,
    CorpusError,
    ExecutionRecord,
    IntentMismatch,
    OutcomeClass,
    PerTestResult,
    Problem,
    RankSample,
    RuntimeFault,
    ScoredCandidate,
    TestCase,
    validate_corpus,
)


def test_duplicate_candidate_key_flagged():
    problems = [Problem("p", "desc", (TestCase("1", "1"),))]
    candidates = [Candidate("p", 0, "a=1"), Candidate("p", 0, "a=2")]
    report = validate_corpus(problems, candidates)
    assert report.duplicate_candidate_keys == [("p", 0)]
    assert not report.ok


def test_dangling_candidate_reference_flagged():
    problems = [Problem("p", "desc", (TestCase("1", "1"),))]
    candidates = [Candidate("ghost", 0, "a=1")]
    report = validate_corpus(problems, candidates)
    assert report.dangling_candidates == [("ghost", 0)]
    assert "unknown problem" in report.summary()


def test_well_formed_corpus_has_empty_report():
    problems = [
        Problem(f"p{i}", "desc", (TestCase("1", "1"),)) for i in range(3)
    ]
    candidates = [Candidate(f"p{i}", j, "x=1") for i in range(3) for j in range(2)]
    report = validate_corpus(problems, candidates)
    assert report.ok
    assert report.summary() == "corpus ok"


def test_duplicate_problem_and_empty_tests_flagged():
    problems = [
        Problem("p", "desc", (TestCase("", ""),)),
        Problem("p", "other", (TestCase("", ""),)),
    ]
    report = validate_corpus(problems, [])
    assert report.duplicate_problem_ids == ["p"]

    with pytest.raises(CorpusError):
        Problem("q", "", (TestCase("", ""),))


def test_invariant_violations_raise():
    with pytest.raises(CorpusError):
        Candidate("p", -1, "x")
    with pytest.raises(CorpusError):
        Candidate("p", 0, "")
    with pytest.raises(CorpusError):
        Problem("p", "d", (), difficulty="easy")
    # IntentError without an IntentMismatch detail
    with pytest.raises(CorpusError):
        ExecutionRecord(
            problem_id="p",
            candidate_id=0,
            outcome=OutcomeClass.INTENT_ERROR,
            per_test=(PerTestResult(0, False, "x", 1),),
            failure_detail=None,
            raw_stderr="",
        )


def test_candidate_id_assigned_by_input_order(tmp_path):
    path = tmp_path / "candidates.jsonl"
    rows = [
        {"problem_id": "p", "source": "a"},
        {"problem_id": "p", "source": "b"},
        {"problem_id": "q", "source": "c"},
    ]
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    loaded = core.load_candidates(path)
    assert [(c.problem_id, c.candidate_id) for c in loaded] == [("p", 0), ("p", 1), ("q", 0)]


def test_score_bounds_enforced():
    ScoredCandidate("p", 0, 0.0)
    ScoredCandidate("p", 0, 1.0)
    with pytest.raises(ValueError):
        ScoredCandidate("p", 0, 1.5)


# ---------------------------------------------------------------------------
# Serialization round-trips

text = st.text(
    alphabet=st.characters(blacklist_categories=("Cs",)), min_size=0, max_size=40
)
nonempty = st.text(
    alphabet=st.characters(blacklist_categories=("Cs",)), min_size=1, max_size=40
)


@st.composite
def problems_st(draw):
    return Problem(
        problem_id=draw(st.uuids()).hex,
        description=draw(nonempty),
        tests=tuple(
            TestCase(draw(text), draw(text))
            for _ in range(draw(st.integers(1, 3)))
        ),
        difficulty=draw(st.sampled_from([None, "introductory", "interview", "competition"])),
    )


@st.composite
def records_st(draw):
    outcome = draw(st.sampled_from(list(OutcomeClass)))
    if outcome is OutcomeClass.CORRECT:
        detail = None
    elif outcome is OutcomeClass.INTENT_ERROR:
        detail = IntentMismatch(
            test_index=draw(st.integers(0, 5)),
            input=draw(text),
            expected_output=draw(text),
            actual_output=draw(text),
        )
    else:
        detail = RuntimeFault(
            error_type=draw(st.sampled_from(["IndexError", "ValueError", "UnknownError"])),
            line_no=draw(st.one_of(st.none(), st.integers(1, 99))),
            line_code=draw(st.one_of(st.none(), text)),
            message=draw(text),
        )
    per_test = tuple(
        PerTestResult(i, passed, draw(text), draw(st.integers(0, 10_000)))
        for i, passed in enumerate(draw(st.lists(st.booleans(), max_size=4)))
    )
    if outcome is OutcomeClass.CORRECT:
        per_test = tuple(
            PerTestResult(t.test_index, True, t.actual_output, t.wall_ms) for t in per_test
        )
    return ExecutionRecord(
        problem_id=draw(nonempty),
        candidate_id=draw(st.integers(0, 500)),
        outcome=outcome,
        per_test=per_test,
        failure_detail=detail,
        raw_stderr=draw(text),
    )


@settings(max_examples=50)
@given(st.lists(problems_st(), max_size=5))
def test_problem_roundtrip(problems):
    dicts = [core.problem_to_dict(p) for p in problems]
    assert [core.problem_from_dict(d) for d in dicts] == problems
    # survive an actual JSON encode/decode too
    assert [
        core.problem_from_dict(json.loads(json.dumps(d, ensure_ascii=False))) for d in dicts
    ] == problems


@settings(max_examples=50)
@given(records_st())
def test_record_roundtrip(record):
    d = json.loads(json.dumps(core.record_to_dict(record), ensure_ascii=False))
    assert core.record_from_dict(d) == record


@settings(max_examples=50)
@given(nonempty, st.integers(0, 99), nonempty, nonempty, st.sampled_from(list(OutcomeClass)), text)
def test_sample_roundtrip(pid, cid, desc, src, label, fb):
    s = RankSample(pid, cid, desc, src, label, fb)
    assert core.sample_from_dict(core.sample_to_dict(s)) == s


def test_file_roundtrips(tmp_path, tiny_corpus):
    problems, candidates = tiny_corpus
    core.save_problems(tmp_path / "p.jsonl", problems)
    core.save_candidates(tmp_path / "c.jsonl", candidates)
    assert core.load_problems(tmp_path / "p.jsonl") == problems
    assert core.load_candidates(tmp_path / "c.jsonl") == candidates
