import os

import pytest
from hypothesis import given
from hypothesis import strategies as st

from rankef.core import Candidate, OutcomeClass, PerTestResult, Problem, RuntimeFault, TestCase
from rankef.sandbox import (
    ExecLimits,
    InterpreterMissing,
    batch_execute,
    classify_outcome,
    normalize_output,
    resolve_interpreter,
    run_candidate,
)

FAST = ExecLimits(wall_timeout_ms=5000, max_output_bytes=1 << 20, workers=1)


class TestNormalizeOutput:
    def test_trailing_space(self):
        assert normalize_output("6 \n") == "6"

    def test_trailing_blank_lines(self):
        assert normalize_output("a\nb\n\n") == "a\nb"

    def test_empty_identity(self):
        assert normalize_output("") == ""

    @given(st.text(max_size=200))
    def test_idempotent(self, s):
        assert normalize_output(normalize_output(s)) == normalize_output(s)


class TestClassifyOutcome:
    def _passed(self, n):
        return tuple(PerTestResult(i, True, "", 1) for i in range(n))

    def test_all_passed_correct(self):
        assert classify_outcome(0, "", self._passed(3), 3) is OutcomeClass.CORRECT

    def test_timeout_is_execution_error(self):
        assert classify_outcome(None, "", (), 1) is OutcomeClass.EXECUTION_ERROR

    def test_clean_exit_mismatch_is_intent_error(self):
        per = (PerTestResult(0, False, "4", 1),)
        assert classify_outcome(0, "", per, 1) is OutcomeClass.INTENT_ERROR

    def test_nonzero_exit_is_execution_error(self):
        per = (PerTestResult(0, False, "", 1),)
        assert classify_outcome(1, "", per, 1) is OutcomeClass.EXECUTION_ERROR

    def test_terminator_overrides_clean_exit(self):
        per = (PerTestResult(0, False, "ok", 1),)
        assert classify_outcome(0, "ValueError: x\n", per, 1) is OutcomeClass.EXECUTION_ERROR


class TestRunCandidate:
    def test_correct_run(self):
        problem = Problem("p", "double it", (TestCase("3", "6"),))
        record = run_candidate(Candidate("p", 0, "print(int(input())*2)"), problem, FAST)
        assert record.outcome is OutcomeClass.CORRECT
        assert record.failure_detail is None
        assert [t.passed for t in record.per_test] == [True]

    def test_runtime_fault_parsed(self):
        problem = Problem("p", "any", (TestCase("3", "6"),))
        record = run_candidate(Candidate("p", 0, "x=[1]\nprint(x[5])"), problem, FAST)
        assert record.outcome is OutcomeClass.EXECUTION_ERROR
        fault = record.failure_detail
        assert isinstance(fault, RuntimeFault)
        assert fault.error_type == "IndexError"
        assert fault.line_no == 2
        assert fault.line_code == "print(x[5])"

    def test_intent_error_detail(self):
        problem = Problem("p", "double it", (TestCase("3", "6"),))
        record = run_candidate(Candidate("p", 0, "print(int(input())+1)"), problem, FAST)
        assert record.outcome is OutcomeClass.INTENT_ERROR
        detail = record.failure_detail
        assert (detail.input, detail.expected_output, detail.actual_output) == ("3", "6", "4")
        assert "Traceback" not in record.raw_stderr

    def test_timeout(self):
        problem = Problem("p", "any", (TestCase("", ""),))
        limits = ExecLimits(wall_timeout_ms=400, max_output_bytes=1 << 20, workers=1)
        record = run_candidate(Candidate("p", 0, "while True:\n    pass"), problem, limits)
        assert record.outcome is OutcomeClass.EXECUTION_ERROR
        assert record.failure_detail.error_type == "TimeoutError"

    def test_output_overflow(self):
        problem = Problem("p", "any", (TestCase("", "x"),))
        limits = ExecLimits(wall_timeout_ms=5000, max_output_bytes=4096, workers=1)
        source = "for _ in range(5000):\n    print('y' * 100)"
        record = run_candidate(Candidate("p", 0, source), problem, limits)
        assert record.outcome is OutcomeClass.EXECUTION_ERROR
        assert record.failure_detail.error_type == "OutputLimitExceeded"

    def test_short_circuit_prefix(self):
        problem = Problem(
            "p", "double it", (TestCase("1", "2"), TestCase("2", "999"), TestCase("3", "6"))
        )
        record = run_candidate(Candidate("p", 0, "print(int(input())*2)"), problem, FAST)
        assert record.outcome is OutcomeClass.INTENT_ERROR
        assert [t.test_index for t in record.per_test] == [0, 1]  # stops at first failure

    def test_isolation_between_candidates(self):
        """A marker file written by one candidate is invisible to the next run."""
        probe = (
            "import os, sys\n"
            "print('seen' if os.path.exists('marker.txt') else 'clean')\n"
            "open('marker.txt', 'w').write('x')\n"
        )
        problem = Problem("p", "probe", (TestCase("", "clean"), TestCase("", "clean")))
        writer = Candidate("p", 0, "open('marker.txt', 'w').write('x')\nprint('clean')\n")
        # probe twice within one candidate: each test gets its own scratch dir
        record = run_candidate(Candidate("p", 1, probe), problem, FAST)
        assert record.outcome is OutcomeClass.CORRECT, record
        run_candidate(writer, Problem("p", "w", (TestCase("", "clean"),)), FAST)
        record = run_candidate(Candidate("p", 2, probe), problem, FAST)
        assert record.outcome is OutcomeClass.CORRECT


class TestBatchExecute:
    def test_sorted_records_and_worker_independence(self, tiny_corpus):
        problems, candidates = tiny_corpus
        reference = None
        for workers in (1, 4, 16):
            limits = ExecLimits(wall_timeout_ms=5000, max_output_bytes=1 << 20, workers=workers)
            records = batch_execute(problems, list(reversed(candidates)), limits)
            keys = [(r.problem_id, r.candidate_id) for r in records]
            assert keys == sorted(keys)
            essence = [(r.problem_id, r.candidate_id, r.outcome, r.failure_detail) for r in records]
            if reference is None:
                reference = essence
            else:
                assert essence == reference

    def test_empty_candidates(self, tiny_corpus):
        problems, _ = tiny_corpus
        assert batch_execute(problems, [], FAST) == []

    def test_outcome_rederivable_from_record(self, tiny_corpus):
        from rankef.feedback import has_terminator
        from rankef.core import IntentMismatch

        problems, candidates = tiny_corpus
        n_tests = {p.problem_id: len(p.tests) for p in problems}
        for r in batch_execute(problems, candidates, FAST):
            all_passed = len(r.per_test) == n_tests[r.problem_id] and all(
                t.passed for t in r.per_test
            )
            assert (r.outcome is OutcomeClass.CORRECT) == all_passed
            if r.outcome is OutcomeClass.INTENT_ERROR:
                assert isinstance(r.failure_detail, IntentMismatch)
                assert not has_terminator(r.raw_stderr)
            if r.outcome is OutcomeClass.EXECUTION_ERROR:
                assert isinstance(r.failure_detail, RuntimeFault)


def test_interpreter_missing():
    with pytest.raises(InterpreterMissing):
        resolve_interpreter("/nonexistent/python-binary")


def test_interpreter_env_override(monkeypatch):
    monkeypatch.setenv("RANKEF_INTERPRETER", "/nonexistent/python-binary")
    with pytest.raises(InterpreterMissing):
        resolve_interpreter()
    monkeypatch.delenv("RANKEF_INTERPRETER")
    assert os.access(resolve_interpreter(), os.X_OK)


def test_limits_validation():
    with pytest.raises(ValueError):
        ExecLimits(wall_timeout_ms=0)
    with pytest.raises(ValueError):
        ExecLimits(workers=0)
    with pytest.raises(ValueError):
        ExecLimits(max_output_bytes=0)
