"""Run candidate programs against their unit tests in isolated child processes.

Each test runs in a fresh process with a fresh empty scratch directory,
stdin wired to the test input, and stdout/stderr captured up to a byte cap.
Isolation is best-effort (process + scratch dir + wall timeout + output
caps); OS-level containerization is out of scope.

Execution short-circuits on the first failing test, so the resulting
record's per_test list covers a prefix of the problem's tests.
"""

from __future__ import annotations

import os
import shutil
import subprocess
import sys
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .core import (
    Candidate,
    ExecutionRecord,
    IntentMismatch,
    OutcomeClass,
    PerTestResult,
    Problem,
    RuntimeFault,
)
from .feedback import CANDIDATE_FILENAME, fault_from_stderr, has_terminator

INTERPRETER_ENV_VAR = "RANKEF_INTERPRETER"

_READ_CHUNK = 65536


class InterpreterMissing(Exception):
    """The configured interpreter does not exist; the whole run aborts."""


@dataclass(frozen=True)
class ExecLimits:
    """Per-test execution limits."""

    wall_timeout_ms: int = 5000
    max_output_bytes: int = 1 << 20
    workers: int = 1

    def __post_init__(self):
        if self.wall_timeout_ms <= 0:
            raise ValueError("wall_timeout_ms must be > 0")
        if self.max_output_bytes <= 0:
            raise ValueError("max_output_bytes must be > 0")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class _ProcessResult:
    exit_code: Optional[int]  # None when the wall timeout was hit
    stdout: str
    stderr: str
    overflowed: bool
    wall_ms: int


def resolve_interpreter(explicit: Optional[str] = None) -> str:
    """Pick the interpreter: explicit arg > RANKEF_INTERPRETER > this Python."""
    path = explicit or os.environ.get(INTERPRETER_ENV_VAR) or sys.executable
    if os.sep in path or (os.altsep and os.altsep in path):
        resolved = path if os.path.isfile(path) and os.access(path, os.X_OK) else None
    else:
        resolved = shutil.which(path)
    if resolved is None:
        raise InterpreterMissing(f"interpreter not found: {path!r}")
    return resolved


def normalize_output(text: str) -> str:
    """Strip trailing whitespace per line, then trailing blank lines."""
    lines = [line.rstrip() for line in text.split("\n")]
    while lines and lines[-1] == "":
        lines.pop()
    return "\n".join(lines)


def _run_process(
    argv: Sequence[str],
    stdin_text: str,
    cwd: str,
    wall_timeout_ms: int,
    max_output_bytes: int,
) -> _ProcessResult:
    """Run one child process with a wall deadline and output byte caps.

    Readers drain both pipes concurrently so the child never blocks on a
    full pipe; whichever stream exceeds the cap kills the process.
    """
    env = {
        "PATH": os.environ.get("PATH", "/usr/bin:/bin"),
        "LC_ALL": "C.UTF-8",
        "PYTHONIOENCODING": "utf-8",
    }
    start = time.monotonic()
    proc = subprocess.Popen(
        argv,
        stdin=subprocess.PIPE,
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        cwd=cwd,
        env=env,
    )

    buffers = {"stdout": bytearray(), "stderr": bytearray()}
    overflow = threading.Event()

    def _feed_stdin():
        try:
            proc.stdin.write(stdin_text.encode("utf-8"))
            proc.stdin.close()
        except (BrokenPipeError, OSError):
            pass

    def _drain(stream, name: str):
        # Buffers retain at most cap + 1 bytes; the sentinel byte marks overflow.
        buf = buffers[name]
        while True:
            chunk = stream.read(_READ_CHUNK)
            if not chunk:
                return
            room = max_output_bytes + 1 - len(buf)
            if room > 0:
                buf.extend(chunk[:room])
            if len(buf) > max_output_bytes:
                overflow.set()
                try:
                    proc.kill()
                except OSError:
                    pass
                return

    threads = [
        threading.Thread(target=_feed_stdin, daemon=True),
        threading.Thread(target=_drain, args=(proc.stdout, "stdout"), daemon=True),
        threading.Thread(target=_drain, args=(proc.stderr, "stderr"), daemon=True),
    ]
    for t in threads:
        t.start()

    timed_out = False
    try:
        proc.wait(timeout=wall_timeout_ms / 1000.0)
    except subprocess.TimeoutExpired:
        timed_out = True
        proc.kill()
        proc.wait()
    for t in threads:
        t.join(timeout=1.0)
    for stream in (proc.stdin, proc.stdout, proc.stderr):
        try:
            stream.close()
        except OSError:
            pass
    wall_ms = int((time.monotonic() - start) * 1000)

    def _decode(buf: bytearray) -> str:
        return bytes(buf[:max_output_bytes]).decode("utf-8", errors="replace")

    return _ProcessResult(
        exit_code=None if timed_out else proc.returncode,
        stdout=_decode(buffers["stdout"]),
        stderr=_decode(buffers["stderr"]),
        overflowed=overflow.is_set(),
        wall_ms=wall_ms,
    )


def classify_outcome(
    exit_status: Optional[int],
    stderr: str,
    per_test: Sequence[PerTestResult],
    n_tests: int,
) -> OutcomeClass:
    """Classify a candidate run from its last process result and test record.

    Nonzero exit, a traceback terminator in stderr, or a timeout (exit_status
    None) is an execution error; a full pass over all tests is correct; a
    clean exit with mismatched output is an intent error.
    """
    if exit_status is None or exit_status != 0 or has_terminator(stderr):
        return OutcomeClass.EXECUTION_ERROR
    if len(per_test) == n_tests and all(t.passed for t in per_test):
        return OutcomeClass.CORRECT
    return OutcomeClass.INTENT_ERROR


def run_candidate(
    candidate: Candidate,
    problem: Problem,
    limits: ExecLimits,
    interpreter: Optional[str] = None,
) -> ExecutionRecord:
    """Execute one candidate against its problem's tests in order."""
    interp = resolve_interpreter(interpreter)
    per_test: list[PerTestResult] = []
    failure = None
    raw_stderr = ""
    outcome = OutcomeClass.CORRECT

    for index, test in enumerate(problem.tests):
        scratch = tempfile.mkdtemp(prefix="rankef-exec-")
        try:
            Path(scratch, CANDIDATE_FILENAME).write_text(candidate.source, encoding="utf-8")
            result = _run_process(
                [interp, "-I", CANDIDATE_FILENAME],
                stdin_text=test.input,
                cwd=scratch,
                wall_timeout_ms=limits.wall_timeout_ms,
                max_output_bytes=limits.max_output_bytes,
            )
        finally:
            shutil.rmtree(scratch, ignore_errors=True)

        actual = normalize_output(result.stdout)
        expected = normalize_output(test.expected_output)
        clean = (
            result.exit_code == 0
            and not result.overflowed
            and not has_terminator(result.stderr)
        )
        passed = clean and actual == expected
        per_test.append(
            PerTestResult(
                test_index=index, passed=passed, actual_output=actual, wall_ms=result.wall_ms
            )
        )
        raw_stderr = result.stderr
        if passed:
            continue

        # First failing test: classify and stop.
        if result.exit_code is None:
            outcome = OutcomeClass.EXECUTION_ERROR
            failure = RuntimeFault(
                error_type="TimeoutError",
                line_no=None,
                line_code=None,
                message=f"wall timeout after {limits.wall_timeout_ms} ms",
            )
        elif result.overflowed:
            outcome = OutcomeClass.EXECUTION_ERROR
            failure = RuntimeFault(
                error_type="OutputLimitExceeded",
                line_no=None,
                line_code=None,
                message=f"output exceeded {limits.max_output_bytes} bytes",
            )
        else:
            outcome = classify_outcome(
                result.exit_code, result.stderr, per_test, len(problem.tests)
            )
            if outcome is OutcomeClass.EXECUTION_ERROR:
                failure = fault_from_stderr(result.stderr, candidate.source)
            else:
                failure = IntentMismatch(
                    test_index=index,
                    input=test.input,
                    expected_output=expected,
                    actual_output=actual,
                )
        break

    return ExecutionRecord(
        problem_id=candidate.problem_id,
        candidate_id=candidate.candidate_id,
        outcome=outcome,
        per_test=tuple(per_test),
        failure_detail=failure,
        raw_stderr=raw_stderr,
    )


def batch_execute(
    problems: Iterable[Problem],
    candidates: Iterable[Candidate],
    limits: ExecLimits,
    interpreter: Optional[str] = None,
) -> list[ExecutionRecord]:
    """Execute every candidate; output sorted by (problem_id, candidate_id).

    The sort makes the output order independent of worker scheduling.
    Raises InterpreterMissing before launching any work if the interpreter
    cannot be resolved, and KeyError-style CorpusError conditions are
    expected to have been screened by validate_corpus.
    """
    interp = resolve_interpreter(interpreter)
    by_id = {p.problem_id: p for p in problems}
    todo = list(candidates)

    def _one(c: Candidate) -> ExecutionRecord:
        return run_candidate(c, by_id[c.problem_id], limits, interpreter=interp)

    if limits.workers == 1:
        records = [_one(c) for c in todo]
    else:
        with ThreadPoolExecutor(max_workers=limits.workers) as pool:
            records = list(pool.map(_one, todo))
    records.sort(key=lambda r: (r.problem_id, r.candidate_id))
    return records
