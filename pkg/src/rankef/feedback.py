"""Distill interpreter stderr into structured fault info and render feedback.

The three feedback templates below are frozen: downstream tokenization and
the golden test corpus depend on them byte-for-byte. All functions here are
pure and safe for unrestricted concurrent use.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from .core import FailureDetail, IntentMismatch, OutcomeClass, RuntimeFault

# Candidate programs are always written to this filename inside their
# scratch directory; frames from any other file are library frames.
CANDIDATE_FILENAME = "main.py"

# Embedded template fields are clipped to this many characters, which keeps
# any rendering comfortably under 4 KiB.
FIELD_CAP = 512
TRUNCATION_MARK = "…[truncated]"

CORRECT_FEEDBACK = "This code is correct."

# Terminator line closing a traceback: "<ErrorType>: <message>" or a bare
# "<ErrorType>". The final name component must look like an exception class
# (conventional suffix, or one of the suffix-less builtins); this rejects
# ordinary stderr chatter such as "warning: deprecated".
_TERMINATOR_RE = re.compile(
    r"^(?P<etype>(?:[A-Za-z_][A-Za-z0-9_]*\.)*"
    r"(?:[A-Za-z_][A-Za-z0-9_]*(?:Error|Exception|Warning|Interrupt|Exit)"
    r"|Exception|StopIteration|StopAsyncIteration|GeneratorExit))"
    r"(?::\s?(?P<msg>.*))?$"
)

# Runtime frame:  File "path", line N, in context
_RUNTIME_FRAME_RE = re.compile(r'^\s+File "(?P<path>.+)", line (?P<line>\d+), in .+$')

# Syntax-stage frame (no ", in" clause):  File "path", line N
_SYNTAX_FRAME_RE = re.compile(r'^\s+File "(?P<path>.+)", line (?P<line>\d+)$')


class UnparseableTraceback(Exception):
    """stderr holds no recognizable traceback terminator line."""


class MissingDetail(Exception):
    """A non-Correct outcome was rendered without its failure detail."""


@dataclass(frozen=True)
class TracebackInfo:
    """What survives of a traceback after stripping the noise."""

    error_type: str
    line_no: Optional[int]
    line_code: Optional[str]
    message: str


def has_terminator(stderr: str) -> bool:
    """True if any stderr line is a traceback terminator."""
    return any(_TERMINATOR_RE.match(line.rstrip()) for line in stderr.splitlines())


def _is_candidate_frame(path: str) -> bool:
    return path == CANDIDATE_FILENAME or path.endswith("/" + CANDIDATE_FILENAME)


def parse_traceback(
    stderr: str, source: str, candidate_filename: str = CANDIDATE_FILENAME
) -> TracebackInfo:
    """Extract error type, line attribution, and message from stderr.

    The error type comes from the LAST terminator line (the exception the
    user actually sees, also for chained exceptions). Line attribution comes
    from the LAST frame located in the candidate's own file; frames in
    library files are skipped. line_code is the candidate source line at
    that line number, stripped of surrounding whitespace.

    Raises UnparseableTraceback when no terminator line is present.
    """
    lines = stderr.splitlines()
    terminator = None
    for line in lines:
        m = _TERMINATOR_RE.match(line.rstrip())
        if m:
            terminator = m
    if terminator is None:
        raise UnparseableTraceback("no traceback terminator line in stderr")

    line_no: Optional[int] = None
    for line in lines:
        m = _RUNTIME_FRAME_RE.match(line) or _SYNTAX_FRAME_RE.match(line)
        if m is None:
            continue
        path = m.group("path")
        if path == candidate_filename or path.endswith("/" + candidate_filename):
            line_no = int(m.group("line"))

    line_code: Optional[str] = None
    if line_no is not None:
        source_lines = source.splitlines()
        if 1 <= line_no <= len(source_lines):
            line_code = source_lines[line_no - 1].strip()
        else:
            # Keep the invariant 1 <= line_no <= len(source): a frame number
            # outside the file (can happen for EOF syntax errors) is dropped.
            line_no = None

    message = terminator.group("msg") or ""
    return TracebackInfo(
        error_type=terminator.group("etype"),
        line_no=line_no,
        line_code=line_code,
        message=message,
    )


def fault_from_stderr(stderr: str, source: str) -> RuntimeFault:
    """Parse stderr into a RuntimeFault, falling back to UnknownError.

    The fallback keeps the last nonempty stderr line as the message so the
    feedback still carries whatever the process managed to say.
    """
    try:
        info = parse_traceback(stderr, source)
        return RuntimeFault(
            error_type=info.error_type,
            line_no=info.line_no,
            line_code=info.line_code,
            message=info.message,
        )
    except UnparseableTraceback:
        last = ""
        for line in stderr.splitlines():
            if line.strip():
                last = line.strip()
        return RuntimeFault(error_type="UnknownError", line_no=None, line_code=None, message=last)


def _clip(text: str) -> str:
    if len(text) > FIELD_CAP:
        return text[:FIELD_CAP] + TRUNCATION_MARK
    return text


def render_feedback(outcome: OutcomeClass, detail: Optional[FailureDetail]) -> str:
    """Render the canonical feedback text for an execution outcome.

    Correct        -> "This code is correct."
    IntentError    -> mismatched input / expected / actual block
    ExecutionError -> error type, line attribution when known, message

    Raises MissingDetail when outcome is not Correct and detail is absent.
    """
    if outcome is OutcomeClass.CORRECT:
        return CORRECT_FEEDBACK
    if detail is None:
        raise MissingDetail(f"{outcome.value} feedback requires a failure detail")
    if outcome is OutcomeClass.INTENT_ERROR:
        assert isinstance(detail, IntentMismatch)
        return (
            "Intent error. With input:\n"
            f"{_clip(detail.input)}\n"
            "Expected output:\n"
            f"{_clip(detail.expected_output)}\n"
            "Actual output:\n"
            f"{_clip(detail.actual_output)}"
        )
    assert isinstance(detail, RuntimeFault)
    if detail.line_no is not None:
        head = f"{detail.error_type} at line {detail.line_no}: {_clip(detail.line_code or '')}"
    else:
        head = detail.error_type
    return f"{head}\nError message: {_clip(detail.message)}"
