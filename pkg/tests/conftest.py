import sys
from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parent.parent
TESTDATA = REPO_ROOT / "testdata"

sys.path.insert(0, str(REPO_ROOT / "src"))

from rankef.core import Candidate, Problem, TestCase  # noqa: E402


@pytest.fixture(scope="session")
def testdata_dir() -> Path:
    return TESTDATA


@pytest.fixture
def tiny_corpus():
    """Three small problems with one candidate of each outcome class."""
    problems = [
        Problem(
            problem_id="t1",
            description="Read one integer and print twice its value.",
            tests=(TestCase("3", "6"), TestCase("5", "10")),
            difficulty="introductory",
        ),
        Problem(
            problem_id="t2",
            description="Read one line and print it unchanged.",
            tests=(TestCase("hello", "hello"),),
            difficulty="interview",
        ),
    ]
    candidates = [
        Candidate("t1", 0, "print(int(input()) * 2)\n"),
        Candidate("t1", 1, "print(int(input()) + 1)\n"),
        Candidate("t1", 2, "x = [1]\nprint(x[5])\n"),
        Candidate("t2", 0, "print(input())\n"),
    ]
    return problems, candidates


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo the acceptance pass/fail lines uncaptured at the end of the run."""
    try:
        from tests import test_acceptance
    except ImportError:
        return
    lines = getattr(test_acceptance, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
