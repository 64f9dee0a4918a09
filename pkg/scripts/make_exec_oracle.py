#!/usr/bin/env python3
"""Write the 20-program executor oracle corpus under testdata/exec_oracle/.

The expected outcome of every candidate below was derived by running the
program by hand against its tests and reading the result; the table is the
independent answer key the executor is judged against, under the limits
recorded in oracle.json (1500 ms wall, 64 KiB output cap).

Run from the repository root:  python3 scripts/make_exec_oracle.py
"""

import json
from pathlib import Path

OUT_DIR = Path(__file__).resolve().parent.parent / "testdata" / "exec_oracle"

LIMITS = {"wall_timeout_ms": 1500, "max_output_bytes": 65536, "workers": 4}

PROBLEMS = [
    {
        "problem_id": "po1",
        "description": "Read one integer from standard input and print twice its value.",
        "tests": [
            {"input": "3", "expected_output": "6"},
            {"input": "10", "expected_output": "20"},
        ],
    },
    {
        "problem_id": "po2",
        "description": "Read two space-separated integers from standard input and print their sum.",
        "tests": [{"input": "2 5", "expected_output": "7"}],
    },
    {
        "problem_id": "po3",
        "description": "Read one line from standard input and print it back unchanged.",
        "tests": [{"input": "hello", "expected_output": "hello"}],
    },
    {
        "problem_id": "po4",
        "description": "Read an integer n and print the integers n down to 1, one per line.",
        "tests": [{"input": "3", "expected_output": "3\n2\n1"}],
    },
]

# (problem_id, candidate_id, source, expected_outcome, expected_error_type)
CANDIDATES = [
    ("po1", 0, "print(int(input()) * 2)\n", "Correct", None),
    ("po1", 1, "print(int(input()) + 2)\n", "IntentError", None),
    ("po1", 2, "x = [1]\nprint(x[5])\n", "ExecutionError", "IndexError"),
    ("po1", 3, "print(int(input()) * 2\n", "ExecutionError", "SyntaxError"),
    ("po1", 4, "while True:\n    pass\n", "ExecutionError", "TimeoutError"),
    ("po1", 5, "n = int(input())\nprint(str(n * 2) + '  ')\n", "Correct", None),
    ("po2", 0, "a, b = map(int, input().split())\nprint(a + b)\n", "Correct", None),
    ("po2", 1, "print(a + b)\n", "ExecutionError", "NameError"),
    ("po2", 2, "a, b = map(int, input().split())\nprint(a * b)\n", "IntentError", None),
    ("po2", 3, "a, b = map(int, input().split(','))\nprint(a + b)\n", "ExecutionError", "ValueError"),
    ("po2", 4, "a, b = map(int, input().split())\nprint((a + b) // 0)\n", "ExecutionError", "ZeroDivisionError"),
    ("po3", 0, "print(input())\n", "Correct", None),
    ("po3", 1, "import sys\nsys.stdout.write(input() + '\\n')\n", "Correct", None),
    ("po3", 2, "print(input().upper())\n", "IntentError", None),
    (
        "po3", 3,
        "s = 'x' * 1000\nfor _ in range(500):\n    print(s)\n",
        "ExecutionError", "OutputLimitExceeded",
    ),
    ("po3", 4, "import sys\nline = input()\nsys.exit(3)\n", "ExecutionError", "UnknownError"),
    (
        "po3", 5,
        "import sys\nprint(input())\nsys.stderr.write('ValueError: fabricated\\n')\n",
        "ExecutionError", "ValueError",
    ),
    ("po4", 0, "n = int(input())\nfor i in range(n, 0, -1):\n    print(i)\n", "Correct", None),
    ("po4", 1, "n = int(input())\nfor i in range(n):\n    print(i)\n", "IntentError", None),
    ("po4", 2, "n = input()\nfor i in range(n, 0, -1):\n    print(i)\n", "ExecutionError", "TypeError"),
]


def main() -> None:
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    with open(OUT_DIR / "problems.jsonl", "w", encoding="utf-8") as fh:
        for p in PROBLEMS:
            fh.write(json.dumps(p, ensure_ascii=False) + "\n")
    with open(OUT_DIR / "candidates.jsonl", "w", encoding="utf-8") as fh:
        for pid, cid, source, _, _ in CANDIDATES:
            fh.write(
                json.dumps(
                    {"problem_id": pid, "candidate_id": cid, "source": source},
                    ensure_ascii=False,
                )
                + "\n"
            )
    oracle = {
        "limits": LIMITS,
        "expected": [
            {
                "problem_id": pid,
                "candidate_id": cid,
                "outcome": outcome,
                "error_type": etype,
            }
            for pid, cid, _, outcome, etype in CANDIDATES
        ],
    }
    (OUT_DIR / "oracle.json").write_text(
        json.dumps(oracle, indent=2) + "\n", encoding="utf-8"
    )
    print(f"wrote {len(PROBLEMS)} problems, {len(CANDIDATES)} candidates -> {OUT_DIR}")


if __name__ == "__main__":
    main()
