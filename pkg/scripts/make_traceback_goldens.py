#!/usr/bin/env python3
"""Regenerate the golden traceback corpus under testdata/tracebacks/.

Each case is a small program run under the reference interpreter; we commit
the program (.py), the captured stderr (.stderr), and the hand-derived
expected parse (.expected.json). The expectations below were derived by
reading the captures, not by running the parser, so the test suite checks
the parser against an independent oracle.

The KeyboardInterrupt capture is synthesized (a bare terminator line) since
delivering a deterministic SIGINT mid-run is not worth the flakiness.

Run from the repository root:  python3 scripts/make_traceback_goldens.py
"""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

OUT_DIR = Path(__file__).resolve().parent.parent / "testdata" / "tracebacks"

# name -> (source, expected {error_type, line_no, line_code, message})
CASES = {
    "index_error": (
        "x = [1]\nprint(x[5])\n",
        {
            "error_type": "IndexError",
            "line_no": 2,
            "line_code": "print(x[5])",
            "message": "list index out of range",
        },
    ),
    "name_error": (
        "print(undefined_name)\n",
        {
            "error_type": "NameError",
            "line_no": 1,
            "line_code": "print(undefined_name)",
            "message": "name 'undefined_name' is not defined",
        },
    ),
    "type_error": (
        "n = 1\nprint(n + \"a\")\n",
        {
            "error_type": "TypeError",
            "line_no": 2,
            "line_code": "print(n + \"a\")",
            "message": "unsupported operand type(s) for +: 'int' and 'str'",
        },
    ),
    "zero_division": (
        "a = 10\nb = 0\nprint(a / b)\n",
        {
            "error_type": "ZeroDivisionError",
            "line_no": 3,
            "line_code": "print(a / b)",
            "message": "division by zero",
        },
    ),
    "value_error": (
        "int(\"abc\")\n",
        {
            "error_type": "ValueError",
            "line_no": 1,
            "line_code": "int(\"abc\")",
            "message": "invalid literal for int() with base 10: 'abc'",
        },
    ),
    "key_error": (
        "d = {}\nprint(d[\"k\"])\n",
        {
            "error_type": "KeyError",
            "line_no": 2,
            "line_code": "print(d[\"k\"])",
            "message": "'k'",
        },
    ),
    "attribute_error": (
        "x = 5\nx.append(3)\n",
        {
            "error_type": "AttributeError",
            "line_no": 2,
            "line_code": "x.append(3)",
            "message": "'int' object has no attribute 'append'",
        },
    ),
    "syntax_error": (
        "def f(:\n    pass\n",
        {
            "error_type": "SyntaxError",
            "line_no": 1,
            "line_code": "def f(:",
            "message": "invalid syntax",
        },
    ),
    "indentation_error": (
        "def f():\nprint(1)\n",
        {
            "error_type": "IndentationError",
            "line_no": 2,
            "line_code": "print(1)",
            "message": "expected an indented block after function definition on line 1",
        },
    ),
    "assertion_bare": (
        "assert False\n",
        {
            "error_type": "AssertionError",
            "line_no": 1,
            "line_code": "assert False",
            "message": "",
        },
    ),
    "recursion_error": (
        "def f():\n    return f()\nf()\n",
        {
            "error_type": "RecursionError",
            "line_no": 2,
            "line_code": "return f()",
            "message": "maximum recursion depth exceeded",
        },
    ),
    "library_frames": (
        "import json\njson.loads(\"{bad\")\n",
        {
            "error_type": "json.decoder.JSONDecodeError",
            "line_no": 2,
            "line_code": "json.loads(\"{bad\")",
            "message": "Expecting property name enclosed in double quotes: line 1 column 2 (char 1)",
        },
    ),
    "chained_exception": (
        "try:\n    1 / 0\nexcept ZeroDivisionError:\n    raise ValueError(\"secondary failure\")\n",
        {
            "error_type": "ValueError",
            "line_no": 4,
            "line_code": "raise ValueError(\"secondary failure\")",
            "message": "secondary failure",
        },
    ),
    "function_frames": (
        "def helper(v):\n    raise OverflowError(\"too big: %d\" % v)\nhelper(99)\n",
        {
            "error_type": "OverflowError",
            "line_no": 2,
            "line_code": "raise OverflowError(\"too big: %d\" % v)",
            "message": "too big: 99",
        },
    ),
    "unbound_local": (
        "def f():\n    x += 1\nf()\n",
        {
            "error_type": "UnboundLocalError",
            "line_no": 2,
            "line_code": "x += 1",
            "message": "local variable 'x' referenced before assignment",
        },
    ),
    "stop_iteration": (
        "it = iter([])\nnext(it)\n",
        {
            "error_type": "StopIteration",
            "line_no": 2,
            "line_code": "next(it)",
            "message": "",
        },
    ),
    "module_not_found": (
        "import nonexistent_module_xyz\n",
        {
            "error_type": "ModuleNotFoundError",
            "line_no": 1,
            "line_code": "import nonexistent_module_xyz",
            "message": "No module named 'nonexistent_module_xyz'",
        },
    ),
}

SYNTHETIC_CASES = {
    "keyboard_interrupt": (
        "while True:\n    pass\n",
        "KeyboardInterrupt\n",
        {
            "error_type": "KeyboardInterrupt",
            "line_no": None,
            "line_code": None,
            "message": "",
        },
    ),
}


def capture_stderr(source: str) -> str:
    with tempfile.TemporaryDirectory() as scratch:
        path = Path(scratch) / "main.py"
        path.write_text(source, encoding="utf-8")
        proc = subprocess.run(
            [sys.executable, "-I", "main.py"],
            cwd=scratch,
            capture_output=True,
            text=True,
            timeout=30,
        )
        if proc.returncode == 0:
            raise RuntimeError("golden program unexpectedly succeeded")
        return proc.stderr


def main() -> None:
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    for name, (source, expected) in sorted(CASES.items()):
        stderr = capture_stderr(source)
        if expected["error_type"] not in stderr:
            raise RuntimeError(
                f"{name}: interpreter output drifted, "
                f"{expected['error_type']} not in capture:\n{stderr}"
            )
        (OUT_DIR / f"{name}.py").write_text(source, encoding="utf-8")
        (OUT_DIR / f"{name}.stderr").write_text(stderr, encoding="utf-8")
        (OUT_DIR / f"{name}.expected.json").write_text(
            json.dumps(expected, indent=2) + "\n", encoding="utf-8"
        )
        print(f"wrote {name}")
    for name, (source, stderr, expected) in sorted(SYNTHETIC_CASES.items()):
        (OUT_DIR / f"{name}.py").write_text(source, encoding="utf-8")
        (OUT_DIR / f"{name}.stderr").write_text(stderr, encoding="utf-8")
        (OUT_DIR / f"{name}.expected.json").write_text(
            json.dumps(expected, indent=2) + "\n", encoding="utf-8"
        )
        print(f"wrote {name} (synthetic)")
    print(f"{len(CASES) + len(SYNTHETIC_CASES)} golden cases in {OUT_DIR}")


if __name__ == "__main__":
    main()
