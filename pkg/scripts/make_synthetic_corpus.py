#!/usr/bin/env python3
"""Generate the bundled synthetic corpus under testdata/synthetic/.

58 stdin/stdout problems (8 task families parametrized by a constant, plus
two fixed string tasks), each with 4-8 candidate programs mixing correct
solutions, intent errors (clean run, wrong output), and execution errors
(runtime faults). Error variants carry recurring lexical markers (offset,
bug_scale, marker, missing_total, cache) shared across problems, so a small
ranker can learn outcome cues that transfer to held-out problems. A few
problems ship with no correct candidate at all to exercise solved-problem
filtering.

The generator executes every candidate and refuses to write a corpus whose
actual outcomes disagree with the plan. Deterministic for a fixed seed.

Run from the repository root:  python3 scripts/make_synthetic_corpus.py
"""

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from rankef import core  # noqa: E402
from rankef.nn import SeedStream  # noqa: E402
from rankef.sandbox import ExecLimits, batch_execute  # noqa: E402

OUT_DIR = Path(__file__).resolve().parent.parent / "testdata" / "synthetic"
SEED = 7
K_VALUES = range(2, 9)
DIFFICULTIES = ("introductory", "interview", "competition")

WORDS = ("spark", "delta", "orbit", "mango", "pixel", "flint", "cedar", "quartz")


def _unary(expr_template, k):
    """Candidate bodies for read-one-int tasks; {expr} computes the answer."""
    expr = expr_template.format(n="value", k=k)
    expr_n = expr_template.format(n="n", k=k)
    return {
        "correct": [
            f"value = int(input())\nprint({expr})\n",
            f"n = int(input())\nresult = {expr_n}\nprint(result)\n",
            f"print({expr_template.format(n='int(input())', k=k)})\n",
        ],
        "intent": [
            f"value = int(input())\noffset = 1\nprint({expr} + offset)\n",
            f"value = int(input())\nbug_scale = 2\nprint(({expr}) * bug_scale)\n",
            f"value = int(input())\noffset = 2\nprint({expr} - offset)\n",
        ],
        "exec": [
            f"value = int(input())\nprint({expr} + missing_total)\n",
            f"value = int(input())\ncache = [value]\nprint(cache[10])\n",
        ],
    }


def _pair(expr_template, k):
    expr = expr_template.format(a="a", b="b", k=k)
    return {
        "correct": [
            f"a, b = map(int, input().split())\nprint({expr})\n",
            f"a, b = map(int, input().split())\nresult = {expr}\nprint(result)\n",
            f"parts = input().split()\na = int(parts[0])\nb = int(parts[1])\nprint({expr})\n",
        ],
        "intent": [
            f"a, b = map(int, input().split())\noffset = 1\nprint({expr} + offset)\n",
            f"a, b = map(int, input().split())\nbug_scale = 2\nprint(({expr}) * bug_scale)\n",
            f"a, b = map(int, input().split())\noffset = 3\nprint({expr} - offset)\n",
        ],
        "exec": [
            f"a, b = map(int, input().split())\nprint({expr} + missing_total)\n",
            f"a, b = map(int, input().split())\ncache = [a, b]\nprint(cache[10])\n",
        ],
    }


FAMILIES = {
    "scale": {
        "description": "Read one integer from standard input and print the integer multiplied by {k}.",
        "answer": lambda x, k: x * k,
        "variants": lambda k: _unary("{n} * {k}", k),
        "inputs": "unary",
    },
    "shift": {
        "description": "Read one integer from standard input and print the integer increased by {k}.",
        "answer": lambda x, k: x + k,
        "variants": lambda k: _unary("{n} + {k}", k),
        "inputs": "unary",
    },
    "drop": {
        "description": "Read one integer from standard input and print the integer decreased by {k}.",
        "answer": lambda x, k: x - k,
        "variants": lambda k: _unary("{n} - {k}", k),
        "inputs": "unary",
    },
    "pair_sum": {
        "description": "Read two space-separated integers from standard input and print their sum plus {k}.",
        "answer": lambda xy, k: xy[0] + xy[1] + k,
        "variants": lambda k: _pair("{a} + {b} + {k}", k),
        "inputs": "pair",
    },
    "pair_max": {
        "description": "Read two space-separated integers from standard input and print the larger one multiplied by {k}.",
        "answer": lambda xy, k: max(xy) * k,
        "variants": lambda k: _pair("max({a}, {b}) * {k}", k),
        "inputs": "pair",
    },
    "pair_min": {
        "description": "Read two space-separated integers from standard input and print the smaller one plus {k}.",
        "answer": lambda xy, k: min(xy) + k,
        "variants": lambda k: _pair("min({a}, {b}) + {k}", k),
        "inputs": "pair",
    },
    "pair_gap": {
        "description": "Read two space-separated integers from standard input and print their absolute difference multiplied by {k}.",
        "answer": lambda xy, k: abs(xy[0] - xy[1]) * k,
        "variants": lambda k: _pair("abs({a} - {b}) * {k}", k),
        "inputs": "pair",
    },
    "repeat_word": {
        "description": "Read a single word from standard input and print it repeated {k} times with no separator.",
        "answer": lambda w, k: w * k,
        "variants": lambda k: {
            "correct": [
                f"print(input() * {k})\n",
                f"word = input()\nprint(word * {k})\n",
            ],
            "intent": [
                f"word = input()\noffset = 1\nprint(word * ({k} + offset))\n",
                f"word = input()\nmarker = '!'\nprint(word * {k} + marker)\n",
            ],
            "exec": [
                f"word = input()\nprint(word * missing_total)\n",
                f"word = input()\ncache = [word]\nprint(cache[10] * {k})\n",
            ],
        },
        "inputs": "word",
    },
}

SINGLES = {
    "word_length": {
        "description": "Read a single word from standard input and print the number of characters it contains.",
        "answer": lambda w, k: str(len(w)),
        "variants": lambda k: {
            "correct": [
                "print(len(input()))\n",
                "word = input()\nprint(len(word))\n",
            ],
            "intent": [
                "word = input()\noffset = 1\nprint(len(word) + offset)\n",
                "word = input()\nbug_scale = 2\nprint(len(word) * bug_scale)\n",
            ],
            "exec": [
                "word = input()\nprint(len(word) + missing_total)\n",
                "word = input()\ncache = [word]\nprint(len(cache[10]))\n",
            ],
        },
        "inputs": "word",
    },
    "reverse_word": {
        "description": "Read a single word from standard input and print it reversed.",
        "answer": lambda w, k: w[::-1],
        "variants": lambda k: {
            "correct": [
                "print(input()[::-1])\n",
                "word = input()\nprint(word[::-1])\n",
            ],
            "intent": [
                "word = input()\nmarker = '!'\nprint(word[::-1] + marker)\n",
                "word = input()\noffset = 1\nprint(word[offset:][::-1])\n",
            ],
            "exec": [
                "word = input()\nprint(word[::-1] + missing_total)\n",
                "word = input()\ncache = [word]\nprint(cache[10][::-1])\n",
            ],
        },
        "inputs": "word",
    },
}


def _draw_inputs(kind: str, stream: SeedStream):
    if kind == "unary":
        values = [10 + stream.randint(40), 51 + stream.randint(40)]
        return [(str(v), v) for v in values]
    if kind == "pair":
        pairs = []
        for _ in range(2):
            x = 1 + stream.randint(30)
            y = 1 + stream.randint(30)
            if x == y:
                y += 1
            pairs.append((f"{x} {y}", (x, y)))
        return pairs
    first = WORDS[stream.randint(len(WORDS))]
    second = WORDS[stream.randint(len(WORDS))]
    if second == first:
        second = WORDS[(WORDS.index(first) + 1) % len(WORDS)]
    return [(w, w) for w in (first, second)]


def build_corpus(seed: int = SEED):
    stream = SeedStream(seed)
    problems = []
    candidates = []
    planted = []
    specs = [
        (family, k) for family in FAMILIES for k in K_VALUES
    ] + [(name, 0) for name in SINGLES]

    # A few problems get no correct candidate, to exercise solved filtering.
    unsolved_stream = stream.split()
    unsolved = {unsolved_stream.randint(len(specs)) for _ in range(3)}

    for index, (family_name, k) in enumerate(specs):
        family = FAMILIES.get(family_name) or SINGLES[family_name]
        pid = f"syn{index:03d}"
        tests = []
        for raw, parsed in _draw_inputs(family["inputs"], stream.split()):
            answer = family["answer"](parsed, k)
            tests.append({"input": raw, "expected_output": str(answer)})
        problems.append(
            {
                "problem_id": pid,
                "description": family["description"].format(k=k),
                "tests": tests,
                "difficulty": DIFFICULTIES[index % len(DIFFICULTIES)],
            }
        )

        pool = family["variants"](k)
        pick = stream.split()
        n_correct = 0 if index in unsolved else 1 + pick.randint(len(pool["correct"]))
        n_intent = 1 + pick.randint(len(pool["intent"]))
        n_exec = 1 + pick.randint(len(pool["exec"]))
        # Keep every problem at 4-8 candidates.
        while n_correct + n_intent + n_exec < 4:
            if n_intent < len(pool["intent"]):
                n_intent += 1
            elif n_exec < len(pool["exec"]):
                n_exec += 1
            else:
                n_correct += 1
        chosen = (
            [("Correct", src) for src in pool["correct"][:n_correct]]
            + [("IntentError", src) for src in pool["intent"][:n_intent]]
            + [("ExecutionError", src) for src in pool["exec"][:n_exec]]
        )
        # Interleave outcomes by shuffling so candidate_id carries no signal.
        order = pick.permutation(len(chosen))
        for cid, idx in enumerate(order):
            outcome, source = chosen[idx]
            candidates.append(
                {"problem_id": pid, "candidate_id": cid, "source": source}
            )
            planted.append(
                {"problem_id": pid, "candidate_id": cid, "outcome": outcome}
            )
    return problems, candidates, planted


def verify(problems, candidates, planted) -> None:
    parsed_problems = [core.problem_from_dict(p) for p in problems]
    parsed_candidates = [core.candidate_from_dict(c, 0) for c in candidates]
    records = batch_execute(
        parsed_problems,
        parsed_candidates,
        ExecLimits(wall_timeout_ms=5000, max_output_bytes=1 << 20, workers=8),
    )
    by_key = {(r.problem_id, r.candidate_id): r.outcome.value for r in records}
    mismatches = [
        (p, by_key[(p["problem_id"], p["candidate_id"])])
        for p in planted
        if by_key[(p["problem_id"], p["candidate_id"])] != p["outcome"]
    ]
    if mismatches:
        for plan, got in mismatches[:10]:
            print(f"planted {plan} but executor says {got}", file=sys.stderr)
        raise SystemExit("corpus plan does not match execution; not writing")


def main() -> None:
    problems, candidates, planted = build_corpus()
    verify(problems, candidates, planted)
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    with open(OUT_DIR / "problems.jsonl", "w", encoding="utf-8") as fh:
        for p in problems:
            fh.write(json.dumps(p, ensure_ascii=False) + "\n")
    with open(OUT_DIR / "candidates.jsonl", "w", encoding="utf-8") as fh:
        for c in candidates:
            fh.write(json.dumps(c, ensure_ascii=False) + "\n")
    (OUT_DIR / "planted.json").write_text(
        json.dumps(planted, indent=2) + "\n", encoding="utf-8"
    )
    n_cands = len(candidates)
    counts = {}
    for p in planted:
        counts[p["outcome"]] = counts.get(p["outcome"], 0) + 1
    print(f"wrote {len(problems)} problems, {n_cands} candidates -> {OUT_DIR}")
    print(f"planted outcomes: {counts}")


if __name__ == "__main__":
    main()
