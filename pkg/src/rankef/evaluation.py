"""Candidate ranking and Pass@k evaluation.

Ground-truth outcomes are used strictly as the metric's answer key; the
scores being evaluated were produced from descriptions and source text
alone. The random baseline is the closed-form unbiased estimator
1 - C(n-c, k) / C(n, k) rather than literal resampling.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import comb
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .core import OutcomeClass, Problem, ScoredCandidate


class EmptyList(Exception):
    """No scores were provided for ranking."""


class InvalidCounts(Exception):
    """(n, c, k) violate 0 <= c <= n and 1 <= k <= n."""


class MissingTruth(Exception):
    """A ranked candidate has no ground-truth outcome."""


@dataclass(frozen=True)
class RankedList:
    """Candidates of one problem ordered by descending score.

    Ties break by ascending candidate_id, which keeps ranking fully
    deterministic.
    """

    problem_id: str
    candidate_ids: tuple[int, ...]
    scores: tuple[float, ...]


def rank_candidates(scores: Sequence[ScoredCandidate]) -> RankedList:
    """Stable descending sort of one problem's scores."""
    if not scores:
        raise EmptyList("cannot rank an empty score list")
    problem_ids = {s.problem_id for s in scores}
    if len(problem_ids) != 1:
        raise ValueError(f"scores span multiple problems: {sorted(problem_ids)}")
    ordered = sorted(scores, key=lambda s: (-s.score, s.candidate_id))
    return RankedList(
        problem_id=scores[0].problem_id,
        candidate_ids=tuple(s.candidate_id for s in ordered),
        scores=tuple(s.score for s in ordered),
    )


def pass_at_k_random(n: int, c: int, k: int) -> float:
    """Unbiased probability that k randomly drawn candidates include a correct one.

    Computed as 1 - C(n-c, k) / C(n, k) with exact integer combinatorics, so
    there is no intermediate overflow or rounding before the final division.
    """
    if not (0 <= c <= n) or not (1 <= k <= n):
        raise InvalidCounts(f"invalid counts n={n} c={c} k={k}")
    return 1.0 - comb(n - c, k) / comb(n, k)


def pass_at_k_ranked(
    ranked: RankedList, truth: Mapping[int, OutcomeClass], k: int
) -> int:
    """1 iff any of the top min(k, n) ranked candidates is Correct."""
    for cid in ranked.candidate_ids[: min(k, len(ranked.candidate_ids))]:
        outcome = truth.get(cid)
        if outcome is None:
            raise MissingTruth(f"no outcome for candidate {cid} of {ranked.problem_id}")
        if outcome is OutcomeClass.CORRECT:
            return 1
    return 0


def filter_solved(
    problems: Sequence[Problem], truth: Mapping[str, Mapping[int, OutcomeClass]]
) -> list[Problem]:
    """Keep only problems with at least one Correct candidate."""
    return [
        p
        for p in problems
        if any(o is OutcomeClass.CORRECT for o in truth.get(p.problem_id, {}).values())
    ]


@dataclass
class EvalReport:
    """Averaged Pass@k for the ranked protocol and the random baseline."""

    ks: list[int]
    random_pass_at_k: dict[int, float]
    ranked_pass_at_k: dict[int, float]
    n_problems: int
    solved_only: bool
    per_difficulty: dict[str, dict[str, dict[int, float]]] = field(default_factory=dict)
    config_hash: str = ""

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "solved_only": self.solved_only,
            "n_problems": self.n_problems,
            "metrics": {
                str(k): {
                    "random_pass_at_k": self.random_pass_at_k[k],
                    "ranked_pass_at_k": self.ranked_pass_at_k[k],
                }
                for k in self.ks
            },
            "per_difficulty": {
                diff: {
                    str(k): {
                        "random_pass_at_k": vals["random"][k],
                        "ranked_pass_at_k": vals["ranked"][k],
                    }
                    for k in self.ks
                }
                for diff, vals in self.per_difficulty.items()
            },
        }

    def to_text(self) -> str:
        lines = []
        if self.config_hash:
            lines.append(f"config: {self.config_hash}")
        lines += [
            f"problems evaluated: {self.n_problems}"
            + ("  (solved problems only)" if self.solved_only else ""),
            "",
            f"{'k':>4}  {'random':>10}  {'ranked':>10}",
        ]
        for k in self.ks:
            lines.append(
                f"{k:>4}  {self.random_pass_at_k[k]:>10.4f}  {self.ranked_pass_at_k[k]:>10.4f}"
            )
        for diff in sorted(self.per_difficulty):
            lines.append("")
            lines.append(f"[{diff}]")
            lines.append(f"{'k':>4}  {'random':>10}  {'ranked':>10}")
            for k in self.ks:
                vals = self.per_difficulty[diff]
                lines.append(f"{k:>4}  {vals['random'][k]:>10.4f}  {vals['ranked'][k]:>10.4f}")
        return "\n".join(lines) + "\n"


def _mean(values: Iterable[float]) -> float:
    values = list(values)
    return sum(values) / len(values) if values else 0.0


def evaluate_rankings(
    problems: Sequence[Problem],
    rankings: Mapping[str, RankedList],
    truth: Mapping[str, Mapping[int, OutcomeClass]],
    ks: Sequence[int],
    solved_only: bool,
    config_hash: str = "",
) -> EvalReport:
    """Average ranked Pass@k over problems and attach the random baseline.

    Problems are folded in problem_id order so aggregation never depends on
    input ordering. Problems missing a ranking are an error; the random
    baseline derives from each problem's (n candidates, c correct).
    """
    chosen = filter_solved(problems, truth) if solved_only else list(problems)
    chosen = sorted(chosen, key=lambda p: p.problem_id)
    ks = list(ks)

    per_problem: dict[str, dict[str, dict[int, float]]] = {}
    for p in chosen:
        ranked = rankings.get(p.problem_id)
        if ranked is None:
            raise MissingTruth(f"no ranking for problem {p.problem_id}")
        outcomes = truth.get(p.problem_id, {})
        n = len(ranked.candidate_ids)
        c = sum(1 for o in outcomes.values() if o is OutcomeClass.CORRECT)
        per_problem[p.problem_id] = {
            "random": {k: pass_at_k_random(n, c, min(k, n)) for k in ks},
            "ranked": {k: float(pass_at_k_ranked(ranked, outcomes, k)) for k in ks},
        }

    report = EvalReport(
        ks=ks,
        random_pass_at_k={
            k: _mean(v["random"][k] for v in per_problem.values()) for k in ks
        },
        ranked_pass_at_k={
            k: _mean(v["ranked"][k] for v in per_problem.values()) for k in ks
        },
        n_problems=len(chosen),
        solved_only=solved_only,
        config_hash=config_hash,
    )

    difficulties = sorted({p.difficulty for p in chosen if p.difficulty})
    for diff in difficulties:
        ids = [p.problem_id for p in chosen if p.difficulty == diff]
        report.per_difficulty[diff] = {
            "random": {k: _mean(per_problem[i]["random"][k] for i in ids) for k in ks},
            "ranked": {k: _mean(per_problem[i]["ranked"][k] for i in ids) for k in ks},
        }
    return report


def write_report(report: EvalReport, json_path: str | Path, text_path: str | Path) -> None:
    Path(json_path).write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    Path(text_path).write_text(report.to_text(), encoding="utf-8")


def truth_from_records(records) -> dict[str, dict[int, OutcomeClass]]:
    """Index execution outcomes as problem_id -> candidate_id -> outcome."""
    truth: dict[str, dict[int, OutcomeClass]] = {}
    for r in records:
        truth.setdefault(r.problem_id, {})[r.candidate_id] = r.outcome
    return truth
