from itertools import combinations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rankef.core import OutcomeClass, Problem, ScoredCandidate, TestCase
from rankef.evaluation import (
    EmptyList,
    EvalReport,
    InvalidCounts,
    MissingTruth,
    RankedList,
    evaluate_rankings,
    filter_solved,
    pass_at_k_random,
    pass_at_k_ranked,
    rank_candidates,
    truth_from_records,
    write_report,
)
from rankef.nn import SeedStream

C, I, E = OutcomeClass.CORRECT, OutcomeClass.INTENT_ERROR, OutcomeClass.EXECUTION_ERROR


def enumerate_pass_at_k(n: int, c: int, k: int) -> float:
    """Independent oracle: literally enumerate every k-subset of candidates."""
    labels = [True] * c + [False] * (n - c)
    total = misses = 0
    for subset in combinations(range(n), k):
        total += 1
        if not any(labels[i] for i in subset):
            misses += 1
    return 1.0 - misses / total


class TestRankCandidates:
    def test_descending(self):
        ranked = rank_candidates(
            [ScoredCandidate("p", 0, 0.9), ScoredCandidate("p", 1, 0.1)]
        )
        assert ranked.candidate_ids == (0, 1)
        assert ranked.scores == (0.9, 0.1)

    def test_tie_breaks_by_ascending_id(self):
        ranked = rank_candidates(
            [ScoredCandidate("p", 1, 0.5), ScoredCandidate("p", 0, 0.5)]
        )
        assert ranked.candidate_ids == (0, 1)

    def test_single_candidate(self):
        ranked = rank_candidates([ScoredCandidate("p", 3, 0.2)])
        assert ranked.candidate_ids == (3,)

    def test_empty_raises(self):
        with pytest.raises(EmptyList):
            rank_candidates([])

    def test_mixed_problems_rejected(self):
        with pytest.raises(ValueError):
            rank_candidates([ScoredCandidate("p", 0, 0.5), ScoredCandidate("q", 0, 0.5)])

    @settings(max_examples=50)
    @given(st.lists(st.floats(0, 1), min_size=1, max_size=12))
    def test_permutation_with_non_increasing_scores(self, scores):
        ranked = rank_candidates(
            [ScoredCandidate("p", i, s) for i, s in enumerate(scores)]
        )
        assert sorted(ranked.candidate_ids) == list(range(len(scores)))
        assert all(a >= b for a, b in zip(ranked.scores, ranked.scores[1:]))


class TestPassAtKRandom:
    def test_no_correct_gives_zero(self):
        for k in (1, 2, 5):
            assert pass_at_k_random(100, 0, k) == 0.0

    def test_half(self):
        assert pass_at_k_random(2, 1, 1) == 0.5

    def test_5_2_3_is_point_nine(self):
        # oracle: of the C(5,3)=10 subsets, 9 contain a correct candidate
        assert enumerate_pass_at_k(5, 2, 3) == 0.9
        assert pass_at_k_random(5, 2, 3) == 0.9

    def test_exhaustive_small_cases(self):
        for n in range(1, 9):
            for c in range(n + 1):
                for k in range(1, n + 1):
                    assert pass_at_k_random(n, c, k) == enumerate_pass_at_k(n, c, k), (n, c, k)

    def test_invalid_counts(self):
        for n, c, k in ((5, 6, 1), (5, -1, 1), (5, 2, 0), (5, 2, 6)):
            with pytest.raises(InvalidCounts):
                pass_at_k_random(n, c, k)

    @settings(max_examples=60)
    @given(st.integers(1, 12), st.data())
    def test_monotone_in_k_and_c(self, n, data):
        c = data.draw(st.integers(0, n))
        ks = sorted(data.draw(st.lists(st.integers(1, n), min_size=2, max_size=4)))
        vals = [pass_at_k_random(n, c, k) for k in ks]
        assert all(a <= b + 1e-15 for a, b in zip(vals, vals[1:]))
        if c < n:
            assert pass_at_k_random(n, c, ks[0]) <= pass_at_k_random(n, c + 1, ks[0]) + 1e-15


class TestPassAtKRanked:
    def _ranked(self, ids):
        return RankedList("p", tuple(ids), tuple(1.0 - 0.1 * i for i in range(len(ids))))

    def test_correct_at_rank_one(self):
        assert pass_at_k_ranked(self._ranked([0, 1]), {0: C, 1: I}, 1) == 1

    def test_first_correct_at_rank_three(self):
        truth = {0: I, 1: E, 2: C}
        assert pass_at_k_ranked(self._ranked([0, 1, 2]), truth, 2) == 0
        assert pass_at_k_ranked(self._ranked([0, 1, 2]), truth, 5) == 1

    def test_no_correct(self):
        truth = {0: I, 1: E}
        for k in (1, 2, 5):
            assert pass_at_k_ranked(self._ranked([0, 1]), truth, k) == 0

    def test_missing_truth(self):
        with pytest.raises(MissingTruth):
            pass_at_k_ranked(self._ranked([0]), {}, 1)


class TestFilterSolved:
    def _problem(self, pid):
        return Problem(pid, "d", (TestCase("", ""),))

    def test_all_wrong_dropped(self):
        problems = [self._problem("p")]
        assert filter_solved(problems, {"p": {0: I, 1: I}}) == []

    def test_one_correct_kept(self):
        problems = [self._problem("p")]
        truth = {"p": {i: I for i in range(99)} | {99: C}}
        assert filter_solved(problems, truth) == problems

    def test_empty_input(self):
        assert filter_solved([], {}) == []


class TestEvaluate:
    def _setup(self, n_problems=4, n_cands=4):
        problems = [
            Problem(f"p{i}", "d", (TestCase("", ""),), difficulty="introductory")
            for i in range(n_problems)
        ]
        truth = {
            p.problem_id: {j: (C if j == 1 else I) for j in range(n_cands)}
            for p in problems
        }
        return problems, truth

    def test_oracle_scores_give_perfect_pass1(self):
        problems, truth = self._setup()
        rankings = {
            p.problem_id: rank_candidates(
                [
                    ScoredCandidate(p.problem_id, j, 1.0 if truth[p.problem_id][j] is C else 0.0)
                    for j in range(4)
                ]
            )
            for p in problems
        }
        report = evaluate_rankings(problems, rankings, truth, ks=[1, 2, 5], solved_only=True)
        assert report.ranked_pass_at_k[1] == 1.0
        assert report.n_problems == 4
        assert report.random_pass_at_k[1] == pytest.approx(0.25)

    def test_constant_scores_select_lowest_ids(self):
        problems, truth = self._setup(n_problems=1)
        rankings = {
            "p0": rank_candidates([ScoredCandidate("p0", j, 0.5) for j in range(4)])
        }
        assert rankings["p0"].candidate_ids == (0, 1, 2, 3)
        report = evaluate_rankings(problems[:1], rankings, truth, [1, 2], solved_only=False)
        assert report.ranked_pass_at_k[1] == 0.0  # correct candidate sits at id 1
        assert report.ranked_pass_at_k[2] == 1.0

    def test_random_scores_approach_closed_form(self):
        """Monte-Carlo: mean ranked Pass@k over shuffles ~ unbiased estimator."""
        n, c = 6, 2
        truth = {0: C, 1: C, 2: I, 3: I, 4: E, 5: I}
        stream = SeedStream(99)
        hits = {1: 0, 2: 0}
        trials = 10_000
        for _ in range(trials):
            order = stream.permutation(n)
            ranked = RankedList("p", tuple(order), tuple(1.0 - i * 0.01 for i in range(n)))
            for k in hits:
                hits[k] += pass_at_k_ranked(ranked, truth, k)
        for k in hits:
            assert hits[k] / trials == pytest.approx(pass_at_k_random(n, c, k), abs=0.01)

    def test_per_difficulty_breakdown_and_report_files(self, tmp_path):
        problems = [
            Problem("a", "d", (TestCase("", ""),), difficulty="introductory"),
            Problem("b", "d", (TestCase("", ""),), difficulty="competition"),
        ]
        truth = {"a": {0: C, 1: I}, "b": {0: I, 1: C}}
        rankings = {
            "a": rank_candidates([ScoredCandidate("a", 0, 0.9), ScoredCandidate("a", 1, 0.2)]),
            "b": rank_candidates([ScoredCandidate("b", 0, 0.9), ScoredCandidate("b", 1, 0.2)]),
        }
        report = evaluate_rankings(problems, rankings, truth, [1], solved_only=False, config_hash="ch")
        assert report.per_difficulty["introductory"]["ranked"][1] == 1.0
        assert report.per_difficulty["competition"]["ranked"][1] == 0.0
        assert report.ranked_pass_at_k[1] == 0.5
        write_report(report, tmp_path / "r.json", tmp_path / "r.txt")
        text = (tmp_path / "r.txt").read_text()
        assert "config: ch" in text and "[competition]" in text
        import json

        payload = json.loads((tmp_path / "r.json").read_text())
        assert payload["config_hash"] == "ch"
        assert payload["metrics"]["1"]["ranked_pass_at_k"] == 0.5

    def test_ranked_pass_at_k_nondecreasing_in_k(self):
        problems, truth = self._setup()
        stream = SeedStream(3)
        rankings = {
            p.problem_id: rank_candidates(
                [ScoredCandidate(p.problem_id, j, stream.uniform(()).item()) for j in range(4)]
            )
            for p in problems
        }
        report = evaluate_rankings(problems, rankings, truth, [1, 2, 3, 4], solved_only=False)
        vals = [report.ranked_pass_at_k[k] for k in (1, 2, 3, 4)]
        assert all(a <= b for a, b in zip(vals, vals[1:]))

    def test_missing_ranking_raises(self):
        problems, truth = self._setup(n_problems=1)
        with pytest.raises(MissingTruth):
            evaluate_rankings(problems, {}, truth, [1], solved_only=False)


def test_truth_from_records(tiny_corpus):
    from rankef.sandbox import ExecLimits, batch_execute

    problems, candidates = tiny_corpus
    records = batch_execute(problems, candidates, ExecLimits(workers=2))
    truth = truth_from_records(records)
    assert truth["t1"][0] is C
    assert truth["t1"][1] is I
    assert truth["t1"][2] is E
    assert truth["t2"][0] is C
