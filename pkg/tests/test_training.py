import json

import numpy as np
import pytest

from rankef import autodiff as ad
from rankef.core import OutcomeClass, RankSample
from rankef.dataset import CLS_VARIANT, GEN_VARIANT, build_vocab, encode
from rankef.model import RankerModel, combined_loss_hard, make_batch, score_batch
from rankef.nn import adam_step
from rankef.training import (
    DivergedLoss,
    EmptyDataset,
    HardSharing,
    IntermediateFineTuning,
    SoftSharing,
    _check_finite,
    load_ranker,
    save_ranker,
    train,
)
from tests.test_model import TINY, tiny_samples


@pytest.fixture(scope="module")
def vocab():
    return build_vocab(tiny_samples(), max_vocab=200)


@pytest.fixture(scope="module")
def pairs(vocab):
    return [
        (
            encode(s, CLS_VARIANT, vocab, TINY.max_seq_len, TINY.max_target_len),
            encode(s, GEN_VARIANT, vocab, TINY.max_seq_len, TINY.max_target_len),
        )
        for s in tiny_samples()
    ]


def test_empty_dataset_raises(vocab):
    with pytest.raises(EmptyDataset):
        train(HardSharing(), [], [], TINY, vocab, steps=1)


def test_check_finite_raises():
    with pytest.raises(DivergedLoss):
        _check_finite(float("nan"), 3, "loss")
    with pytest.raises(DivergedLoss):
        _check_finite(float("inf"), 3, "loss")
    _check_finite(1.0, 3, "loss")


def test_same_seed_bit_identical_checkpoints(tmp_path, vocab, pairs):
    for name in ("a", "b"):
        ranker = train(
            HardSharing(), pairs, pairs, TINY, vocab,
            steps=30, batch_size=2, lr=1e-3, seed=123, eval_interval=10,
        )
        save_ranker(tmp_path / name, ranker, config_hash="same")
    assert (tmp_path / "a" / "params.bin").read_bytes() == (
        tmp_path / "b" / "params.bin"
    ).read_bytes()
    assert (tmp_path / "a" / "manifest.json").read_text() == (
        tmp_path / "b" / "manifest.json"
    ).read_text()


def test_different_seed_changes_checkpoint(tmp_path, vocab, pairs):
    blobs = []
    for seed in (1, 2):
        ranker = train(HardSharing(), pairs, [], TINY, vocab, steps=5, batch_size=2, seed=seed)
        save_ranker(tmp_path / f"s{seed}", ranker, config_hash="x")
        blobs.append((tmp_path / f"s{seed}" / "params.bin").read_bytes())
    assert blobs[0] != blobs[1]


def test_inf_phases_freeze_the_other_head(vocab, pairs):
    events = []

    def snap(event, model):
        events.append(
            (
                event,
                {n: t.data.copy() for n, t in model.store.subset(("cls.",)).items()},
                {n: t.data.copy() for n, t in model.store.subset(("dec.",)).items()},
            )
        )

    train(
        IntermediateFineTuning(steps_per_phase=4, rounds=2),
        pairs, [], TINY, vocab,
        batch_size=2, lr=1e-3, seed=5, phase_callback=snap,
    )
    by_event = [(e, cls_p, dec_p) for e, cls_p, dec_p in events]
    assert [e for e, _, _ in by_event] == [
        "gen:start", "gen:end", "cls:start", "cls:end",
        "gen:start", "gen:end", "cls:start", "cls:end",
    ]
    for i in (0, 4):  # generation-only phases: cls head bit-identical
        _, cls_before, dec_before = by_event[i]
        _, cls_after, dec_after = by_event[i + 1]
        for name in cls_before:
            np.testing.assert_array_equal(cls_before[name], cls_after[name])
        assert any(
            not np.array_equal(dec_before[n], dec_after[n]) for n in dec_before
        ), "decoder should move during a gen phase"
    for i in (2, 6):  # classification-only phases: decoder bit-identical
        _, cls_before, dec_before = by_event[i]
        _, cls_after, dec_after = by_event[i + 1]
        for name in dec_before:
            np.testing.assert_array_equal(dec_before[name], dec_after[name])
        assert any(
            not np.array_equal(cls_before[n], cls_after[n]) for n in cls_before
        ), "cls head should move during a cls phase"


def test_all_strategies_complete(vocab, pairs, tmp_path):
    for strategy in (
        HardSharing(),
        SoftSharing(sharing_coeff=1.0),
        IntermediateFineTuning(steps_per_phase=3, rounds=1),
    ):
        log = tmp_path / f"{strategy.name}.jsonl"
        ranker = train(
            strategy, pairs, pairs, TINY, vocab,
            steps=6, batch_size=2, seed=9, eval_interval=3, log_path=log,
        )
        assert ranker.strategy_name == strategy.name
        rows = [json.loads(l) for l in log.read_text().splitlines()]
        assert all(np.isfinite(r["total"]) for r in rows)
        assert rows[-1]["val_accuracy"] is not None


def test_training_log_schema(vocab, pairs, tmp_path):
    log = tmp_path / "log.jsonl"
    train(
        SoftSharing(), pairs, pairs, TINY, vocab,
        steps=4, batch_size=2, seed=2, eval_interval=2, log_path=log,
    )
    rows = [json.loads(l) for l in log.read_text().splitlines()]
    assert len(rows) == 4
    expected_keys = {"step", "phase", "cls_loss", "gen_loss", "total", "penalty", "val_accuracy"}
    assert all(set(r) == expected_keys for r in rows)
    assert rows[0]["penalty"] == 0.0  # identical encoder init


def test_soft_sharing_pulls_encoders_together(vocab, pairs, tmp_path):
    """After 200 steps, the penalty with coeff=1 sits below the coeff=0 drift."""
    finals = {}
    for coeff in (0.0, 1.0):
        log = tmp_path / f"pen{coeff}.jsonl"
        train(
            SoftSharing(sharing_coeff=coeff), pairs, [], TINY, vocab,
            steps=200, batch_size=4, lr=1e-3, seed=31, eval_interval=1000, log_path=log,
        )
        rows = [json.loads(l) for l in log.read_text().splitlines()]
        finals[coeff] = rows[-1]["penalty"]
    assert finals[1.0] < finals[0.0]


def test_overfit_single_batch_capacity(vocab):
    """Hard training on one batch of 8 drives combined loss under 0.05."""
    samples = (tiny_samples() * 2)[:8]
    pairs8 = [
        (
            encode(s, CLS_VARIANT, vocab, TINY.max_seq_len, TINY.max_target_len),
            encode(s, GEN_VARIANT, vocab, TINY.max_seq_len, TINY.max_target_len),
        )
        for s in samples
    ]
    batch = make_batch(pairs8)
    model = RankerModel(TINY, len(vocab), seed=0)
    model.train_mode = True
    final = None
    for step in range(2000):
        model.store.zero_grads()
        total, _, _ = combined_loss_hard(model, batch, 0.9)
        final = total.item()
        if final < 0.05:
            break
        ad.backward(total)
        grads = {n: t.grad for n, t in model.store.items() if t.grad is not None}
        adam_step(model.store, grads, lr=2e-3)
    assert final < 0.05, f"combined loss stuck at {final}"


def test_save_load_roundtrip_hard(tmp_path, vocab, pairs):
    ranker = train(HardSharing(), pairs, [], TINY, vocab, steps=5, batch_size=2, seed=4)
    save_ranker(tmp_path / "ckpt", ranker, config_hash="h")
    loaded = load_ranker(tmp_path / "ckpt")
    assert loaded.strategy_name == "hard"
    assert loaded.vocab_hash == vocab.content_hash()
    samples = tiny_samples()
    before = [s.score for s in score_batch(ranker.scoring_model, vocab, samples)]
    after = [s.score for s in score_batch(loaded.scoring_model, vocab, samples)]
    assert before == after


def test_save_load_roundtrip_soft(tmp_path, vocab, pairs):
    ranker = train(SoftSharing(), pairs, [], TINY, vocab, steps=5, batch_size=2, seed=4)
    save_ranker(tmp_path / "ckpt", ranker, config_hash="h")
    loaded = load_ranker(tmp_path / "ckpt")
    assert loaded.strategy_name == "soft"
    assert loaded.gen_model is not loaded.cls_model
    assert loaded.gen_model.with_decoder and not loaded.gen_model.with_cls_head
    samples = tiny_samples()
    before = [s.score for s in score_batch(ranker.cls_model, vocab, samples)]
    after = [s.score for s in score_batch(loaded.cls_model, vocab, samples)]
    assert before == after


def test_best_checkpoint_by_validation(vocab, pairs):
    ranker = train(
        HardSharing(), pairs, pairs, TINY, vocab,
        steps=20, batch_size=2, lr=1e-3, seed=11, eval_interval=5,
    )
    assert ranker.best_val_accuracy is not None
    assert 0.0 <= ranker.best_val_accuracy <= 1.0
