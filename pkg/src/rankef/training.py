"""Training loops for the three parameter-sharing strategies.

Hard sharing: one model, both losses on the same minibatch, one optimizer
step on the weighted sum. Soft sharing: two models (one per task) stepped
jointly on the weighted sum plus the encoder-pulling penalty. Intermediate
fine-tuning: alternating generation-only and classification-only phases,
ending on a classification phase.

Every run is deterministic for a given seed: batch order, initialization,
and checkpoint selection (best validation classification accuracy, earliest
step on ties) all derive from splitmix streams.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import autodiff as ad
from .dataset import EncodedSample, Vocabulary
from .model import (
    Batch,
    ModelConfig,
    RankerModel,
    cls_loss,
    combined_loss_hard,
    combined_loss_soft,
    gen_loss,
    make_batch,
)
from .nn import ParamStore, SeedStream, adam_step, load_checkpoint, save_checkpoint

EncodedPair = tuple[EncodedSample, EncodedSample]  # (CLS variant, GEN variant)

DEFAULT_LEARNING_RATE = 1e-4


class EmptyDataset(Exception):
    """No training samples were provided."""


class DivergedLoss(Exception):
    """A loss became non-finite; training aborts with a diagnostic."""


@dataclass(frozen=True)
class HardSharing:
    name = "hard"


@dataclass(frozen=True)
class SoftSharing:
    name = "soft"
    sharing_coeff: float = 1.0


@dataclass(frozen=True)
class IntermediateFineTuning:
    name = "inf"
    steps_per_phase: int = 1000
    rounds: int = 3

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.steps_per_phase < 1:
            raise ValueError("steps_per_phase must be >= 1")


TrainStrategy = Union[HardSharing, SoftSharing, IntermediateFineTuning]


@dataclass
class TrainedRanker:
    """A trained model pair plus the metadata needed to reuse it safely."""

    config: ModelConfig
    vocab_hash: str
    strategy_name: str
    cls_model: RankerModel
    gen_model: Optional[RankerModel]
    best_val_accuracy: Optional[float]

    @property
    def scoring_model(self) -> RankerModel:
        return self.cls_model


class _BatchIterator:
    """Deterministic shuffled minibatches; reshuffles every epoch."""

    def __init__(self, pairs: Sequence[EncodedPair], batch_size: int, stream: SeedStream):
        self._pairs = pairs
        self._batch_size = batch_size
        self._stream = stream
        self._order: list[int] = []
        self._cursor = 0

    def next_batch(self, n_classes: int) -> Batch:
        if self._cursor >= len(self._order):
            self._order = self._stream.permutation(len(self._pairs))
            self._cursor = 0
        chosen = self._order[self._cursor : self._cursor + self._batch_size]
        self._cursor += len(chosen)
        return make_batch([self._pairs[i] for i in chosen], n_classes=n_classes)


def _validation_accuracy(
    model: RankerModel, val_pairs: Sequence[EncodedPair], n_classes: int, chunk: int = 128
) -> Optional[float]:
    if not val_pairs:
        return None
    hits = 0
    for start in range(0, len(val_pairs), chunk):
        batch = make_batch(val_pairs[start : start + chunk], n_classes=n_classes)
        logits = model.cls_logits(batch.cls_ids)
        hits += int((logits.data.argmax(axis=-1) == batch.labels).sum())
    return hits / len(val_pairs)


class _Logger:
    def __init__(self, path: Optional[Path]):
        self._fh = open(path, "w", encoding="utf-8") if path else None

    def log(self, **fields):
        if self._fh is None:
            return
        self._fh.write(json.dumps(fields) + "\n")

    def close(self):
        if self._fh is not None:
            self._fh.close()


def _check_finite(value: float, step: int, what: str) -> None:
    if not np.isfinite(value):
        raise DivergedLoss(f"{what} became {value} at step {step}")


def train(
    strategy: TrainStrategy,
    train_pairs: Sequence[EncodedPair],
    val_pairs: Sequence[EncodedPair],
    config: ModelConfig,
    vocab: Vocabulary,
    steps: int = 500,
    batch_size: int = 16,
    lr: float = DEFAULT_LEARNING_RATE,
    seed: int = 0,
    eval_interval: int = 50,
    log_path: Optional[Path] = None,
    phase_callback: Optional[Callable[[str, RankerModel], None]] = None,
) -> TrainedRanker:
    """Run one training strategy to completion and return the best model.

    For intermediate fine-tuning the schedule length is rounds * 2 *
    steps_per_phase and the steps argument is ignored; phase_callback, when
    given, is invoked as callback("gen:start"/"gen:end"/"cls:start"/
    "cls:end", model) at INF phase boundaries (other strategies have no
    phases and never call it). The returned model carries the parameters of
    the checkpoint with the highest validation classification accuracy
    (final parameters when no validation data is given).
    """
    if not train_pairs:
        raise EmptyDataset("no training samples")
    root = SeedStream(seed)
    model_seed = root.next_u64()
    batches = _BatchIterator(train_pairs, batch_size, root.split())
    logger = _Logger(log_path)
    try:
        if isinstance(strategy, HardSharing):
            return _train_hard(
                strategy, batches, val_pairs, config, vocab, steps, lr,
                model_seed, eval_interval, logger,
            )
        if isinstance(strategy, SoftSharing):
            return _train_soft(
                strategy, batches, val_pairs, config, vocab, steps, lr,
                model_seed, eval_interval, logger,
            )
        if isinstance(strategy, IntermediateFineTuning):
            return _train_inf(
                strategy, batches, val_pairs, config, vocab, lr,
                model_seed, eval_interval, logger, phase_callback,
            )
        raise TypeError(f"unknown strategy: {strategy!r}")
    finally:
        logger.close()


class _BestTracker:
    """Keeps the parameter snapshot with the strictly best validation accuracy."""

    def __init__(self):
        self.accuracy: Optional[float] = None
        self.snapshots: Optional[list[dict[str, np.ndarray]]] = None

    def offer(self, accuracy: Optional[float], stores: list[ParamStore]) -> None:
        if accuracy is None:
            return
        if self.accuracy is None or accuracy > self.accuracy:
            self.accuracy = accuracy
            self.snapshots = [s.clone_values() for s in stores]

    def restore(self, stores: list[ParamStore]) -> None:
        if self.snapshots is None:
            return
        for store, snap in zip(stores, self.snapshots):
            store.load_values(snap)


def _train_hard(
    strategy, batches, val_pairs, config, vocab, steps, lr, model_seed, eval_interval, logger
) -> TrainedRanker:
    model = RankerModel(config, len(vocab), model_seed)
    model.train_mode = True
    best = _BestTracker()
    for step in range(1, steps + 1):
        batch = batches.next_batch(config.n_classes)
        model.store.zero_grads()
        total, c, g = combined_loss_hard(model, batch, config.lambda_weight)
        _check_finite(total.item(), step, "combined loss")
        ad.backward(total)
        grads = {n: t.grad for n, t in model.store.items() if t.grad is not None}
        adam_step(model.store, grads, lr)
        val_acc = None
        if step % eval_interval == 0 or step == steps:
            model.train_mode = False
            val_acc = _validation_accuracy(model, val_pairs, config.n_classes)
            model.train_mode = True
            best.offer(val_acc, [model.store])
        logger.log(
            step=step, phase="hard", cls_loss=c.item(), gen_loss=g.item(),
            total=total.item(), penalty=None, val_accuracy=val_acc,
        )
    best.restore([model.store])
    model.train_mode = False
    return TrainedRanker(
        config=config, vocab_hash=vocab.content_hash(), strategy_name="hard",
        cls_model=model, gen_model=model, best_val_accuracy=best.accuracy,
    )


def _train_soft(
    strategy, batches, val_pairs, config, vocab, steps, lr, model_seed, eval_interval, logger
) -> TrainedRanker:
    # Same seed for both models: their encoders start identical, so the
    # sharing penalty contributes exactly zero at step 0.
    cls_model = RankerModel(config, len(vocab), model_seed, with_decoder=False)
    gen_model = RankerModel(config, len(vocab), model_seed, with_cls_head=False)
    cls_model.train_mode = True
    gen_model.train_mode = True
    best = _BestTracker()
    for step in range(1, steps + 1):
        batch = batches.next_batch(config.n_classes)
        cls_model.store.zero_grads()
        gen_model.store.zero_grads()
        total, c, g, pen = combined_loss_soft(
            cls_model, gen_model, batch, config.lambda_weight, strategy.sharing_coeff
        )
        _check_finite(total.item(), step, "soft combined loss")
        ad.backward(total)
        for m in (cls_model, gen_model):
            grads = {n: t.grad for n, t in m.store.items() if t.grad is not None}
            adam_step(m.store, grads, lr)
        val_acc = None
        if step % eval_interval == 0 or step == steps:
            cls_model.train_mode = False
            val_acc = _validation_accuracy(cls_model, val_pairs, config.n_classes)
            cls_model.train_mode = True
            best.offer(val_acc, [cls_model.store, gen_model.store])
        logger.log(
            step=step, phase="soft", cls_loss=c.item(), gen_loss=g.item(),
            total=total.item(), penalty=pen.item(), val_accuracy=val_acc,
        )
    best.restore([cls_model.store, gen_model.store])
    cls_model.train_mode = False
    gen_model.train_mode = False
    return TrainedRanker(
        config=config, vocab_hash=vocab.content_hash(), strategy_name="soft",
        cls_model=cls_model, gen_model=gen_model, best_val_accuracy=best.accuracy,
    )


def _train_inf(
    strategy, batches, val_pairs, config, vocab, lr, model_seed, eval_interval, logger,
    phase_callback=None,
) -> TrainedRanker:
    model = RankerModel(config, len(vocab), model_seed)
    model.train_mode = True
    best = _BestTracker()
    step = 0
    total_steps = strategy.rounds * 2 * strategy.steps_per_phase
    notify = phase_callback or (lambda event, m: None)
    for _ in range(strategy.rounds):
        for phase in ("gen", "cls"):
            subset = model.gen_task_params() if phase == "gen" else model.cls_task_params()
            notify(f"{phase}:start", model)
            for _ in range(strategy.steps_per_phase):
                step += 1
                batch = batches.next_batch(config.n_classes)
                model.store.zero_grads()
                if phase == "gen":
                    loss = gen_loss(model, batch)
                    c_val, g_val = None, loss.item()
                else:
                    loss = cls_loss(model, batch)
                    c_val, g_val = loss.item(), None
                _check_finite(loss.item(), step, f"{phase} loss")
                ad.backward(loss)
                grads = {n: t.grad for n, t in subset.items() if t.grad is not None}
                adam_step(model.store, grads, lr)
                val_acc = None
                if step % eval_interval == 0 or step == total_steps:
                    model.train_mode = False
                    val_acc = _validation_accuracy(model, val_pairs, config.n_classes)
                    model.train_mode = True
                    best.offer(val_acc, [model.store])
                logger.log(
                    step=step, phase=phase, cls_loss=c_val, gen_loss=g_val,
                    total=loss.item(), penalty=None, val_accuracy=val_acc,
                )
            notify(f"{phase}:end", model)
    best.restore([model.store])
    model.train_mode = False
    return TrainedRanker(
        config=config, vocab_hash=vocab.content_hash(), strategy_name="inf",
        cls_model=model, gen_model=model, best_val_accuracy=best.accuracy,
    )


# ---------------------------------------------------------------------------
# Persistence


def save_ranker(directory: str | Path, ranker: TrainedRanker, config_hash: str) -> None:
    """Write the checkpoint; soft-sharing models get m1./m2. name prefixes."""
    extra = {
        "strategy": ranker.strategy_name,
        "model_config": ranker.config.to_dict(),
        "vocab_size": ranker.cls_model.vocab_size,
        "best_val_accuracy": ranker.best_val_accuracy,
    }
    if ranker.strategy_name == "soft":
        merged = ParamStore()
        for name, t in ranker.cls_model.store.items():
            merged.add("m1." + name, t.data)
        for name, t in ranker.gen_model.store.items():
            merged.add("m2." + name, t.data)
        save_checkpoint(directory, merged, config_hash, ranker.vocab_hash, extra)
    else:
        save_checkpoint(directory, ranker.cls_model.store, config_hash, ranker.vocab_hash, extra)


def load_ranker(directory: str | Path) -> TrainedRanker:
    store, manifest = load_checkpoint(directory)
    extra = manifest["extra"]
    config = ModelConfig.from_dict(extra["model_config"])
    vocab_size = extra["vocab_size"]
    strategy_name = extra["strategy"]
    if strategy_name == "soft":
        cls_model = RankerModel(config, vocab_size, seed=0, with_decoder=False)
        gen_model = RankerModel(config, vocab_size, seed=0, with_cls_head=False)
        cls_model.store.load_values(
            {n[len("m1.") :]: t.data for n, t in store.items() if n.startswith("m1.")}
        )
        gen_model.store.load_values(
            {n[len("m2.") :]: t.data for n, t in store.items() if n.startswith("m2.")}
        )
    else:
        cls_model = RankerModel(config, vocab_size, seed=0)
        cls_model.store.load_values({n: t.data for n, t in store.items()})
        gen_model = cls_model
    return TrainedRanker(
        config=config,
        vocab_hash=manifest["vocab_hash"],
        strategy_name=strategy_name,
        cls_model=cls_model,
        gen_model=gen_model,
        best_val_accuracy=extra.get("best_val_accuracy"),
    )
