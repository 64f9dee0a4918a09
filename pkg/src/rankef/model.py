"""The ranker: shared encoder, classification head, feedback decoder.

The encoder reads [CLS]/[GEN]-tagged token sequences; a two-linear-layer
MLP head with a ReLU in between classifies from the hidden state at
position 0, and a causal decoder with cross-attention generates feedback
text. Token embeddings are shared between encoder and decoder.

Loss surface:
  cls_loss            classification cross-entropy
  gen_loss            teacher-forced feedback cross-entropy
  combined_loss_hard  (1 - lambda) * cls + lambda * gen, one shared model
  sharing_penalty     global Euclidean norm between two encoders' parameters
  combined_loss_soft  two models pulled together through the penalty
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeMismatch, Tensor
from .dataset import (
    BOS,
    CLS_VARIANT,
    EOS,
    GEN_VARIANT,
    PAD,
    EncodedSample,
    Vocabulary,
    detokenize,
    encode,
)
from .core import OutcomeClass, RankSample, ScoredCandidate
from .nn import ParamStore, SeedStream, xavier_uniform

_NEG_INF = -1e9


class VocabMismatch(Exception):
    """Checkpoint vocabulary hash differs from the corpus vocabulary."""


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 64
    n_heads: int = 2
    n_encoder_layers: int = 2
    n_decoder_layers: int = 2
    ffn_dim: int = 128
    n_classes: int = 3
    lambda_weight: float = 0.9
    max_seq_len: int = 512
    max_target_len: int = 128
    dropout: float = 0.0

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")
        if not 0.0 <= self.lambda_weight <= 1.0:
            raise ValueError("lambda_weight must lie in [0, 1]")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.n_classes not in (2, 3):
            raise ValueError("n_classes must be 2 (binary ablation) or 3")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)

    def content_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()


def _init_linear(
    store: ParamStore, stream: SeedStream, name: str, d_in: int, d_out: int, bias: bool = True
):
    store.add(f"{name}.w", xavier_uniform(stream.split(), d_in, d_out))
    if bias:
        store.add(f"{name}.b", np.zeros(d_out))


def _init_layer_norm(store: ParamStore, name: str, dim: int):
    store.add(f"{name}.g", np.ones(dim))
    store.add(f"{name}.b", np.zeros(dim))


def _init_attention(store: ParamStore, stream: SeedStream, name: str, d: int):
    # No bias on the key projection: softmax cancels a constant shift of the
    # keys, so such a bias would be a dead parameter.
    _init_linear(store, stream, f"{name}.wq", d, d)
    _init_linear(store, stream, f"{name}.wk", d, d, bias=False)
    _init_linear(store, stream, f"{name}.wv", d, d)
    _init_linear(store, stream, f"{name}.wo", d, d)


class RankerModel:
    """One encoder plus whichever heads this model owns.

    Hard sharing and intermediate fine-tuning use a single model with both
    heads; soft sharing builds two models, one owning the classification
    head and one owning the decoder. Encoder parameters are always
    initialized first with per-tensor derived seeds, so two models built
    from the same seed start with identical encoders.
    """

    def __init__(
        self,
        config: ModelConfig,
        vocab_size: int,
        seed: int,
        with_cls_head: bool = True,
        with_decoder: bool = True,
    ):
        self.config = config
        self.vocab_size = vocab_size
        self.with_cls_head = with_cls_head
        self.with_decoder = with_decoder
        self.store = ParamStore()
        self.train_mode = False
        root = SeedStream(seed)
        init_stream = root.split()
        self._drop_stream = root.split()
        self._build_params(init_stream)

    def _build_params(self, stream: SeedStream):
        cfg = self.config
        store = self.store
        store.add("enc.tok_emb", stream.split().normal((self.vocab_size, cfg.d_model), std=0.02))
        store.add("enc.pos_emb", stream.split().normal((cfg.max_seq_len, cfg.d_model), std=0.02))
        for i in range(cfg.n_encoder_layers):
            base = f"enc.l{i}"
            _init_layer_norm(store, f"{base}.ln1", cfg.d_model)
            _init_attention(store, stream, f"{base}.attn", cfg.d_model)
            _init_layer_norm(store, f"{base}.ln2", cfg.d_model)
            _init_linear(store, stream, f"{base}.ffn.fc1", cfg.d_model, cfg.ffn_dim)
            _init_linear(store, stream, f"{base}.ffn.fc2", cfg.ffn_dim, cfg.d_model)
        _init_layer_norm(store, "enc.ln_f", cfg.d_model)

        if self.with_cls_head:
            _init_linear(store, stream, "cls.fc1", cfg.d_model, cfg.d_model)
            _init_linear(store, stream, "cls.fc2", cfg.d_model, cfg.n_classes)

        if self.with_decoder:
            store.add(
                "dec.pos_emb", stream.split().normal((cfg.max_target_len, cfg.d_model), std=0.02)
            )
            for i in range(cfg.n_decoder_layers):
                base = f"dec.l{i}"
                _init_layer_norm(store, f"{base}.ln1", cfg.d_model)
                _init_attention(store, stream, f"{base}.self_attn", cfg.d_model)
                _init_layer_norm(store, f"{base}.ln2", cfg.d_model)
                _init_attention(store, stream, f"{base}.cross_attn", cfg.d_model)
                _init_layer_norm(store, f"{base}.ln3", cfg.d_model)
                _init_linear(store, stream, f"{base}.ffn.fc1", cfg.d_model, cfg.ffn_dim)
                _init_linear(store, stream, f"{base}.ffn.fc2", cfg.ffn_dim, cfg.d_model)
            _init_layer_norm(store, "dec.ln_f", cfg.d_model)
            _init_linear(store, stream, "dec.out", cfg.d_model, self.vocab_size)

    # -- param views --------------------------------------------------------

    def encoder_params(self) -> dict[str, Tensor]:
        return self.store.subset(("enc.",))

    def cls_task_params(self) -> dict[str, Tensor]:
        return self.store.subset(("enc.", "cls."))

    def gen_task_params(self) -> dict[str, Tensor]:
        return self.store.subset(("enc.", "dec."))

    # -- building blocks ----------------------------------------------------

    def _maybe_drop(self, x: Tensor) -> Tensor:
        rate = self.config.dropout
        if not self.train_mode or rate <= 0.0:
            return x
        return ad.dropout(x, rate, self._drop_stream.uniform(x.data.shape))

    def _linear(self, name: str, x: Tensor) -> Tensor:
        out = ad.matmul(x, self.store[f"{name}.w"])
        if f"{name}.b" in self.store:
            out = ad.add(out, self.store[f"{name}.b"])
        return out

    def _layer_norm(self, name: str, x: Tensor) -> Tensor:
        return ad.layer_norm(x, self.store[f"{name}.g"], self.store[f"{name}.b"])

    def _split_heads(self, x: Tensor, batch: int, seq: int) -> Tensor:
        cfg = self.config
        head_dim = cfg.d_model // cfg.n_heads
        return ad.transpose(
            ad.reshape(x, (batch, seq, cfg.n_heads, head_dim)), (0, 2, 1, 3)
        )

    def _merge_heads(self, x: Tensor, batch: int, seq: int) -> Tensor:
        return ad.reshape(ad.transpose(x, (0, 2, 1, 3)), (batch, seq, self.config.d_model))

    def _attention(
        self, name: str, x: Tensor, memory: Tensor, mask: Optional[np.ndarray]
    ) -> Tensor:
        b, t_q = x.data.shape[0], x.data.shape[1]
        t_k = memory.data.shape[1]
        q = self._split_heads(self._linear(f"{name}.wq", x), b, t_q)
        k = self._split_heads(self._linear(f"{name}.wk", memory), b, t_k)
        v = self._split_heads(self._linear(f"{name}.wv", memory), b, t_k)
        ctx = ad.scaled_dot_attention(q, k, v, mask=mask)
        return self._linear(f"{name}.wo", self._merge_heads(ctx, b, t_q))

    # -- forward passes -----------------------------------------------------

    def encode_ids(self, input_ids: np.ndarray) -> tuple[Tensor, np.ndarray]:
        """Run the encoder; returns hidden states and the additive pad mask."""
        ids = np.asarray(input_ids)
        b, t = ids.shape
        if t > self.config.max_seq_len:
            raise ShapeMismatch(f"sequence length {t} exceeds max_seq_len")
        pad_mask = np.where(ids == PAD, _NEG_INF, 0.0)[:, None, None, :]
        x = ad.add(
            ad.embedding_lookup(self.store["enc.tok_emb"], ids),
            ad.embedding_lookup(self.store["enc.pos_emb"], np.arange(t)),
        )
        x = self._maybe_drop(x)
        for i in range(self.config.n_encoder_layers):
            base = f"enc.l{i}"
            normed = self._layer_norm(f"{base}.ln1", x)
            attn = self._attention(f"{base}.attn", normed, normed, pad_mask)
            x = ad.add(x, self._maybe_drop(attn))
            h = self._layer_norm(f"{base}.ln2", x)
            h = self._linear(f"{base}.ffn.fc2", ad.relu(self._linear(f"{base}.ffn.fc1", h)))
            x = ad.add(x, self._maybe_drop(h))
        return self._layer_norm("enc.ln_f", x), pad_mask

    def cls_logits(self, input_ids: np.ndarray) -> Tensor:
        """MLP head over the encoder state at position 0 (the tag slot)."""
        if not self.with_cls_head:
            raise ValueError("this model owns no classification head")
        enc_out, _ = self.encode_ids(input_ids)
        h0 = ad.select_position(enc_out, 0)
        hidden = ad.relu(self._linear("cls.fc1", h0))
        return self._linear("cls.fc2", hidden)

    def decode_ids(self, enc_out: Tensor, enc_pad_mask: np.ndarray, target_in: np.ndarray) -> Tensor:
        """Causal decoder over teacher-forced target prefixes; returns logits."""
        if not self.with_decoder:
            raise ValueError("this model owns no decoder")
        tgt = np.asarray(target_in)
        b, t = tgt.shape
        if t > self.config.max_target_len:
            raise ShapeMismatch(f"target length {t} exceeds max_target_len")
        causal = np.triu(np.full((t, t), _NEG_INF), k=1)[None, None, :, :]
        tgt_pad = np.where(tgt == PAD, _NEG_INF, 0.0)[:, None, None, :]
        self_mask = causal + tgt_pad
        x = ad.add(
            ad.embedding_lookup(self.store["enc.tok_emb"], tgt),
            ad.embedding_lookup(self.store["dec.pos_emb"], np.arange(t)),
        )
        x = self._maybe_drop(x)
        for i in range(self.config.n_decoder_layers):
            base = f"dec.l{i}"
            normed = self._layer_norm(f"{base}.ln1", x)
            sa = self._attention(f"{base}.self_attn", normed, normed, self_mask)
            x = ad.add(x, self._maybe_drop(sa))
            ca = self._attention(
                f"{base}.cross_attn", self._layer_norm(f"{base}.ln2", x), enc_out, enc_pad_mask
            )
            x = ad.add(x, self._maybe_drop(ca))
            h = self._layer_norm(f"{base}.ln3", x)
            h = self._linear(f"{base}.ffn.fc2", ad.relu(self._linear(f"{base}.ffn.fc1", h)))
            x = ad.add(x, self._maybe_drop(h))
        return self._linear("dec.out", self._layer_norm("dec.ln_f", x))


# ---------------------------------------------------------------------------
# Batching


@dataclass(frozen=True)
class Batch:
    """Padded id matrices for one step; CLS and GEN rows cover the same samples."""

    cls_ids: np.ndarray
    gen_ids: np.ndarray
    labels: np.ndarray
    target_ids: np.ndarray


def _pad_matrix(rows: Sequence[tuple[int, ...]], width: int) -> np.ndarray:
    out = np.full((len(rows), width), PAD, dtype=np.int64)
    for i, row in enumerate(rows):
        out[i, : len(row)] = row
    return out


def make_batch(
    pairs: Sequence[tuple[EncodedSample, EncodedSample]], n_classes: int = 3
) -> Batch:
    """Assemble padded arrays from (CLS-encoded, GEN-encoded) sample pairs."""
    cls_rows = [p[0].input_ids for p in pairs]
    gen_rows = [p[1].input_ids for p in pairs]
    tgt_rows = [p[0].target_ids for p in pairs]
    labels = np.array([p[0].label for p in pairs], dtype=np.int64)
    if n_classes == 2:
        labels = np.where(labels == 0, 0, 1)
    in_width = max(len(r) for r in cls_rows)
    tgt_width = max(len(r) for r in tgt_rows)
    return Batch(
        cls_ids=_pad_matrix(cls_rows, in_width),
        gen_ids=_pad_matrix(gen_rows, in_width),
        labels=labels,
        target_ids=_pad_matrix(tgt_rows, tgt_width),
    )


# ---------------------------------------------------------------------------
# Losses


def cls_loss(model: RankerModel, batch: Batch) -> Tensor:
    """Mean cross-entropy of the classification head over the batch."""
    logits = model.cls_logits(batch.cls_ids)
    return ad.cross_entropy(logits, batch.labels, ignore_id=-1)


def gen_loss(model: RankerModel, batch: Batch) -> Tensor:
    """Mean token-level cross-entropy of teacher-forced feedback decoding.

    Positions whose gold token is [PAD] are excluded from the mean.
    """
    enc_out, enc_mask = model.encode_ids(batch.gen_ids)
    logits = model.decode_ids(enc_out, enc_mask, batch.target_ids[:, :-1])
    return ad.cross_entropy(logits, batch.target_ids[:, 1:], ignore_id=PAD)


def combined_loss_hard(
    model: RankerModel, batch: Batch, lambda_weight: float
) -> tuple[Tensor, Tensor, Tensor]:
    """(1 - lambda) * cls + lambda * gen on the same samples.

    Returns (total, cls, gen); the boundary weights 0 and 1 reproduce the
    single-task losses to exact floating-point equality.
    """
    c = cls_loss(model, batch)
    g = gen_loss(model, batch)
    total = ad.add(ad.scale(c, 1.0 - lambda_weight), ad.scale(g, lambda_weight))
    return total, c, g


def sharing_penalty(params_a: dict[str, Tensor], params_b: dict[str, Tensor]) -> Tensor:
    """Single global Euclidean norm of the difference between two parameter sets.

    Both inputs must hold the same names and shapes (the encoder subsets,
    including embeddings and positional encodings). The norm is taken over
    all coordinates jointly, not per matrix, and gradients flow into both
    sides.
    """
    if sorted(params_a) != sorted(params_b):
        raise ShapeMismatch("parameter sets name mismatch")
    total: Optional[Tensor] = None
    for name in params_a:
        a, b = params_a[name], params_b[name]
        if a.data.shape != b.data.shape:
            raise ShapeMismatch(f"parameter {name} shape mismatch")
        diff = ad.sub(a, b)
        sq = ad.sum_all(ad.mul(diff, diff))
        total = sq if total is None else ad.add(total, sq)
    if total is None:
        raise ShapeMismatch("empty parameter sets")
    return ad.sqrt(total)


def combined_loss_soft(
    cls_model: RankerModel,
    gen_model: RankerModel,
    batch: Batch,
    lambda_weight: float,
    sharing_coeff: float = 1.0,
) -> tuple[Tensor, Tensor, Tensor, Tensor]:
    """Two-model objective with the encoder-pulling penalty.

    Returns (total, cls, gen, penalty). sharing_coeff = 1 adds the penalty
    unweighted; 0 decouples the two models entirely.
    """
    c = cls_loss(cls_model, batch)
    g = gen_loss(gen_model, batch)
    pen = sharing_penalty(cls_model.encoder_params(), gen_model.encoder_params())
    total = ad.add(ad.scale(c, 1.0 - lambda_weight), ad.scale(g, lambda_weight))
    total = ad.add(total, ad.scale(pen, sharing_coeff))
    return total, c, g, pen


# ---------------------------------------------------------------------------
# Scoring and generation


def score_batch(
    model: RankerModel,
    vocab: Vocabulary,
    samples: Sequence[RankSample],
) -> list[ScoredCandidate]:
    """Score candidates as P(correct); no code execution involved.

    Consumes only the description and source of each sample; labels and
    feedback are never read here.
    """
    pairs = []
    for s in samples:
        stub = RankSample(
            problem_id=s.problem_id,
            candidate_id=s.candidate_id,
            description=s.description,
            source=s.source,
            label=s.label,
            feedback="",
        )
        enc = encode(
            stub, CLS_VARIANT, vocab, model.config.max_seq_len, model.config.max_target_len
        )
        pairs.append(enc)
    width = max(p.input_len for p in pairs)
    ids = _pad_matrix([p.input_ids for p in pairs], width)
    logits = model.cls_logits(ids)
    probs = ad.softmax(logits, axis=-1).data
    return [
        ScoredCandidate(problem_id=s.problem_id, candidate_id=s.candidate_id, score=float(pr[0]))
        for s, pr in zip(samples, probs)
    ]


def score(model: RankerModel, vocab: Vocabulary, description: str, source: str) -> float:
    """P(correct | CLS-encoded description and source) for one candidate."""
    sample = RankSample(
        problem_id="", candidate_id=0, description=description, source=source,
        label=OutcomeClass.CORRECT, feedback="",
    )
    return score_batch(model, vocab, [sample])[0].score


def generate_feedback(
    model: RankerModel,
    vocab: Vocabulary,
    description: str,
    source: str,
    max_target_len: Optional[int] = None,
) -> str:
    """Greedy feedback decoding from [BOS] until [EOS] or the length cap.

    Ties in the greedy argmax resolve to the lowest token id. The result is
    detokenized with single spaces.
    """
    limit = max_target_len or model.config.max_target_len
    stub = RankSample(
        problem_id="", candidate_id=0, description=description, source=source,
        label=OutcomeClass.CORRECT, feedback="",
    )
    enc = encode(stub, GEN_VARIANT, vocab, model.config.max_seq_len, model.config.max_target_len)
    ids = np.array([enc.input_ids], dtype=np.int64)
    enc_out, enc_mask = model.encode_ids(ids)
    generated: list[int] = [BOS]
    while len(generated) < limit:
        logits = model.decode_ids(enc_out, enc_mask, np.array([generated], dtype=np.int64))
        next_id = int(np.argmax(logits.data[0, -1]))  # argmax picks lowest id on ties
        generated.append(next_id)
        if next_id == EOS:
            break
    return detokenize(generated[1:], vocab)
