"""Dense-tensor reverse-mode differentiation on 64-bit numpy arrays.

A Tensor wraps an ndarray plus the backward closure that produced it.
Calling backward() on a scalar loss walks the graph once and accumulates
dLoss/dTensor into the .grad buffer of every tensor with requires_grad set;
repeated backward calls keep accumulating until grads are explicitly
zeroed. Gradient flow is pruned at tensors that neither require grad nor
depend on one, so constants (masks, position indices) cost nothing.

Everything is float64: at this scale the clean finite-difference margins
are worth more than speed.
"""

from __future__ import annotations

import math
from typing import Callable, Optional, Sequence

import numpy as np


class ShapeMismatch(Exception):
    """Operands cannot be combined under the op's shape rules."""


class NonScalarLoss(Exception):
    """backward() was called on a tensor that is not a single scalar."""


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward_fn", "_needs")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        _parents: tuple["Tensor", ...] = (),
        _backward_fn: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]] = None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._parents = _parents
        self._backward_fn = _backward_fn
        self._needs = requires_grad or any(p._needs for p in _parents)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcasted gradient back down to the original operand shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def backward(loss: Tensor) -> None:
    """Populate .grad on every requires_grad tensor reachable from loss."""
    if loss.data.size != 1:
        raise NonScalarLoss(f"loss must be a scalar, got shape {loss.data.shape}")

    # Iterative post-order over the needs-grad subgraph.
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited or not node._needs:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent._needs and id(parent) not in visited:
                stack.append((parent, False))

    flows: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topo):
        flow = flows.pop(id(node), None)
        if flow is None:
            continue
        if node.requires_grad:
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            node.grad += flow
        if node._backward_fn is None:
            continue
        parent_grads = node._backward_fn(flow)
        for parent, pgrad in zip(node._parents, parent_grads):
            if pgrad is None or not parent._needs:
                continue
            # Never mutate stored flows in place: ops may hand the same
            # array to several parents (e.g. add with equal shapes).
            acc = flows.get(id(parent))
            flows[id(parent)] = pgrad if acc is None else acc + pgrad


# ---------------------------------------------------------------------------
# Forward ops


def add(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data + b.data

    def _bw(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return Tensor(out_data, _parents=(a, b), _backward_fn=_bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data - b.data

    def _bw(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return Tensor(out_data, _parents=(a, b), _backward_fn=_bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data * b.data

    def _bw(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return Tensor(out_data, _parents=(a, b), _backward_fn=_bw)


def scale(a: Tensor, s: float) -> Tensor:
    def _bw(g):
        return (g * s,)

    return Tensor(a.data * s, _parents=(a,), _backward_fn=_bw)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeMismatch("matmul operands must have at least 2 dimensions")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeMismatch(f"matmul inner dims differ: {a.data.shape} @ {b.data.shape}")
    out_data = a.data @ b.data

    def _bw(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape)
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape)
        return ga, gb

    return Tensor(out_data, _parents=(a, b), _backward_fn=_bw)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    out_data = np.where(mask, a.data, 0.0)

    def _bw(g):
        return (g * mask,)

    return Tensor(out_data, _parents=(a,), _backward_fn=_bw)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    exp = np.exp(shifted)
    out_data = exp / exp.sum(axis=axis, keepdims=True)

    def _bw(g):
        dot = (g * out_data).sum(axis=axis, keepdims=True)
        return ((g - dot) * out_data,)

    return Tensor(out_data, _parents=(a,), _backward_fn=_bw)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply elementwise gain and bias."""
    if gain.data.shape != (x.data.shape[-1],) or bias.data.shape != (x.data.shape[-1],):
        raise ShapeMismatch("layer_norm gain/bias must match the last axis of x")
    mu = x.data.mean(axis=-1, keepdims=True)
    var = ((x.data - mu) ** 2).mean(axis=-1, keepdims=True)
    inv_sigma = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv_sigma
    out_data = gain.data * xhat + bias.data

    def _bw(g):
        dxhat = g * gain.data
        dx = (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        ) * inv_sigma
        reduce_axes = tuple(range(g.ndim - 1))
        dgain = (g * xhat).sum(axis=reduce_axes)
        dbias = g.sum(axis=reduce_axes)
        return dx, dgain, dbias

    return Tensor(out_data, _parents=(x, gain, bias), _backward_fn=_bw)


def embedding_lookup(table: Tensor, ids: np.ndarray) -> Tensor:
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise ShapeMismatch("embedding ids out of range")
    out_data = table.data[ids]

    def _bw(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        return (gt,)

    return Tensor(out_data, _parents=(table,), _backward_fn=_bw)


def select_position(x: Tensor, pos: int) -> Tensor:
    """Pick one sequence position: (B, T, D) -> (B, D)."""
    out_data = x.data[:, pos, :].copy()

    def _bw(g):
        gx = np.zeros_like(x.data)
        gx[:, pos, :] = g
        return (gx,)

    return Tensor(out_data, _parents=(x,), _backward_fn=_bw)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    def _bw(g):
        return (g.reshape(x.data.shape),)

    return Tensor(x.data.reshape(shape), _parents=(x,), _backward_fn=_bw)


def transpose(x: Tensor, axes: tuple[int, ...]) -> Tensor:
    inverse = np.argsort(axes)

    def _bw(g):
        return (g.transpose(inverse),)

    return Tensor(x.data.transpose(axes), _parents=(x,), _backward_fn=_bw)


def sum_all(x: Tensor) -> Tensor:
    def _bw(g):
        return (np.full_like(x.data, float(g)),)

    return Tensor(x.data.sum(), _parents=(x,), _backward_fn=_bw)


def sqrt(x: Tensor) -> Tensor:
    """Elementwise square root with the subgradient 0 at x = 0.

    The zero subgradient keeps the Euclidean-norm sharing penalty well
    behaved when two parameter sets start out identical.
    """
    root = np.sqrt(x.data)

    def _bw(g):
        safe = np.where(root > 0.0, root, 1.0)
        return (np.where(root > 0.0, g * 0.5 / safe, 0.0),)

    return Tensor(root, _parents=(x,), _backward_fn=_bw)


def cross_entropy(logits: Tensor, target_ids: np.ndarray, ignore_id: int = -1) -> Tensor:
    """Mean negative log-likelihood over positions not equal to ignore_id.

    logits has shape (..., V); target_ids has the matching leading shape.
    Softmax is taken over the last axis with the usual max-shift for
    stability. Returns 0 when every position is ignored.
    """
    targets = np.asarray(target_ids)
    if targets.shape != logits.data.shape[:-1]:
        raise ShapeMismatch(
            f"targets shape {targets.shape} does not match logits {logits.data.shape}"
        )
    vocab = logits.data.shape[-1]
    flat_logits = logits.data.reshape(-1, vocab)
    flat_targets = targets.reshape(-1)
    mask = flat_targets != ignore_id
    count = int(mask.sum())

    shifted = flat_logits - flat_logits.max(axis=-1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=-1)) + flat_logits.max(axis=-1)
    safe_targets = np.where(mask, flat_targets, 0)
    picked = flat_logits[np.arange(flat_logits.shape[0]), safe_targets]
    per_pos = (log_z - picked) * mask
    loss_val = per_pos.sum() / count if count else 0.0

    def _bw(g):
        if count == 0:
            return (np.zeros_like(logits.data),)
        probs = np.exp(flat_logits - flat_logits.max(axis=-1, keepdims=True))
        probs /= probs.sum(axis=-1, keepdims=True)
        probs[np.arange(flat_logits.shape[0]), safe_targets] -= 1.0
        probs *= (mask / count)[:, None] * float(g)
        return (probs.reshape(logits.data.shape),)

    return Tensor(loss_val, _parents=(logits,), _backward_fn=_bw)


def scaled_dot_attention(
    q: Tensor, k: Tensor, v: Tensor, mask: Optional[np.ndarray] = None
) -> Tensor:
    """softmax(q kᵀ / sqrt(d_k) + mask) v over the last two axes.

    mask, when given, is an additive float array broadcastable to the score
    shape (use large negative values to block positions).
    """
    d_k = q.data.shape[-1]
    scores = scale(matmul(q, transpose(k, _swap_last_two(k.data.ndim))), 1.0 / math.sqrt(d_k))
    if mask is not None:
        scores = add(scores, Tensor(mask))
    return matmul(softmax(scores, axis=-1), v)


def _swap_last_two(ndim: int) -> tuple[int, ...]:
    axes = list(range(ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return tuple(axes)


def dropout(x: Tensor, rate: float, uniform_draw: np.ndarray) -> Tensor:
    """Inverted dropout driven by an externally drawn uniform sample."""
    if rate <= 0.0:
        return x
    keep = (uniform_draw >= rate) / (1.0 - rate)
    return mul(x, Tensor(keep))


# ---------------------------------------------------------------------------
# Gradient checking


def grad_check(
    params: dict[str, Tensor],
    loss_fn: Callable[[], Tensor],
    eps: float = 1e-5,
    n_coords: int = 200,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Checks every parameter coordinate, or a seeded random subset of at least
    n_coords when the parameters are larger than that. loss_fn must be a
    deterministic function of the current parameter values.
    """
    for t in params.values():
        t.zero_grad()
    loss = loss_fn()
    backward(loss)
    analytic = {
        name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
        for name, t in params.items()
    }

    coords = [
        (name, idx) for name, t in params.items() for idx in range(t.data.size)
    ]
    if len(coords) > n_coords:
        picks = np.random.default_rng(seed).choice(len(coords), size=n_coords, replace=False)
        coords = [coords[i] for i in sorted(picks)]

    worst = 0.0
    for name, idx in coords:
        flat = params[name].data.reshape(-1)
        original = flat[idx]
        flat[idx] = original + eps
        loss_plus = float(loss_fn().data)
        flat[idx] = original - eps
        loss_minus = float(loss_fn().data)
        flat[idx] = original
        fd = (loss_plus - loss_minus) / (2.0 * eps)
        ga = float(analytic[name].reshape(-1)[idx])
        rel = abs(ga - fd) / max(1e-8, abs(ga) + abs(fd))
        worst = max(worst, rel)
    return worst
