"""Parameter management: seeded init, Adam, and the checkpoint format.

Randomness comes from a splitmix-style 64-bit stream so that every draw is
reproducible across platforms without depending on numpy's generator
internals. Derived streams (split()) are independent of how much the parent
stream is consumed afterwards.

Checkpoints are a directory holding manifest.json (names, shapes, dtype,
byte offsets, config hash, vocab hash, free-form extra metadata) and
params.bin (row-major little-endian float64 values concatenated in manifest
order).
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Iterable, Iterator, Optional

import numpy as np

from .autodiff import Tensor

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


class SeedStream:
    """Deterministic splitmix64 stream of raw bits, floats, and shuffles.

    The stream is counter-based (value i is a hash of seed + i*GOLDEN), so
    block draws vectorize while producing exactly the scalar sequence.
    """

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def next_block(self, n: int) -> np.ndarray:
        steps = np.arange(1, n + 1, dtype=np.uint64) * np.uint64(_GOLDEN)
        states = np.uint64(self._state) + steps  # wraps mod 2**64
        self._state = int(states[-1]) if n else self._state
        return _mix64(states)

    def split(self) -> "SeedStream":
        return SeedStream(self.next_u64())

    def uniform(self, shape: tuple[int, ...], low: float = 0.0, high: float = 1.0) -> np.ndarray:
        n = int(np.prod(shape)) if shape else 1
        unit = (self.next_block(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return (low + unit * (high - low)).reshape(shape)

    def normal(self, shape: tuple[int, ...], std: float = 1.0) -> np.ndarray:
        """Box-Muller on paired uniforms."""
        n = int(np.prod(shape)) if shape else 1
        pairs = (n + 1) // 2
        raw = (self.next_block(2 * pairs) >> np.uint64(11)).astype(np.float64)
        u1 = (raw[0::2] + 1.0) * 2.0**-53  # avoid log(0)
        u2 = raw[1::2] * 2.0**-53
        r = np.sqrt(-2.0 * np.log(u1))
        out = np.empty(pairs * 2, dtype=np.float64)
        out[0::2] = r * np.cos(2.0 * np.pi * u2)
        out[1::2] = r * np.sin(2.0 * np.pi * u2)
        return (out[:n] * std).reshape(shape)

    def randint(self, n: int) -> int:
        return self.next_u64() % n

    def permutation(self, n: int) -> list[int]:
        """Fisher-Yates with draws from this stream."""
        order = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.randint(i + 1)
            order[i], order[j] = order[j], order[i]
        return order


def xavier_uniform(stream: SeedStream, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return stream.uniform((fan_in, fan_out), -limit, limit)


class ParamStore:
    """Ordered name -> Tensor map; iteration order is insertion order.

    Also carries per-parameter Adam moment buffers so optimizer state
    travels with the parameters it belongs to.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._adam_m: dict[str, np.ndarray] = {}
        self._adam_v: dict[str, np.ndarray] = {}
        self._adam_t: dict[str, int] = {}

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name}")
        t = Tensor(data, requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self._params.items())

    def tensors(self) -> dict[str, Tensor]:
        return dict(self._params)

    def subset(self, prefixes: tuple[str, ...]) -> dict[str, Tensor]:
        return {n: t for n, t in self._params.items() if n.startswith(prefixes)}

    def zero_grads(self) -> None:
        for t in self._params.values():
            t.zero_grad()

    def clone_values(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self._params.items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for name, arr in values.items():
            t = self._params[name]
            if t.data.shape != arr.shape:
                raise ValueError(f"shape mismatch loading {name}")
            t.data = arr.astype(np.float64, copy=True)


def adam_step(
    store: ParamStore,
    grads: dict[str, np.ndarray],
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update for every name present in grads.

    Step counts are tracked per parameter, so parameters sitting out a
    training phase resume with correct bias correction.
    """
    for name, grad in grads.items():
        param = store[name]
        m = store._adam_m.get(name)
        if m is None:
            m = np.zeros_like(param.data)
            store._adam_m[name] = m
            store._adam_v[name] = np.zeros_like(param.data)
            store._adam_t[name] = 0
        v = store._adam_v[name]
        store._adam_t[name] += 1
        t = store._adam_t[name]
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        param.data = param.data - lr * m_hat / (np.sqrt(v_hat) + eps)


# ---------------------------------------------------------------------------
# Checkpoints


def save_checkpoint(
    directory: str | Path,
    store: ParamStore,
    config_hash: str,
    vocab_hash: str,
    extra: Optional[dict] = None,
) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    offset = 0
    blobs = []
    for name, t in store.items():
        raw = np.ascontiguousarray(t.data, dtype="<f8").tobytes()
        entries.append(
            {
                "name": name,
                "shape": list(t.data.shape),
                "offset": offset,
                "nbytes": len(raw),
            }
        )
        blobs.append(raw)
        offset += len(raw)
    manifest = {
        "dtype": "float64",
        "byte_order": "little",
        "config_hash": config_hash,
        "vocab_hash": vocab_hash,
        "params": entries,
        "extra": extra or {},
    }
    (directory / "manifest.json").write_text(
        json.dumps(manifest, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    (directory / "params.bin").write_bytes(b"".join(blobs))


def load_checkpoint(directory: str | Path) -> tuple[ParamStore, dict]:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
    raw = (directory / "params.bin").read_bytes()
    store = ParamStore()
    for entry in manifest["params"]:
        shape = tuple(entry["shape"])
        chunk = raw[entry["offset"] : entry["offset"] + entry["nbytes"]]
        arr = np.frombuffer(chunk, dtype="<f8").reshape(shape).astype(np.float64)
        store.add(entry["name"], arr)
    return store, manifest


def collect_grads(tensors: Iterable[tuple[str, Tensor]]) -> dict[str, np.ndarray]:
    """Gather non-None grads; parameters untouched by the loss are skipped."""
    return {name: t.grad for name, t in tensors if t.grad is not None}
