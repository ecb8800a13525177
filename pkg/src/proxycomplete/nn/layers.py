"""Neural building blocks over the autodiff core.

Layers register their parameters in a ParameterStore at construction time
(the registration order defines the checkpoint layout) and are called as
plain functions afterward.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng as _rng
from . import tensor as F
from .params import ParameterStore
from .tensor import Tensor


@dataclass(frozen=True)
class RunState:
    """Per-forward context: the run seed, the step index, and train/eval mode."""

    seed: int = 0
    step: int = 0
    training: bool = False


EVAL = RunState()


class Linear:
    """Affine map applied to the last axis: x @ W + b.

    Weights and bias draw uniformly from +-sqrt(1/fan_in); a zero bias
    would park relu pre-activations of structurally-zero inputs exactly on
    the kink, which breaks finite-difference verification.
    """

    def __init__(self, store: ParameterStore, name: str, d_in: int, d_out: int,
                 bias: bool = True, zero_init: bool = False):
        self.w = store.create(f"{name}.w", (d_in, d_out), fan_in=d_in, zero=zero_init)
        self.b = store.create(f"{name}.b", (d_out,), fan_in=d_in, zero=zero_init) if bias else None

    def __call__(self, t: Tensor) -> Tensor:
        out = F.matmul(t, self.w)
        return F.add(out, self.b) if self.b is not None else out


class MLP:
    """Linear layers with ReLU between them (none after the last)."""

    def __init__(self, store: ParameterStore, name: str, dims: list[int]):
        self.layers = [
            Linear(store, f"{name}.{i}", d_in, d_out)
            for i, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:]))
        ]

    def __call__(self, t: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            t = layer(t)
            if i < len(self.layers) - 1:
                t = F.relu(t)
        return t


class LayerNorm:
    def __init__(self, store: ParameterStore, name: str, dim: int, eps: float = 1e-5):
        self.gain = store.create(f"{name}.gain", (dim,), zero=True)
        self.gain.data[:] = 1.0
        self.bias = store.create(f"{name}.bias", (dim,), zero=True)
        self.eps = eps

    def __call__(self, t: Tensor) -> Tensor:
        return F.layer_norm(t, self.gain, self.bias, self.eps)


class Dropout:
    """Inverted dropout with a counter-based mask.

    The mask depends only on (seed, step, tag), so a forward pass is
    reproducible and two evaluations inside one step see the same mask.
    """

    def __init__(self, rate: float, tag: str):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.tag = tag

    def __call__(self, t: Tensor, rs: RunState) -> Tensor:
        if not rs.training or self.rate == 0.0:
            return t
        gen = _rng.stream(rs.seed, rs.step, f"dropout:{self.tag}")
        keep = (gen.random(t.shape) >= self.rate) / (1.0 - self.rate)
        return F.mul(t, Tensor(keep))


class MultiHeadAttention:
    """Scaled dot-product attention where keys and values share one projection.

    Queries come from ``q_in`` through W_q; ``kv_in`` passes through a single
    W_kv whose output serves as both key and value (a config flag restores
    the conventional separate projections for ablation).  Heads are split
    along the channel axis, attended independently, concatenated, and sent
    through a zero-initialized output projection so a fresh block perturbs
    nothing.
    """

    def __init__(self, store: ParameterStore, name: str, dim: int, heads: int,
                 shared_kv: bool = True):
        if dim % heads != 0:
            raise ValueError(f"model dim {dim} not divisible by heads {heads}")
        self.dim = dim
        self.heads = heads
        self.d_head = dim // heads
        self.wq = store.create(f"{name}.wq", (dim, dim), fan_in=dim)
        self.wkv = store.create(f"{name}.wkv", (dim, dim), fan_in=dim)
        self.wk = None if shared_kv else store.create(f"{name}.wk", (dim, dim), fan_in=dim)
        self.out = Linear(store, f"{name}.out", dim, dim, zero_init=True)

    def _split(self, t: Tensor) -> Tensor:
        n = t.shape[0]
        return F.transpose(F.reshape(t, (n, self.heads, self.d_head)), (1, 0, 2))

    def query(self, q_in: Tensor) -> Tensor:
        return F.matmul(q_in, self.wq)

    def attend(self, q: Tensor, kv_in: Tensor) -> Tensor:
        v = F.matmul(kv_in, self.wkv)
        k = v if self.wk is None else F.matmul(kv_in, self.wk)
        qh, kh, vh = self._split(q), self._split(k), self._split(v)
        scores = F.mul(F.matmul(qh, F.transpose(kh, (0, 2, 1))), 1.0 / np.sqrt(self.d_head))
        weights = F.softmax(scores, axis=-1)
        mixed = F.matmul(weights, vh)  # (heads, n_q, d_head)
        merged = F.reshape(F.transpose(mixed, (1, 0, 2)), (q.shape[0], self.dim))
        return self.out(merged)

    def __call__(self, q_in: Tensor, kv_in: Tensor) -> Tensor:
        return self.attend(self.query(q_in), kv_in)


class FeedForward:
    """Two linear layers with ReLU and dropout; hidden width is 2x the model dim."""

    def __init__(self, store: ParameterStore, name: str, dim: int, dropout: float = 0.1):
        self.lin1 = Linear(store, f"{name}.lin1", dim, 2 * dim)
        self.lin2 = Linear(store, f"{name}.lin2", 2 * dim, dim)
        self.drop = Dropout(dropout, name)

    def __call__(self, t: Tensor, rs: RunState = EVAL) -> Tensor:
        return self.lin2(self.drop(F.relu(self.lin1(t)), rs))


class VectorAttentionBlock:
    """Local vector attention with a residual connection.

    Per-channel attention weights come from an MLP over q - k plus a
    positional term derived from relative coordinates; they are softmaxed
    over each point's k neighbors and applied to v plus the same positional
    term.  Shape-preserving: (n, C) -> (n, C).
    """

    def __init__(self, store: ParameterStore, name: str, dim: int):
        self.wq = Linear(store, f"{name}.wq", dim, dim)
        self.wk = Linear(store, f"{name}.wk", dim, dim)
        self.wv = Linear(store, f"{name}.wv", dim, dim)
        self.pos_mlp = MLP(store, f"{name}.pos", [3, dim, dim])
        self.attn_mlp = MLP(store, f"{name}.attn", [dim, dim, dim])

    def __call__(self, features: Tensor, coords: np.ndarray, neighbor_idx: np.ndarray) -> Tensor:
        n = features.shape[0]
        q = self.wq(features)
        k = F.gather(self.wk(features), neighbor_idx)  # (n, k, C)
        v = F.gather(self.wv(features), neighbor_idx)

        rel = coords[neighbor_idx] - coords[:, None, :]  # (n, k, 3) constant
        pos = self.pos_mlp(Tensor(rel))

        logits = self.attn_mlp(F.add(F.sub(F.reshape(q, (n, 1, -1)), k), pos))
        weights = F.softmax(logits, axis=1)
        attended = F.reduce_sum(F.mul(weights, F.add(v, pos)), axis=1)
        return F.add(features, attended)
