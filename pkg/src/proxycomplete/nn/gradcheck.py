"""Finite-difference verification of every differentiable op.

Each check builds a scalar loss from an op output (random projection so
the whole Jacobian is exercised), runs the backward pass, and compares the
analytic input gradient against central differences in double precision.
Inputs are drawn away from kinks (relu at 0, reduction ties) so the
numeric derivative is well defined.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import tensor as F
from .layers import FeedForward, MultiHeadAttention, RunState, VectorAttentionBlock
from .params import ParameterStore
from .tensor import Tensor

EPS = 1e-5
OP_TOL = 1e-4


@dataclass
class CheckResult:
    name: str
    max_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tolerance


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def check_gradient(build: Callable[[Tensor], Tensor], x0: np.ndarray, eps: float = EPS) -> float:
    """Max relative error between backward() and central differences.

    ``build`` maps an input tensor to a scalar loss tensor.
    """
    x = Tensor(x0.copy(), requires_grad=True)
    loss = build(x)
    if loss.size != 1:
        raise ValueError("gradient check requires a scalar loss")
    loss.backward()
    analytic = x.grad.copy() if x.grad is not None else np.zeros_like(x0)

    numeric = np.zeros_like(x0)
    flat = x0.reshape(-1)
    num_flat = numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = float(build(Tensor(x0)).data)
        flat[i] = orig - eps
        lo = float(build(Tensor(x0)).data)
        flat[i] = orig
        num_flat[i] = (hi - lo) / (2.0 * eps)
    return relative_error(analytic, numeric)


def _proj_loss(out: Tensor, proj: np.ndarray) -> Tensor:
    return F.reduce_sum(F.mul(out, Tensor(proj)))


def _spread(rng: np.random.Generator, shape) -> np.ndarray:
    """Values with pairwise gaps and magnitudes safely above the FD step."""
    n = int(np.prod(shape))
    base = np.linspace(0.3, 2.1, n)
    signs = rng.choice([-1.0, 1.0], size=n)
    return rng.permutation(base * signs).reshape(shape)


def run_op_suite(seed: int = 0) -> list[CheckResult]:
    """Gradient-check every op on several random shapes; returns one result per op."""
    rng = np.random.default_rng(seed)
    results: list[CheckResult] = []

    def record(name: str, errors: list[float]) -> None:
        results.append(CheckResult(name, max(errors), OP_TOL))

    shapes2 = [(3, 4), (5, 2), (4, 4)]
    shapes3 = [(2, 3, 4), (3, 2, 2), (2, 4, 3)]

    def simple(name, fn, gen=None, shape_list=shapes2 + shapes3[:1]):
        errs = []
        for shape in shape_list:
            x0 = (gen or (lambda s: rng.standard_normal(s)))(shape)
            proj = rng.standard_normal(shape)
            errs.append(check_gradient(lambda t: _proj_loss(fn(t), proj), x0))
        record(name, errs)

    simple("relu", F.relu, gen=lambda s: _spread(rng, s))
    simple("absolute", F.absolute, gen=lambda s: _spread(rng, s))
    simple("exp", F.exp)
    simple("sqrt", F.sqrt, gen=lambda s: rng.uniform(0.1, 2.0, s))
    simple("softmax", lambda t: F.softmax(t, axis=-1))

    errs = []
    for shape in shapes2 + shapes3[:1]:
        other = rng.standard_normal(shape)
        proj = rng.standard_normal(shape)
        errs.append(check_gradient(lambda t: _proj_loss(F.add(t, Tensor(other)), proj), x0=rng.standard_normal(shape)))
        # broadcast against the trailing axis
        row = rng.standard_normal(shape[-1])
        errs.append(check_gradient(lambda t: _proj_loss(F.add(t, Tensor(row)), proj), x0=rng.standard_normal(shape)))
    record("add", errs)

    errs = []
    for shape in shapes2 + shapes3[:1]:
        other = rng.standard_normal(shape)
        proj = rng.standard_normal(shape)
        errs.append(check_gradient(lambda t: _proj_loss(F.sub(t, Tensor(other)), proj), x0=rng.standard_normal(shape)))
    record("sub", errs)

    errs = []
    for shape in shapes2 + shapes3[:1]:
        other = rng.standard_normal(shape)
        proj = rng.standard_normal(shape)
        errs.append(check_gradient(lambda t: _proj_loss(F.mul(t, Tensor(other)), proj), x0=rng.standard_normal(shape)))
        row = rng.standard_normal(shape[-1])
        errs.append(check_gradient(lambda t: _proj_loss(F.mul(Tensor(row), t), proj), x0=rng.standard_normal(shape)))
    record("mul", errs)

    errs = []
    for shape in shapes2 + shapes3[:1]:
        denom = rng.uniform(0.5, 2.0, shape) * rng.choice([-1.0, 1.0], shape)
        proj = rng.standard_normal(shape)
        errs.append(check_gradient(lambda t: _proj_loss(F.div(t, Tensor(denom)), proj), x0=rng.standard_normal(shape)))
        numer = rng.standard_normal(shape)
        errs.append(
            check_gradient(
                lambda t: _proj_loss(F.div(Tensor(numer), t), proj),
                x0=rng.uniform(0.5, 2.0, shape),
            )
        )
    record("div", errs)

    errs = []
    for m, k, n in [(3, 4, 5), (2, 3, 2), (4, 2, 3)]:
        b = rng.standard_normal((k, n))
        proj = rng.standard_normal((m, n))
        errs.append(check_gradient(lambda t: _proj_loss(F.matmul(t, Tensor(b)), proj), x0=rng.standard_normal((m, k))))
        a = rng.standard_normal((m, k))
        errs.append(check_gradient(lambda t: _proj_loss(F.matmul(Tensor(a), t), proj), x0=rng.standard_normal((k, n))))
        # batched against a shared right operand
        proj3 = rng.standard_normal((2, m, n))
        errs.append(
            check_gradient(lambda t: _proj_loss(F.matmul(t, Tensor(b)), proj3), x0=rng.standard_normal((2, m, k)))
        )
    record("matmul", errs)

    errs = []
    for shape in shapes2:
        other = rng.standard_normal(shape)
        proj = rng.standard_normal((shape[0] * 2, shape[1]))
        errs.append(
            check_gradient(lambda t: _proj_loss(F.concat([t, Tensor(other)], axis=0), proj), x0=rng.standard_normal(shape))
        )
        proj1 = rng.standard_normal((shape[0], shape[1] * 2))
        errs.append(
            check_gradient(lambda t: _proj_loss(F.concat([Tensor(other), t], axis=1), proj1), x0=rng.standard_normal(shape))
        )
    record("concat", errs)

    errs = []
    for shape in shapes3:
        flat = (shape[0], shape[1] * shape[2])
        proj = rng.standard_normal(flat)
        errs.append(check_gradient(lambda t: _proj_loss(F.reshape(t, flat), proj), x0=rng.standard_normal(shape)))
    record("reshape", errs)

    errs = []
    for shape, axes in [((3, 4), (1, 0)), ((2, 3, 4), (2, 0, 1)), ((2, 3, 4), (1, 0, 2))]:
        out_shape = tuple(shape[a] for a in axes)
        proj = rng.standard_normal(out_shape)
        errs.append(check_gradient(lambda t: _proj_loss(F.transpose(t, axes), proj), x0=rng.standard_normal(shape)))
    record("transpose", errs)

    for name, fn in [("reduce_max", F.reduce_max), ("reduce_min", F.reduce_min)]:
        errs = []
        for shape, axis in [((4, 5), 0), ((4, 5), 1), ((2, 3, 4), 1)]:
            out_shape = tuple(s for i, s in enumerate(shape) if i != axis)
            proj = rng.standard_normal(out_shape)
            errs.append(
                check_gradient(lambda t: _proj_loss(fn(t, axis=axis), proj), x0=_spread(rng, shape))
            )
        record(name, errs)

    for name, fn in [("reduce_mean", F.reduce_mean), ("reduce_sum", F.reduce_sum)]:
        errs = []
        for shape, axis in [((4, 5), 0), ((4, 5), None), ((2, 3, 4), 2)]:
            out = fn(Tensor(np.zeros(shape)), axis=axis)
            proj = rng.standard_normal(out.shape)
            errs.append(
                check_gradient(lambda t: _proj_loss(fn(t, axis=axis), proj), x0=rng.standard_normal(shape))
            )
        record(name, errs)

    errs = []
    for rows, idx_shape in [((5, 3), (4,)), ((6, 2), (3, 2)), ((4, 3), (2, 2))]:
        idx = rng.integers(0, rows[0], size=idx_shape)
        proj = rng.standard_normal(idx_shape + rows[1:])
        errs.append(check_gradient(lambda t: _proj_loss(F.gather(t, idx), proj), x0=rng.standard_normal(rows)))
    record("gather", errs)

    errs = []
    for shape in shapes2 + shapes3[:1]:
        gain = rng.uniform(0.5, 1.5, shape[-1])
        bias = rng.standard_normal(shape[-1])
        proj = rng.standard_normal(shape)
        errs.append(
            check_gradient(
                lambda t: _proj_loss(F.layer_norm(t, Tensor(gain), Tensor(bias)), proj),
                x0=rng.standard_normal(shape),
            )
        )
        # gradient w.r.t. the affine parameters
        x0 = rng.standard_normal(shape)
        errs.append(
            check_gradient(
                lambda t: _proj_loss(F.layer_norm(Tensor(x0), t, Tensor(bias)), proj),
                x0=gain.copy(),
            )
        )
    record("layer_norm", errs)

    results.append(_check_multi_head_attention(rng))
    results.append(_check_feed_forward(rng))
    results.append(_check_vector_attention(rng))
    return results


def _param_errors(store: ParameterStore, loss_fn: Callable[[], Tensor], eps: float = EPS) -> float:
    """FD-check every parameter entry of a small layer."""
    store.zero_grads()
    loss = loss_fn()
    loss.backward()
    worst = 0.0
    for _, p in store.items():
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        numeric = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        num = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = float(loss_fn().data)
            flat[i] = orig - eps
            lo = float(loss_fn().data)
            flat[i] = orig
            num[i] = (hi - lo) / (2.0 * eps)
        worst = max(worst, relative_error(analytic, numeric))
    return worst


def _check_multi_head_attention(rng: np.random.Generator) -> CheckResult:
    errs = []
    for trial in range(3):
        store = ParameterStore(seed=100 + trial)
        mha = MultiHeadAttention(store, "mha", dim=8, heads=2)
        mha.out.w.data = rng.standard_normal(mha.out.w.shape) * 0.5  # zero-init would hide errors
        q_in = rng.standard_normal((3, 8))
        kv_in = rng.standard_normal((5, 8))
        proj = rng.standard_normal((3, 8))
        errs.append(
            check_gradient(lambda t: _proj_loss(mha(t, Tensor(kv_in)), proj), x0=q_in.copy())
        )
        errs.append(
            check_gradient(lambda t: _proj_loss(mha(Tensor(q_in), t), proj), x0=kv_in.copy())
        )
        errs.append(_param_errors(store, lambda: _proj_loss(mha(Tensor(q_in), Tensor(kv_in)), proj)))
    return CheckResult("multi_head_attention", max(errs), OP_TOL)


def _check_feed_forward(rng: np.random.Generator) -> CheckResult:
    errs = []
    for trial in range(3):
        store = ParameterStore(seed=200 + trial)
        ffn = FeedForward(store, "ffn", dim=6, dropout=0.1)
        rs = RunState(seed=7, step=trial, training=True)  # fixed mask keeps the loss differentiable
        x0 = _spread(rng, (4, 6))
        proj = rng.standard_normal((4, 6))
        errs.append(check_gradient(lambda t: _proj_loss(ffn(t, rs), proj), x0=x0))
        errs.append(_param_errors(store, lambda: _proj_loss(ffn(Tensor(x0), rs), proj)))
    return CheckResult("feed_forward", max(errs), OP_TOL)


def _check_vector_attention(rng: np.random.Generator) -> CheckResult:
    from ..geometry import knn

    errs = []
    for trial in range(3):
        store = ParameterStore(seed=300 + trial)
        block = VectorAttentionBlock(store, "va", dim=4)
        coords = rng.standard_normal((6, 3))
        idx = knn(coords, coords, 3)
        x0 = rng.standard_normal((6, 4))
        proj = rng.standard_normal((6, 4))
        errs.append(check_gradient(lambda t: _proj_loss(block(t, coords, idx), proj), x0=x0.copy()))
        errs.append(_param_errors(store, lambda: _proj_loss(block(Tensor(x0), coords, idx), proj)))
    return CheckResult("vector_attention_block", max(errs), OP_TOL)
