"""Decoupled weight-decay Adam."""
from __future__ import annotations

import numpy as np

from .params import ParameterStore


def adamw_step(
    store: ParameterStore,
    lr: float = 5e-4,
    weight_decay: float = 5e-4,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> None:
    """One AdamW update over every parameter that has a gradient.

    Weight decay is applied directly to the parameter (decoupled from the
    adaptive term).  Moments and the shared step counter live on the store.
    """
    beta1, beta2 = betas
    store.step_count += 1
    t = store.step_count
    for name, p in store.items():
        if p.grad is None:
            continue
        state = store.moments.setdefault(
            name, {"m": np.zeros_like(p.data), "v": np.zeros_like(p.data)}
        )
        state["m"] = beta1 * state["m"] + (1.0 - beta1) * p.grad
        state["v"] = beta2 * state["v"] + (1.0 - beta2) * p.grad**2
        m_hat = state["m"] / (1.0 - beta1**t)
        v_hat = state["v"] / (1.0 - beta2**t)
        p.data = p.data - lr * (m_hat / (np.sqrt(v_hat) + eps) + weight_decay * p.data)
