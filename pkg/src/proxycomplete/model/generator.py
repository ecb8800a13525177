"""Missing-proxy feature generation and the coarse point head."""
from __future__ import annotations

import numpy as np

from .. import nn
from ..nn import tensor as F
from ..nn.tensor import Tensor
from .config import ModelConfig


def random_position_encoding(m: int, c: int, seed: int, step: int = 0) -> np.ndarray:
    """I.i.d. standard-normal position encoding for the missing proxies."""
    return nn.rng.standard_normal((m, c), seed, step, tag="pe_random")


class MissingFeatureGenerator:
    """Expand N existing-proxy features into M missing-proxy features.

    Channels are split into U equal groups; a single shared per-point
    linear widens each group from C/U to (M*C)/(N*U), after which a
    row-major reshape redistributes the expanded features over M proxies
    and the groups are concatenated back along channels.
    """

    def __init__(self, store: nn.ParameterStore, name: str, cfg: ModelConfig):
        self.cfg = cfg
        self.expand = nn.Linear(store, f"{name}.expand", cfg.group_width, cfg.group_expansion)

    def __call__(self, features: Tensor) -> Tensor:
        cfg = self.cfg
        n, c = features.shape
        if n != cfg.n_existing or c != cfg.dim_proxy:
            raise ValueError(
                f"expected features ({cfg.n_existing}, {cfg.dim_proxy}), got ({n}, {c})"
            )
        u, w = cfg.groups, cfg.group_width
        m = cfg.m_missing
        grouped = F.transpose(F.reshape(features, (n, u, w)), (1, 0, 2))  # (U, N, C/U)
        expanded = self.expand(grouped)                                   # (U, N, E)
        regrouped = F.reshape(expanded, (u, m, w))                        # row-major N*E -> M*(C/U)
        return F.reshape(F.transpose(regrouped, (1, 0, 2)), (m, c))


class CoarseHead:
    """Global max-pool over the existing proxies followed by one linear map
    to M xyz triples."""

    def __init__(self, store: nn.ParameterStore, name: str, cfg: ModelConfig):
        self.cfg = cfg
        self.proj = nn.Linear(store, f"{name}.proj", cfg.dim_proxy, 3 * cfg.m_missing)

    def __call__(self, features: Tensor) -> Tensor:
        pooled = F.reduce_max(features, axis=0, keepdims=True)  # (1, C)
        flat = self.proj(pooled)
        return F.reshape(flat, (self.cfg.m_missing, 3))
