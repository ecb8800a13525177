"""Coarse-to-fine decoding by folding a 2-D lattice around each coarse point."""
from __future__ import annotations

import numpy as np

from .. import nn
from ..nn import tensor as F
from ..nn.tensor import Tensor
from .config import ModelConfig


class FoldingDecoder:
    """Deform a small square lattice into a local patch per coarse point.

    Each refined proxy feature is replicated across the lattice codes; two
    folding MLPs (feature||code -> 3, then feature||intermediate -> 3)
    produce an offset that is added to the owning coarse point.
    """

    def __init__(self, store: nn.ParameterStore, name: str, cfg: ModelConfig):
        self.cfg = cfg
        c = cfg.dim_proxy
        self.fold1 = nn.MLP(store, f"{name}.fold1", [c + 2, c, 3])
        self.fold2 = nn.MLP(store, f"{name}.fold2", [c + 3, c, 3])

        edge = cfg.fold_edge
        span = cfg.fold_span
        axis = np.linspace(-span, span, edge) if edge > 1 else np.zeros(1)
        xx, yy = np.meshgrid(axis, axis, indexing="ij")
        self.codes = np.stack([xx.ravel(), yy.ravel()], axis=1)  # (g, 2)

    def __call__(self, refined: Tensor, coarse: Tensor) -> Tensor:
        m = refined.shape[0]
        g = self.cfg.fold_grid
        owner = np.repeat(np.arange(m), g)
        feats = F.gather(refined, owner)                    # (m*g, C)
        codes = Tensor(np.tile(self.codes, (m, 1)))         # (m*g, 2)

        intermediate = self.fold1(F.concat([feats, codes], axis=1))
        offsets = self.fold2(F.concat([feats, intermediate], axis=1))
        return F.add(F.gather(coarse, owner), offsets)
