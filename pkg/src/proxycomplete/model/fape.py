"""Feature and position extraction: point cloud -> proxies.

The encoder downsamples twice with farthest point sampling, lifting the
feature width at each stage through k-NN max pooling and a local vector
attention block, then derives a position encoding for every surviving
center from its neighborhood geometry and feature offsets.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import nn
from ..geometry import farthest_point_sample, knn
from ..nn import tensor as F
from ..nn.tensor import Tensor
from .config import ModelConfig


@dataclass
class ProxySet:
    """Per-proxy features, position encodings, and 3-D center coordinates.

    The token a proxy contributes to attention is features + positions.
    """

    features: Tensor
    positions: Tensor
    coords: np.ndarray

    @property
    def tokens(self) -> Tensor:
        return F.add(self.features, self.positions)

    @property
    def count(self) -> int:
        return self.coords.shape[0]


@dataclass
class EncoderPlan:
    """Static index structure of one input cloud.

    FPS and k-NN depend only on coordinates, so a cloud that is encoded
    repeatedly (every training step) can reuse these indices.
    """

    center_idx: list[np.ndarray]
    pool_idx: list[np.ndarray]
    block_idx: list[np.ndarray]
    coords: list[np.ndarray]
    pe_idx: np.ndarray


class PositionExtractor:
    """Neighborhood-aggregated position encoding.

    For each center: relative coordinates to its k neighbors and absolute
    feature offsets are concatenated, mapped to transition features by a
    shared linear, and summed with per-channel attention weights that are
    softmax-normalized over the neighbors.
    """

    def __init__(self, store: nn.ParameterStore, name: str, feat_dim: int, out_dim: int):
        self.transition = nn.Linear(store, f"{name}.transition", 3 + feat_dim, out_dim)
        self.score = nn.Linear(store, f"{name}.score", out_dim, out_dim)

    def __call__(self, coords: np.ndarray, features: Tensor, neighbor_idx: np.ndarray) -> Tensor:
        n, k = neighbor_idx.shape
        rel = coords[neighbor_idx] - coords[:, None, :]  # (n, k, 3) constant
        feat_off = F.absolute(F.sub(F.gather(features, neighbor_idx),
                                    F.reshape(features, (n, 1, -1))))
        tf = self.transition(F.concat([Tensor(rel), feat_off], axis=2))
        weights = F.softmax(self.score(tf), axis=1)
        return F.reduce_sum(F.mul(weights, tf), axis=1)


class FeaturePositionExtractor:
    """Two-stage downsampling encoder shared by both branches."""

    def __init__(self, store: nn.ParameterStore, name: str, cfg: ModelConfig):
        self.cfg = cfg
        self.lift = nn.Linear(store, f"{name}.lift", 3, cfg.dim_lift)
        self.stage_lift = [
            nn.Linear(store, f"{name}.stage1.lift", cfg.dim_lift, cfg.dim_stage1),
            nn.Linear(store, f"{name}.stage2.lift", cfg.dim_stage1, cfg.dim_stage2),
        ]
        self.stage_block = [
            nn.VectorAttentionBlock(store, f"{name}.stage1.block", cfg.dim_stage1),
            nn.VectorAttentionBlock(store, f"{name}.stage2.block", cfg.dim_stage2),
        ]
        self.seed_proj = nn.Linear(store, f"{name}.seed", cfg.dim_stage2, cfg.dim_proxy)
        self.positions = PositionExtractor(store, f"{name}.pe", cfg.dim_proxy, cfg.dim_proxy)

    def plan(self, points: np.ndarray, n_out: int) -> EncoderPlan:
        """Precompute every FPS/k-NN index the encoder will need."""
        k = self.cfg.k_neighbors
        counts = [points.shape[0] // 4, n_out]
        center_idx, pool_idx, block_idx, coords = [], [], [], []
        current = points
        for m in counts:
            c_idx = farthest_point_sample(current, m)
            centers = current[c_idx]
            pool_idx.append(knn(current, centers, k))
            block_idx.append(knn(centers, centers, k))
            center_idx.append(c_idx)
            coords.append(centers)
            current = centers
        pe_idx = knn(current, current, k)
        return EncoderPlan(center_idx, pool_idx, block_idx, coords, pe_idx)

    def __call__(self, points: np.ndarray, n_out: int, plan: EncoderPlan | None = None) -> ProxySet:
        cfg = self.cfg
        if points.shape[0] < 16:
            raise ValueError(f"input cloud needs at least 16 points, got {points.shape[0]}")
        if points.shape[0] // 4 < n_out:
            raise ValueError(
                f"cannot downsample {points.shape[0]} points to {n_out} proxies (stage-1 too small)"
            )
        if plan is None:
            plan = self.plan(points, n_out)

        feats = F.relu(self.lift(Tensor(points)))
        for stage in range(2):
            neighbors = F.gather(feats, plan.pool_idx[stage])  # (m, k, c_in)
            lifted = F.relu(self.stage_lift[stage](neighbors))
            pooled = F.reduce_max(lifted, axis=1)
            feats = self.stage_block[stage](pooled, plan.coords[stage], plan.block_idx[stage])

        centers = plan.coords[-1]
        seed = self.seed_proj(feats)
        pe = self.positions(centers, seed, plan.pe_idx)
        return ProxySet(features=seed, positions=pe, coords=centers)
