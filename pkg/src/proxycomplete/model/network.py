"""The assembled completion network, its losses, and the training step.

Two branches share one encoder: the partial input produces existing
proxies (always), and during training the true missing part produces
alignment targets with back-propagation blocked, so the shared encoder
only ever learns through the partial branch.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import nn
from ..geometry import as_points
from ..nn import tensor as F
from ..nn.layers import RunState
from ..nn.tensor import Tensor
from .config import ModelConfig
from .fape import EncoderPlan, FeaturePositionExtractor, ProxySet
from .folding import FoldingDecoder
from .generator import CoarseHead, MissingFeatureGenerator, random_position_encoding
from .transformer import MissingPartSensitiveTransformer

# Above this many pairwise entries the chamfer graph switches from the
# exact difference tensor to the quadratic-expansion form, which is faster
# and never materializes an (n, m, 3) intermediate.
_EXACT_PAIR_LIMIT = 20_000


@dataclass
class LossBreakdown:
    """The three training loss terms and their weighted sum."""

    l_c1: float
    l_c2: float
    l_p: float
    total: float

    @classmethod
    def from_components(cls, l_c1: float, l_c2: float, l_p: float, gamma: float) -> "LossBreakdown":
        return cls(l_c1=l_c1, l_c2=l_c2, l_p=l_p, total=l_c1 + l_c2 + gamma * l_p)

    def to_dict(self) -> dict:
        return {"l_c1": self.l_c1, "l_c2": self.l_c2, "l_p": self.l_p, "total": self.total}


@dataclass
class CompletionResult:
    """Forward outputs; tensors retain the graph, properties expose arrays."""

    coarse_t: Tensor
    dense_t: Tensor
    complete_t: Tensor
    pre_mp: Tensor
    existing: ProxySet

    @property
    def coarse(self) -> np.ndarray:
        return self.coarse_t.data

    @property
    def dense(self) -> np.ndarray:
        return self.dense_t.data

    @property
    def complete(self) -> np.ndarray:
        return self.complete_t.data


@dataclass
class TrainSample:
    partial: np.ndarray
    gt: np.ndarray
    true_missing: np.ndarray


@dataclass
class TrainPlan:
    """Static per-sample state reused every step: encoder indices for both
    branches plus the constant chamfer contribution of the partial prefix."""

    partial: EncoderPlan
    missing: EncoderPlan
    prefix_fwd_d2: np.ndarray
    prefix_bwd_d2: np.ndarray


def _pairwise_d2(pred: Tensor, tgt: np.ndarray) -> Tensor:
    """Squared distance matrix between a tracked cloud and a constant one."""
    n, m = pred.shape[0], tgt.shape[0]
    if n * m <= _EXACT_PAIR_LIMIT:
        diff = F.sub(F.reshape(pred, (n, 1, 3)), Tensor(tgt[None, :, :]))
        return F.reduce_sum(F.mul(diff, diff), axis=2)
    pred_sq = F.reduce_sum(F.mul(pred, pred), axis=1, keepdims=True)
    tgt_sq = Tensor(np.sum(tgt**2, axis=1)[None, :])
    cross = F.matmul(pred, Tensor(-2.0 * tgt.T))
    return F.relu(F.add(F.add(cross, pred_sq), tgt_sq))


def constant_nn_d2(src: np.ndarray, dst: np.ndarray, chunk: int = 2048) -> tuple[np.ndarray, np.ndarray]:
    """Directed min squared distances between two constant clouds.

    Returns (per-src min over dst, per-dst min over src) using the same
    quadratic expansion as the tracked path.
    """
    dst_sq = np.sum(dst**2, axis=1)
    fwd = np.empty(src.shape[0])
    bwd = np.full(dst.shape[0], np.inf)
    for start in range(0, src.shape[0], chunk):
        block = src[start : start + chunk]
        d2 = np.sum(block**2, axis=1)[:, None] + dst_sq[None, :] - 2.0 * (block @ dst.T)
        np.maximum(d2, 0.0, out=d2)
        fwd[start : start + chunk] = d2.min(axis=1)
        np.minimum(bwd, d2.min(axis=0), out=bwd)
    return fwd, bwd


def chamfer_tensor(pred: Tensor, target, variant: str = "l1") -> Tensor:
    """Differentiable symmetric chamfer distance against a constant cloud.

    Matches the metrics-module conventions: the "l1" variant halves the sum
    of the two directed mean distances, "l2" sums the directed mean squared
    distances.
    """
    tgt = np.asarray(target, dtype=np.float64)
    d2 = _pairwise_d2(pred, tgt)
    fwd = F.reduce_min(d2, axis=1)
    bwd = F.reduce_min(d2, axis=0)
    if variant == "l1":
        both = F.add(F.reduce_mean(F.sqrt(fwd)), F.reduce_mean(F.sqrt(bwd)))
        return F.mul(both, 0.5)
    if variant == "l2":
        return F.add(F.reduce_mean(fwd), F.reduce_mean(bwd))
    raise ValueError(f"unknown chamfer variant {variant!r}")


def chamfer_tensor_with_prefix(
    dense: Tensor,
    target,
    prefix_fwd_d2: np.ndarray,
    prefix_bwd_d2: np.ndarray,
    variant: str = "l1",
) -> Tensor:
    """Chamfer distance of (constant prefix ++ dense) against a constant cloud.

    Equal in value to ``chamfer_tensor`` on the concatenated cloud, but the
    prefix rows contribute through precomputed constants so only the dense
    rows carry graph.  ``prefix_*_d2`` come from ``constant_nn_d2`` between
    the prefix and the target.
    """
    tgt = np.asarray(target, dtype=np.float64)
    n_prefix, n_dense = prefix_fwd_d2.shape[0], dense.shape[0]
    d2 = _pairwise_d2(dense, tgt)
    fwd_dense = F.reduce_min(d2, axis=1)
    bwd_dense = F.reduce_min(d2, axis=0)
    # per-target minimum over the full cloud: min(c, x) = c - relu(c - x)
    c = Tensor(prefix_bwd_d2)
    bwd_all = F.sub(c, F.relu(F.sub(c, bwd_dense)))
    if variant == "l1":
        fwd_sum = F.add(F.reduce_sum(F.sqrt(fwd_dense)), float(np.sum(np.sqrt(prefix_fwd_d2))))
        fwd_mean = F.mul(fwd_sum, 1.0 / (n_prefix + n_dense))
        return F.mul(F.add(fwd_mean, F.reduce_mean(F.sqrt(bwd_all))), 0.5)
    if variant == "l2":
        fwd_sum = F.add(F.reduce_sum(fwd_dense), float(np.sum(prefix_fwd_d2)))
        fwd_mean = F.mul(fwd_sum, 1.0 / (n_prefix + n_dense))
        return F.add(fwd_mean, F.reduce_mean(bwd_all))
    raise ValueError(f"unknown chamfer variant {variant!r}")


def alignment_loss(pre_mp: Tensor, true_mp) -> Tensor:
    """Mean squared error against the (gradient-blocked) true missing proxies."""
    target = true_mp.data if isinstance(true_mp, Tensor) else np.asarray(true_mp, dtype=np.float64)
    if pre_mp.shape != target.shape:
        raise ValueError(f"proxy shape mismatch: {pre_mp.shape} vs {target.shape}")
    diff = F.sub(pre_mp, Tensor(target))
    return F.reduce_mean(F.mul(diff, diff))


def training_loss(
    coarse_t: Tensor,
    true_centers: np.ndarray,
    complete_t: Tensor,
    gt: np.ndarray,
    l_p_t: Tensor,
    cfg: ModelConfig,
) -> tuple[Tensor, LossBreakdown]:
    """Weighted three-term loss: coarse CD + complete CD + gamma * alignment."""
    l_c1_t = chamfer_tensor(coarse_t, true_centers, cfg.cd_variant)
    l_c2_t = chamfer_tensor(complete_t, gt, cfg.cd_variant)
    total_t = F.add(F.add(l_c1_t, l_c2_t), F.mul(l_p_t, cfg.gamma))
    breakdown = LossBreakdown.from_components(l_c1_t.item(), l_c2_t.item(), l_p_t.item(), cfg.gamma)
    return total_t, breakdown


class CompletionModel:
    """Proxy-based completion network over a single ParameterStore."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        cfg.validate()
        self.cfg = cfg
        self.store = nn.ParameterStore(seed)
        self.encoder = FeaturePositionExtractor(self.store, "encoder", cfg)
        self.generator = MissingFeatureGenerator(self.store, "generator", cfg)
        self.coarse_head = CoarseHead(self.store, "coarse", cfg)
        self.transformer = MissingPartSensitiveTransformer(self.store, "transformer", cfg)
        self.decoder = FoldingDecoder(self.store, "folding", cfg)

    # ---- pieces ------------------------------------------------------
    def encode(self, points, n_out: int | None = None, plan: EncoderPlan | None = None) -> ProxySet:
        pts = as_points(points)
        return self.encoder(pts, self.cfg.n_existing if n_out is None else n_out, plan)

    def predict_coarse(self, existing: ProxySet) -> Tensor:
        return self.coarse_head(existing.features)

    def generate_missing_tokens(self, existing: ProxySet, noise_seed: int) -> Tensor:
        """Missing-proxy tokens: generated features plus random position queries.

        The noise depends only on ``noise_seed``; callers wanting a fresh
        draw per forward pass vary the seed.
        """
        pe_r = random_position_encoding(self.cfg.m_missing, self.cfg.dim_proxy, noise_seed)
        return F.add(self.generator(existing.features), Tensor(pe_r))

    def refine_missing(self, mp_tokens: Tensor, existing: ProxySet, rs: RunState = nn.EVAL) -> Tensor:
        return self.transformer(mp_tokens, existing.tokens, rs)

    # ---- full forward ------------------------------------------------
    def complete(
        self,
        partial,
        noise_seed: int = 0,
        step: int = 0,
        plan: EncoderPlan | None = None,
        rs: RunState = nn.EVAL,
    ) -> CompletionResult:
        """Predict the dense missing part and splice it after the input.

        The first ``p_in`` rows of the complete cloud are the partial input
        verbatim.
        """
        pts = as_points(partial, "partial")
        if pts.shape[0] != self.cfg.p_in:
            raise ValueError(f"partial must have {self.cfg.p_in} points, got {pts.shape[0]}")
        existing = self.encode(pts, self.cfg.n_existing, plan)
        coarse_t = self.predict_coarse(existing)
        mp_tokens = self.generate_missing_tokens(existing, noise_seed)
        pre_mp = self.refine_missing(mp_tokens, existing, rs)
        dense_t = self.decoder(pre_mp, coarse_t)
        complete_t = F.concat([Tensor(pts), dense_t], axis=0)
        return CompletionResult(coarse_t, dense_t, complete_t, pre_mp, existing)

    # ---- training ----------------------------------------------------
    def sample_plans(self, sample: TrainSample) -> TrainPlan:
        """Precompute the static indices and constants of one training sample."""
        fwd, bwd = constant_nn_d2(as_points(sample.partial), as_points(sample.gt, "gt"))
        return TrainPlan(
            partial=self.encoder.plan(as_points(sample.partial), self.cfg.n_existing),
            missing=self.encoder.plan(as_points(sample.true_missing), self.cfg.m_missing),
            prefix_fwd_d2=fwd,
            prefix_bwd_d2=bwd,
        )

    def true_targets(
        self, sample: TrainSample, plan: EncoderPlan | None = None
    ) -> tuple[np.ndarray, np.ndarray]:
        """Alignment targets from the true-missing branch, gradient-blocked.

        Returns (true missing proxies, true missing centers) as constants;
        the shared encoder only ever trains through the partial branch.
        """
        with nn.no_grad():
            true_set = self.encode(sample.true_missing, self.cfg.m_missing, plan)
            return true_set.tokens.data, true_set.coords

    def sample_loss(
        self,
        sample: TrainSample,
        noise_seed: int,
        step: int,
        plans: TrainPlan | None = None,
        training: bool = True,
        targets: tuple[np.ndarray, np.ndarray] | None = None,
    ) -> tuple[Tensor, LossBreakdown]:
        """Per-sample total loss tensor plus its breakdown."""
        if targets is None:
            targets = self.true_targets(sample, plans.missing if plans else None)
        true_mp, true_centers = targets
        gt = as_points(sample.gt, "gt")
        if plans is None:
            fwd_d2, bwd_d2 = constant_nn_d2(as_points(sample.partial), gt)
        else:
            fwd_d2, bwd_d2 = plans.prefix_fwd_d2, plans.prefix_bwd_d2

        rs = RunState(seed=noise_seed, step=step, training=training)
        result = self.complete(sample.partial, noise_seed, step,
                               plans.partial if plans else None, rs)
        l_p_t = alignment_loss(result.pre_mp, true_mp)
        l_c1_t = chamfer_tensor(result.coarse_t, true_centers, self.cfg.cd_variant)
        # The complete cloud is (partial ++ dense); the prefix enters as a constant.
        l_c2_t = chamfer_tensor_with_prefix(result.dense_t, gt, fwd_d2, bwd_d2,
                                            self.cfg.cd_variant)
        total_t = F.add(F.add(l_c1_t, l_c2_t), F.mul(l_p_t, self.cfg.gamma))
        breakdown = LossBreakdown.from_components(
            l_c1_t.item(), l_c2_t.item(), l_p_t.item(), self.cfg.gamma
        )
        return total_t, breakdown

    def parameter_count(self) -> int:
        return self.store.total_parameters()


def train_step(
    model: CompletionModel,
    batch: list[TrainSample],
    step: int,
    seed: int = 0,
    lr: float = 5e-4,
    weight_decay: float = 5e-4,
    plans: list[TrainPlan] | None = None,
) -> LossBreakdown:
    """One optimizer update from the mean loss over a batch.

    Deterministic given (seed, step): query-side noise and dropout masks
    derive from counter-based streams, never from shared state.
    """
    if not batch:
        raise ValueError("batch must contain at least one sample")
    model.store.zero_grads()
    sums = np.zeros(3)
    scale = 1.0 / len(batch)
    for i, sample in enumerate(batch):
        # One noise draw per sample, held across steps: at overfit scale a
        # fresh draw every step turns the alignment term into a stochastic
        # target with an irreducible floor.
        noise_seed = nn.rng.mix(seed, i)
        total_t, bd = model.sample_loss(
            sample, noise_seed, step, plans[i] if plans is not None else None
        )
        F.mul(total_t, scale).backward()
        sums += (bd.l_c1, bd.l_c2, bd.l_p)
    nn.adamw_step(model.store, lr=lr, weight_decay=weight_decay)
    means = sums * scale
    return LossBreakdown.from_components(means[0], means[1], means[2], model.cfg.gamma)
