"""Architecture hyperparameters and named profiles."""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace


@dataclass(frozen=True)
class ModelConfig:
    """Every knob of the completion network.

    The encoder downsamples an input cloud twice: to a quarter of its size,
    then to the requested proxy count (``n_existing`` for the partial
    branch, ``m_missing`` for the true-missing branch).
    """

    name: str
    p_in: int            # partial input point count
    p_missing: int       # true-missing input point count (training branch)
    gt_count: int        # complete cloud size used when preparing data
    n_existing: int      # existing-proxy count N
    m_missing: int       # missing-proxy count M
    dim_lift: int        # width of the first per-point lift from xyz
    dim_stage1: int      # feature width after the first downsampling stage
    dim_stage2: int      # feature width after the second downsampling stage
    dim_proxy: int       # proxy channel count C
    groups: int          # channel groups U in the missing feature generator
    k_neighbors: int     # neighborhood size K for all local ops
    depth: int           # transformer block count
    heads: int           # attention heads
    fold_grid: int       # points generated per coarse point (perfect square)
    gamma: float = 1.5   # alignment loss weight
    cd_variant: str = "l1"
    dropout: float = 0.1
    fold_span: float = 0.05
    shared_kv: bool = True

    def validate(self) -> "ModelConfig":
        c, u = self.dim_proxy, self.groups
        if (self.m_missing * c) % (self.n_existing * u) != 0:
            raise ValueError(
                f"(M*C) must be divisible by (N*U): "
                f"({self.m_missing}*{c}) % ({self.n_existing}*{u}) != 0"
            )
        if c % u != 0:
            raise ValueError(f"proxy dim {c} not divisible by groups {u}")
        if c % self.heads != 0:
            raise ValueError(f"proxy dim {c} not divisible by heads {self.heads}")
        edge = math.isqrt(self.fold_grid)
        if edge * edge != self.fold_grid:
            raise ValueError(f"fold_grid {self.fold_grid} is not a perfect square")
        if self.p_in < 16:
            raise ValueError(f"p_in must be >= 16, got {self.p_in}")
        if self.cd_variant not in ("l1", "l2"):
            raise ValueError(f"cd_variant must be 'l1' or 'l2', got {self.cd_variant!r}")
        for label, p, n_out in (("partial", self.p_in, self.n_existing),
                                ("missing", self.p_missing, self.m_missing)):
            stage1 = p // 4
            if stage1 < n_out:
                raise ValueError(f"{label} branch: stage-1 count {stage1} below proxy count {n_out}")
            if self.k_neighbors > n_out:
                raise ValueError(
                    f"{label} branch: k_neighbors {self.k_neighbors} exceeds proxy count {n_out}"
                )
        return self

    @property
    def group_width(self) -> int:
        return self.dim_proxy // self.groups

    @property
    def group_expansion(self) -> int:
        return (self.m_missing * self.dim_proxy) // (self.n_existing * self.groups)

    @property
    def fold_edge(self) -> int:
        return math.isqrt(self.fold_grid)

    @property
    def dense_count(self) -> int:
        return self.m_missing * self.fold_grid

    @property
    def complete_count(self) -> int:
        return self.p_in + self.dense_count

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d).validate()


PROFILES: dict[str, ModelConfig] = {
    "pcn": ModelConfig(
        name="pcn", p_in=2048, p_missing=3584, gt_count=16384,
        n_existing=128, m_missing=224,
        dim_lift=32, dim_stage1=128, dim_stage2=384, dim_proxy=384,
        groups=16, k_neighbors=16, depth=8, heads=8, fold_grid=64,
    ),
    "shapenet55": ModelConfig(
        name="shapenet55", p_in=2048, p_missing=1536, gt_count=8192,
        n_existing=128, m_missing=96,
        dim_lift=32, dim_stage1=128, dim_stage2=384, dim_proxy=384,
        groups=16, k_neighbors=16, depth=8, heads=8, fold_grid=64,
    ),
    "toy": ModelConfig(
        name="toy", p_in=256, p_missing=224, gt_count=1024,
        n_existing=32, m_missing=28,
        dim_lift=16, dim_stage1=32, dim_stage2=64, dim_proxy=64,
        groups=8, k_neighbors=8, depth=2, heads=4, fold_grid=16,
        dropout=0.0,
    ),
    # Smallest config that satisfies every divisibility constraint; used by
    # the finite-difference end-to-end check.
    "micro": ModelConfig(
        name="micro", p_in=64, p_missing=112, gt_count=256,
        n_existing=8, m_missing=14,
        dim_lift=8, dim_stage1=16, dim_stage2=32, dim_proxy=32,
        groups=4, k_neighbors=4, depth=2, heads=4, fold_grid=4,
        dropout=0.0,
    ),
}


def _parse_override(cfg: ModelConfig, key: str, raw: str):
    field_types = {f.name: f.type for f in fields(ModelConfig)}
    if key not in field_types:
        raise ValueError(f"unknown config key {key!r}")
    current = getattr(cfg, key)
    if isinstance(current, bool):
        if raw.lower() not in ("true", "false", "1", "0"):
            raise ValueError(f"config key {key!r} expects a boolean, got {raw!r}")
        return raw.lower() in ("true", "1")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    return raw


def get_profile(name: str, overrides: dict[str, str] | None = None) -> ModelConfig:
    """Look up a named profile, optionally overridden by key=value pairs.

    Unknown keys are rejected with the offending key named.
    """
    if name not in PROFILES:
        raise ValueError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}")
    cfg = PROFILES[name]
    if overrides:
        parsed = {k: _parse_override(cfg, k, v) for k, v in overrides.items()}
        cfg = replace(cfg, **parsed)
    return cfg.validate()


def _linear_params(d_in: int, d_out: int, bias: bool = True) -> int:
    return d_in * d_out + (d_out if bias else 0)


def _mlp_params(dims: list[int]) -> int:
    return sum(_linear_params(a, b) for a, b in zip(dims[:-1], dims[1:]))


def _vector_attention_params(dim: int) -> int:
    qkv = 3 * _linear_params(dim, dim)
    pos = _mlp_params([3, dim, dim])
    attn = _mlp_params([dim, dim, dim])
    return qkv + pos + attn


def expected_parameter_count(cfg: ModelConfig) -> int:
    """Closed-form parameter count, derived only from the config.

    Mirrors the construction layer by layer; the benchmark command checks
    the built store against this number exactly.
    """
    c1, c2, c = cfg.dim_stage1, cfg.dim_stage2, cfg.dim_proxy
    total = 0
    # encoder: lift, two downsampling stages, seed projection, position extractor
    total += _linear_params(3, cfg.dim_lift)
    total += _linear_params(cfg.dim_lift, c1) + _vector_attention_params(c1)
    total += _linear_params(c1, c2) + _vector_attention_params(c2)
    total += _linear_params(c2, c)
    total += _linear_params(3 + c, c) + _linear_params(c, c)  # transition + attention score
    # missing feature generator (one shared per-group map) and coarse head
    total += _linear_params(cfg.group_width, cfg.group_expansion)
    total += _linear_params(c, 3 * cfg.m_missing)
    # transformer blocks
    per_block = 0
    per_block += c * c  # query projection, no bias
    per_block += c * c  # shared key/value projection, no bias
    if not cfg.shared_kv:
        per_block += c * c
    per_block += _linear_params(c, c)  # output projection
    per_block += 2 * c  # layer norm gain and bias
    per_block += _linear_params(c, 2 * c) + _linear_params(2 * c, c)  # feed-forward
    total += cfg.depth * per_block
    # folding decoder
    total += _mlp_params([c + 2, c, 3])
    total += _mlp_params([c + 3, c, 3])
    return total
