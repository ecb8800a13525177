"""Missing-part-sensitive attention stack.

Queries come from the missing proxies, keys and values from the existing
proxies, so every block conditions the prediction on the observed shape.
Per block: T = LayerNorm(Q + attention), output = FFN(T) + T.
"""
from __future__ import annotations

from .. import nn
from ..nn import tensor as F
from ..nn.layers import RunState
from ..nn.tensor import Tensor
from .config import ModelConfig


class SensitiveBlock:
    def __init__(self, store: nn.ParameterStore, name: str, cfg: ModelConfig):
        c = cfg.dim_proxy
        self.mha = nn.MultiHeadAttention(store, f"{name}.mha", c, cfg.heads, shared_kv=cfg.shared_kv)
        self.norm = nn.LayerNorm(store, f"{name}.norm", c)
        self.ffn = nn.FeedForward(store, f"{name}.ffn", c, dropout=cfg.dropout)

    def __call__(self, x: Tensor, ep_tokens: Tensor, rs: RunState) -> Tensor:
        q = self.mha.query(x)
        attended = self.mha.attend(q, ep_tokens)
        t = self.norm(F.add(q, attended))
        return F.add(self.ffn(t, rs), t)


class MissingPartSensitiveTransformer:
    def __init__(self, store: nn.ParameterStore, name: str, cfg: ModelConfig):
        self.blocks = [SensitiveBlock(store, f"{name}.block{i}", cfg) for i in range(cfg.depth)]

    def __call__(self, mp_tokens: Tensor, ep_tokens: Tensor, rs: RunState = nn.EVAL) -> Tensor:
        x = mp_tokens
        for block in self.blocks:
            x = block(x, ep_tokens, rs)
        return x
