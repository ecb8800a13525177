"""End-to-end finite-difference check of the training loss."""
from __future__ import annotations

import numpy as np

from .. import nn
from ..nn.gradcheck import CheckResult, relative_error
from .config import get_profile
from .network import CompletionModel, TrainSample


def end_to_end_gradient_check(
    seed: int = 0,
    samples: int = 50,
    eps: float = 1e-5,
    tol: float = 1e-3,
    profile: str = "micro",
) -> CheckResult:
    """Compare analytic gradients of the total loss against central
    differences at ``samples`` randomly chosen parameter entries."""
    from ..data import synthesize_training_set

    cfg = get_profile(profile)
    model = CompletionModel(cfg, seed=seed)
    raw = synthesize_training_set(1, cfg.gt_count, cfg.p_in, cfg.p_missing, seed=seed)[0]
    sample = TrainSample(partial=raw["partial"], gt=raw["gt"], true_missing=raw["true_missing"])
    plans = model.sample_plans(sample)
    noise_seed = nn.rng.mix(seed, 7)
    # The alignment targets are gradient-blocked constants of the loss, so
    # the finite-difference closure must hold them fixed.
    targets = model.true_targets(sample, plans.missing)

    def loss_value() -> float:
        total_t, _ = model.sample_loss(sample, noise_seed, step=0, plans=plans,
                                       training=False, targets=targets)
        return total_t.item()

    model.store.zero_grads()
    total_t, _ = model.sample_loss(sample, noise_seed, step=0, plans=plans,
                                   training=False, targets=targets)
    total_t.backward()

    names = model.store.names()
    sizes = np.array([model.store[n].size for n in names])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    rng = np.random.default_rng(nn.rng.mix(seed, 99))
    picks = rng.choice(offsets[-1], size=min(samples, int(offsets[-1])), replace=False)

    worst = 0.0
    for flat_pos in sorted(int(p) for p in picks):
        slot = int(np.searchsorted(offsets, flat_pos, side="right")) - 1
        param = model.store[names[slot]]
        local = flat_pos - int(offsets[slot])
        flat = param.data.reshape(-1)
        orig = flat[local]
        flat[local] = orig + eps
        hi = loss_value()
        flat[local] = orig - eps
        lo = loss_value()
        flat[local] = orig
        numeric = (hi - lo) / (2.0 * eps)
        analytic = 0.0 if param.grad is None else float(param.grad.reshape(-1)[local])
        worst = max(worst, relative_error(np.array([analytic]), np.array([numeric])))
    return CheckResult("end_to_end_loss", worst, tol)
