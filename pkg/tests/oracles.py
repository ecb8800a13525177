"""Independent brute-force evaluators used as test oracles.

Deliberately written as plain Python loops so they share no code path with
the library implementations they verify.
"""
from __future__ import annotations

import math

import numpy as np


def fps_oracle(points: np.ndarray, m: int, seed_index: int) -> list[int]:
    """Greedy farthest point sampling, recomputing every distance per step."""
    chosen = [seed_index]
    n = len(points)
    for _ in range(m - 1):
        best_idx, best_d = -1, -1.0
        for i in range(n):
            d_min = min(
                math.dist(points[i], points[j]) for j in chosen
            )
            if d_min > best_d:  # strict: ties keep the lowest index
                best_idx, best_d = i, d_min
        chosen.append(best_idx)
    return chosen


def knn_oracle(reference: np.ndarray, queries: np.ndarray, k: int) -> list[list[int]]:
    out = []
    for q in queries:
        pairs = sorted((math.dist(q, r), i) for i, r in enumerate(reference))
        out.append([i for _, i in pairs[:k]])
    return out


def nn_oracle(queries: np.ndarray, reference: np.ndarray) -> list[tuple[int, float]]:
    out = []
    for q in queries:
        best_i, best_d = 0, math.inf
        for i, r in enumerate(reference):
            d = math.dist(q, r)
            if d < best_d:
                best_i, best_d = i, d
        out.append((best_i, best_d))
    return out


def chamfer_l1_oracle(a: np.ndarray, b: np.ndarray) -> float:
    fwd = sum(d for _, d in nn_oracle(a, b)) / len(a)
    bwd = sum(d for _, d in nn_oracle(b, a)) / len(b)
    return 0.5 * (fwd + bwd)


def chamfer_l2_oracle(a: np.ndarray, b: np.ndarray) -> float:
    fwd = sum(d**2 for _, d in nn_oracle(a, b)) / len(a)
    bwd = sum(d**2 for _, d in nn_oracle(b, a)) / len(b)
    return fwd + bwd


def dcd_oracle(a: np.ndarray, b: np.ndarray, temperature: float = 1000.0) -> float:
    def half(src, dst):
        matches = nn_oracle(src, dst)
        counts: dict[int, int] = {}
        for i, _ in matches:
            counts[i] = counts.get(i, 0) + 1
        total = 0.0
        for i, d in matches:
            total += 1.0 - math.exp(-temperature * d) / counts[i]
        return total / len(src)

    return 0.5 * half(a, b) + 0.5 * half(b, a)


def fscore_oracle(a: np.ndarray, b: np.ndarray, threshold: float = 0.01) -> float:
    precision = sum(1 for _, d in nn_oracle(a, b) if d <= threshold) / len(a)
    recall = sum(1 for _, d in nn_oracle(b, a) if d <= threshold) / len(b)
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def fidelity_oracle(partial: np.ndarray, output: np.ndarray) -> float:
    return sum(d for _, d in nn_oracle(partial, output)) / len(partial)
