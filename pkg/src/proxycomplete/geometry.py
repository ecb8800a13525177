"""Deterministic point-set kernels.

Sampling, neighborhoods, surface normals and the missing-part extraction
procedure used to split a complete cloud into existing/missing subsets
relative to a partial scan.  Everything here is a pure function over numpy
arrays: identical inputs give bit-identical outputs, and all tie-breaking
is by lowest index.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "NormalField",
    "PartitionResult",
    "as_points",
    "farthest_point_sample",
    "knn",
    "estimate_normals",
    "point_to_point_distance",
    "point_to_plane_distance",
    "extract_missing_part",
    "downsample",
]


def as_points(points, name: str = "points") -> np.ndarray:
    """Validate and return an (n, 3) float64 point array.

    Raises ValueError for empty input, wrong shape, or non-finite values.
    """
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"{name} must have shape (n, 3), got {arr.shape}")
    if arr.shape[0] == 0:
        raise ValueError(f"{name} must contain at least one point")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite coordinates")
    return arr


@dataclass
class NormalField:
    """Unit surface normals, one per point of the associated cloud.

    ``degenerate_count`` counts neighborhoods where all points coincide;
    those normals default to (0, 0, 1).
    """

    normals: np.ndarray
    degenerate_count: int = 0


@dataclass
class PartitionResult:
    """Existing/missing split of a ground-truth cloud against a partial scan."""

    existing_idx: np.ndarray
    missing_idx: np.ndarray
    distances: np.ndarray


def farthest_point_sample(points, m: int, seed_index: int | None = None) -> np.ndarray:
    """Greedy max-min subsampling; returns ``m`` distinct indices.

    The first selected index is ``seed_index`` (default: the point nearest
    the centroid).  Every following pick maximizes the minimum distance to
    the already-selected set, ties broken by lowest index.

    Args:
        points: (n, 3) cloud.
        m: number of indices to select, 1 <= m <= n.
        seed_index: index of the first selection; None picks the point
            nearest the centroid.
    """
    pts = as_points(points)
    n = pts.shape[0]
    if not 1 <= m <= n:
        raise ValueError(f"m must be in [1, {n}], got {m}")
    if seed_index is None:
        d_centroid = np.sum((pts - pts.mean(axis=0)) ** 2, axis=1)
        seed_index = int(np.argmin(d_centroid))
    if not 0 <= seed_index < n:
        raise ValueError(f"seed_index {seed_index} out of range for {n} points")

    chosen = np.empty(m, dtype=np.int64)
    chosen[0] = seed_index
    # Squared distances preserve both the arg-max and its ties.
    min_d2 = np.sum((pts - pts[seed_index]) ** 2, axis=1)
    for i in range(1, m):
        nxt = int(np.argmax(min_d2))
        chosen[i] = nxt
        np.minimum(min_d2, np.sum((pts - pts[nxt]) ** 2, axis=1), out=min_d2)
    return chosen


def knn(reference, queries, k: int, chunk: int = 1024) -> np.ndarray:
    """Indices of the ``k`` nearest reference points for every query.

    Row q lists reference indices by ascending Euclidean distance; equal
    distances are ordered by ascending index.  Queries are processed in
    chunks so the full pairwise matrix is never materialized.
    """
    ref = as_points(reference, "reference")
    qry = as_points(queries, "queries")
    if not 1 <= k <= ref.shape[0]:
        raise ValueError(f"k must be in [1, {ref.shape[0]}], got {k}")

    out = np.empty((qry.shape[0], k), dtype=np.int64)
    ref_sq = np.sum(ref**2, axis=1)
    for start in range(0, qry.shape[0], chunk):
        q = qry[start : start + chunk]
        d2 = ref_sq[None, :] - 2.0 * (q @ ref.T) + np.sum(q**2, axis=1)[:, None]
        # d2 can suffer cancellation; exact distances are re-derived where
        # ties matter, but a stable sort on d2 already honors the tie rule
        # because equal points produce equal d2 values.
        order = np.argsort(d2, axis=1, kind="stable")
        out[start : start + chunk] = order[:, :k]
    return out


def _eigvec_for(mats: np.ndarray, lam: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvector of each 3x3 symmetric matrix for eigenvalue ``lam``.

    Uses the largest cross product of two rows of (A - lam I).  Returns the
    unnormalized vectors and their squared norms (tiny norm means the
    eigenvalue is ill-separated and the caller should fall back).
    """
    m = mats - lam[:, None, None] * np.eye(3)
    c01 = np.cross(m[:, 0], m[:, 1])
    c02 = np.cross(m[:, 0], m[:, 2])
    c12 = np.cross(m[:, 1], m[:, 2])
    cand = np.stack([c01, c02, c12], axis=1)
    norms = np.sum(cand**2, axis=2)
    best = np.argmax(norms, axis=1)
    rows = np.arange(mats.shape[0])
    return cand[rows, best], norms[rows, best]


def _smallest_eigvec3(mats: np.ndarray, largest: bool = False) -> np.ndarray:
    """Batched eigenvector of the smallest (or largest) eigenvalue of
    symmetric 3x3 matrices.

    Closed-form characteristic-polynomial solve, cascading to LAPACK when
    the target eigenvalue is nearly repeated (gap < 1e-12 * trace) or the
    cross-product construction degenerates.
    """
    n = mats.shape[0]
    tr = np.trace(mats, axis1=1, axis2=2)
    q = tr / 3.0
    a_q = mats - q[:, None, None] * np.eye(3)
    p2 = np.sum(a_q**2, axis=(1, 2)) / 6.0
    p = np.sqrt(np.maximum(p2, 0.0))

    safe_p = np.where(p > 0.0, p, 1.0)
    b = a_q / safe_p[:, None, None]
    detb = np.linalg.det(b)
    r = np.clip(detb / 2.0, -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    # Ascending eigenvalues of the shifted matrix.
    e2 = q + 2.0 * p * np.cos(phi)
    e0 = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    e1 = 3.0 * q - e0 - e2

    target = e2 if largest else e0
    neighbor = e1
    gap = np.abs(neighbor - target)
    scale = np.maximum(np.abs(tr), 1e-300)
    need_fallback = (gap < 1e-12 * scale) | (p == 0.0)

    vec, vnorm = _eigvec_for(mats, target)
    need_fallback |= vnorm < 1e-24 * np.maximum(scale, 1.0) ** 2

    out = np.zeros((n, 3))
    ok = ~need_fallback
    if np.any(ok):
        out[ok] = vec[ok] / np.sqrt(vnorm[ok])[:, None]
    if np.any(need_fallback):
        _, vecs = np.linalg.eigh(mats[need_fallback])
        col = 2 if largest else 0
        out[need_fallback] = vecs[:, :, col]
    return out


def estimate_normals(points, k: int = 16, eigen_mode: str = "smallest") -> NormalField:
    """Per-point unit normals from the covariance of each k-neighborhood.

    For every point, the covariance of its k nearest neighbors about their
    centroid is eigendecomposed and the unit eigenvector of the smallest
    eigenvalue is returned (``eigen_mode="largest"`` keeps the contrary
    reading available).  Signs are normalized so the component of largest
    magnitude is positive.  Coincident neighborhoods yield (0, 0, 1) and
    increment ``degenerate_count``.
    """
    pts = as_points(points)
    if k < 3:
        raise ValueError(f"k must be >= 3, got {k}")
    if k > pts.shape[0]:
        raise ValueError(f"k={k} exceeds point count {pts.shape[0]}")
    if eigen_mode not in ("smallest", "largest"):
        raise ValueError(f"eigen_mode must be 'smallest' or 'largest', got {eigen_mode!r}")

    idx = knn(pts, pts, k)
    neigh = pts[idx]
    centered = neigh - neigh.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / k

    degenerate = np.trace(cov, axis1=1, axis2=2) < 1e-30
    normals = _smallest_eigvec3(cov, largest=(eigen_mode == "largest"))
    normals[degenerate] = (0.0, 0.0, 1.0)

    # Deterministic orientation: flip so the largest-magnitude component is positive.
    lead = np.argmax(np.abs(normals), axis=1)
    signs = np.sign(normals[np.arange(len(normals)), lead])
    signs[signs == 0] = 1.0
    normals = normals * signs[:, None]
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return NormalField(normals=normals, degenerate_count=int(degenerate.sum()))


def point_to_point_distance(a, r) -> float:
    """Euclidean length of the error vector a - r."""
    return float(np.linalg.norm(np.asarray(a, dtype=np.float64) - np.asarray(r, dtype=np.float64)))


def point_to_plane_distance(a, r, n) -> float:
    """Length of the error vector a - r projected onto the unit normal n."""
    n = np.asarray(n, dtype=np.float64)
    norm = np.linalg.norm(n)
    if abs(norm - 1.0) > 1e-6:
        raise ValueError(f"normal must be unit length, got norm {norm}")
    e = np.asarray(a, dtype=np.float64) - np.asarray(r, dtype=np.float64)
    return float(abs(e @ n))


def extract_missing_part(
    gt,
    partial,
    k_normal: int = 16,
    alpha: float = 0.2,
    beta: float = 0.8,
    threshold: float = 0.01,
    eigen_mode: str = "smallest",
) -> PartitionResult:
    """Partition ground-truth points into existing and missing sets.

    Normals are estimated on the partial scan; each ground-truth point is
    matched to its nearest partial point and scored with the weighted sum
    of point-to-point and point-to-plane distances,
    D = alpha * c2c + beta * c2p.  Points with D <= threshold belong to the
    existing part, all others to the missing part.

    Args:
        gt: complete cloud, (N, 3).
        partial: partial scan, at least ``k_normal`` points.
        k_normal: neighborhood size for normal estimation.
        alpha: weight of the point-to-point distance.
        beta: weight of the point-to-plane distance.
        threshold: classification threshold on D.
        eigen_mode: eigenvector selection for the normals.
    """
    gt_pts = as_points(gt, "gt")
    part_pts = as_points(partial, "partial")
    if part_pts.shape[0] < k_normal:
        raise ValueError(
            f"partial must contain at least k_normal={k_normal} points, got {part_pts.shape[0]}"
        )

    field = estimate_normals(part_pts, k_normal, eigen_mode)
    nn_idx = knn(part_pts, gt_pts, 1)[:, 0]
    matched = part_pts[nn_idx]
    matched_normals = field.normals[nn_idx]

    err = gt_pts - matched
    c2c = np.linalg.norm(err, axis=1)
    c2p = np.abs(np.sum(err * matched_normals, axis=1))
    dist = alpha * c2c + beta * c2p

    existing_mask = dist <= threshold
    all_idx = np.arange(gt_pts.shape[0], dtype=np.int64)
    return PartitionResult(
        existing_idx=all_idx[existing_mask],
        missing_idx=all_idx[~existing_mask],
        distances=dist,
    )


def downsample(points, m: int) -> np.ndarray:
    """Resample a cloud to exactly ``m`` points.

    m <= count: farthest point sampling seeded at the point nearest the
    centroid.  m > count: round-robin duplication in index order, which is
    deterministic and keeps every original point.
    """
    pts = as_points(points)
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    n = pts.shape[0]
    if m <= n:
        return pts[farthest_point_sample(pts, m)]
    return pts[np.arange(m) % n]
