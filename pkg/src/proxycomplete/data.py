"""Synthetic shape generation, viewpoint occlusion, and cloud file formats.

Shapes stand in for CAD models at desk scale: uniform surface samples of a
few primitives, normalized so the bounding box fits [-1, 1]^3.  Occlusion
follows the training protocol of deleting the fraction of points nearest a
camera placed along a viewpoint direction.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .geometry import as_points, downsample

SHAPE_KINDS = ("sphere", "cube", "cylinder", "plane", "torus")


class CloudFormatError(ValueError):
    """Raised when a cloud file cannot be parsed; message carries the byte offset."""


@dataclass
class ShapeSpec:
    kind: str
    samples: int
    seed: int = 0
    params: dict = field(default_factory=dict)


@dataclass
class OcclusionSpec:
    """Viewpoint deletion protocol.

    ``viewpoint`` is a direction; the camera sits at twice the bounding
    radius along it.  ``remove_fraction`` of the points nearest the camera
    are deleted.  The survivors resample to ``resample_to`` and the removed
    points to ``missing_to``.
    """

    viewpoint: tuple[float, float, float]
    remove_fraction: float
    resample_to: int
    missing_to: int


def _sphere(rng: np.random.Generator, n: int, radius: float) -> np.ndarray:
    v = rng.standard_normal((n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return radius * v


def _cube(rng: np.random.Generator, n: int, edge: float) -> np.ndarray:
    face = rng.integers(0, 6, size=n)
    uv = rng.uniform(-edge / 2, edge / 2, size=(n, 2))
    pts = np.empty((n, 3))
    axis = face // 2
    sign = np.where(face % 2 == 0, 1.0, -1.0)
    for a in range(3):
        mask = axis == a
        others = [d for d in range(3) if d != a]
        pts[mask, a] = sign[mask] * edge / 2
        pts[np.ix_(mask, others)] = uv[mask]
    return pts


def _cylinder(rng: np.random.Generator, n: int, radius: float, height: float) -> np.ndarray:
    # area-weighted split between the side and the two caps
    side_area = 2 * np.pi * radius * height
    cap_area = np.pi * radius**2
    p_side = side_area / (side_area + 2 * cap_area)
    pick = rng.uniform(size=n)
    theta = rng.uniform(0, 2 * np.pi, size=n)
    pts = np.empty((n, 3))
    side = pick < p_side
    pts[side, 0] = radius * np.cos(theta[side])
    pts[side, 1] = radius * np.sin(theta[side])
    pts[side, 2] = rng.uniform(-height / 2, height / 2, size=int(side.sum()))
    cap = ~side
    r = radius * np.sqrt(rng.uniform(size=int(cap.sum())))
    pts[cap, 0] = r * np.cos(theta[cap])
    pts[cap, 1] = r * np.sin(theta[cap])
    pts[cap, 2] = np.where(rng.uniform(size=int(cap.sum())) < 0.5, height / 2, -height / 2)
    return pts


def _plane(rng: np.random.Generator, n: int, width: float, depth: float) -> np.ndarray:
    pts = np.zeros((n, 3))
    pts[:, 0] = rng.uniform(-width / 2, width / 2, size=n)
    pts[:, 1] = rng.uniform(-depth / 2, depth / 2, size=n)
    return pts


def _torus(rng: np.random.Generator, n: int, major: float, minor: float) -> np.ndarray:
    # rejection-sample the toroidal angle so the surface density is uniform
    pts = np.empty((n, 3))
    done = 0
    while done < n:
        need = n - done
        u = rng.uniform(0, 2 * np.pi, size=need * 2)
        phi = rng.uniform(0, 2 * np.pi, size=need * 2)
        accept = rng.uniform(size=need * 2) < (major + minor * np.cos(phi)) / (major + minor)
        u, phi = u[accept][:need], phi[accept][:need]
        got = len(u)
        r = major + minor * np.cos(phi)
        pts[done : done + got, 0] = r * np.cos(u)
        pts[done : done + got, 1] = r * np.sin(u)
        pts[done : done + got, 2] = minor * np.sin(phi)
        done += got
    return pts


def generate_shape(spec: ShapeSpec) -> np.ndarray:
    """Uniform surface samples of a primitive, normalized into [-1, 1]^3.

    Deterministic per (kind, samples, seed, params); exact point count.
    """
    if spec.kind not in SHAPE_KINDS:
        raise ValueError(f"unknown shape kind {spec.kind!r}; choose from {SHAPE_KINDS}")
    if spec.samples < 1:
        raise ValueError(f"samples must be >= 1, got {spec.samples}")
    rng = np.random.default_rng(spec.seed)
    p = spec.params
    if spec.kind == "sphere":
        pts = _sphere(rng, spec.samples, p.get("radius", 1.0))
    elif spec.kind == "cube":
        pts = _cube(rng, spec.samples, p.get("edge", 2.0))
    elif spec.kind == "cylinder":
        pts = _cylinder(rng, spec.samples, p.get("radius", 0.7), p.get("height", 1.8))
    elif spec.kind == "plane":
        pts = _plane(rng, spec.samples, p.get("width", 2.0), p.get("depth", 2.0))
    else:
        pts = _torus(rng, spec.samples, p.get("major", 0.7), p.get("minor", 0.3))

    center = (pts.min(axis=0) + pts.max(axis=0)) / 2.0
    pts = pts - center
    extent = np.abs(pts).max()
    if extent > 0:
        pts = pts / extent
    return pts


def occlude(gt, spec: OcclusionSpec) -> tuple[np.ndarray, np.ndarray]:
    """Delete the points nearest a viewpoint and resample both fragments.

    Before resampling, removed and kept points partition the input
    exactly.  Returns (partial, true_missing).
    """
    pts = as_points(gt, "gt")
    if not 0.0 <= spec.remove_fraction < 1.0:
        raise ValueError(f"remove_fraction must be in [0, 1), got {spec.remove_fraction}")
    direction = np.asarray(spec.viewpoint, dtype=np.float64)
    norm = np.linalg.norm(direction)
    if norm == 0:
        raise ValueError("viewpoint direction must be non-zero")
    direction = direction / norm

    centroid = pts.mean(axis=0)
    radius = np.linalg.norm(pts - centroid, axis=1).max()
    camera = centroid + direction * 2.0 * radius

    n_remove = int(spec.remove_fraction * pts.shape[0])
    order = np.argsort(np.sum((pts - camera) ** 2, axis=1), kind="stable")
    removed_idx = np.sort(order[:n_remove])
    kept_idx = np.sort(order[n_remove:])

    partial = downsample(pts[kept_idx], spec.resample_to)
    if n_remove == 0:
        return partial, np.empty((0, 3))
    true_missing = downsample(pts[removed_idx], spec.missing_to)
    return partial, true_missing


def resample(pc, m: int) -> np.ndarray:
    """Resample to exactly m points (FPS down, round-robin pad up)."""
    return downsample(pc, m)


# ---- file formats -----------------------------------------------------

PCF_MAGIC = b"PCF1"


def write_cloud(pc, path) -> None:
    """Write a cloud as text ".xyz" or binary ".pcf" depending on extension."""
    pts = as_points(pc)
    path = str(path)
    if path.endswith(".xyz"):
        lines = [f"{x:.9g} {y:.9g} {z:.9g}" for x, y, z in pts]
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    elif path.endswith(".pcf"):
        payload = np.ascontiguousarray(pts, dtype="<f4").tobytes()
        with open(path, "wb") as fh:
            fh.write(PCF_MAGIC)
            fh.write(struct.pack("<I", pts.shape[0]))
            fh.write(payload)
    else:
        raise ValueError(f"unsupported cloud extension: {path}")


def _parse_xyz(data: bytes, path: str) -> np.ndarray:
    rows = []
    offset = 0
    for line in data.split(b"\n"):
        stripped = line.strip()
        if stripped:
            parts = stripped.split()
            if len(parts) != 3:
                raise CloudFormatError(
                    f"{path}: expected 3 coordinates at byte offset {offset}, got {len(parts)}"
                )
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise CloudFormatError(f"{path}: malformed number at byte offset {offset}") from None
            if not np.isfinite(rows[-1]).all():
                raise CloudFormatError(f"{path}: non-finite value at byte offset {offset}")
        offset += len(line) + 1
    if not rows:
        raise CloudFormatError(f"{path}: empty cloud file")
    return np.asarray(rows, dtype=np.float64)


def _parse_pcf(data: bytes, path: str) -> np.ndarray:
    if data[:4] != PCF_MAGIC:
        raise CloudFormatError(f"{path}: bad magic at byte offset 0: {data[:4]!r}")
    if len(data) < 8:
        raise CloudFormatError(f"{path}: header truncated at byte offset {len(data)}")
    (count,) = struct.unpack_from("<I", data, 4)
    expected = 8 + 12 * count
    if len(data) < expected:
        raise CloudFormatError(
            f"{path}: truncated payload, file ends at byte offset {len(data)} "
            f"but count {count} requires {expected} bytes"
        )
    if len(data) > expected:
        raise CloudFormatError(f"{path}: trailing data at byte offset {expected}")
    pts = np.frombuffer(data, dtype="<f4", count=3 * count, offset=8).reshape(count, 3)
    bad = ~np.isfinite(pts).all(axis=1)
    if bad.any():
        first = int(np.argmax(bad))
        raise CloudFormatError(f"{path}: non-finite value at byte offset {8 + 12 * first}")
    return pts.astype(np.float64)


def read_cloud(path) -> np.ndarray:
    """Read an ".xyz" or ".pcf" cloud file."""
    path = str(path)
    with open(path, "rb") as fh:
        data = fh.read()
    if path.endswith(".xyz"):
        return _parse_xyz(data, path)
    if path.endswith(".pcf"):
        return _parse_pcf(data, path)
    raise ValueError(f"unsupported cloud extension: {path}")


# ---- training set synthesis --------------------------------------------

def synthesize_training_set(
    n_shapes: int,
    gt_count: int,
    partial_count: int,
    missing_count: int,
    seed: int = 0,
    fraction_range: tuple[float, float] = (0.25, 0.75),
) -> list[dict]:
    """Build shape/occlusion pairs for training.

    Cycles through the shape kinds; the viewpoint and removed fraction are
    drawn per shape from a seeded generator, the fraction inside the
    training range.
    """
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n_shapes):
        kind = SHAPE_KINDS[i % len(SHAPE_KINDS)]
        spec = ShapeSpec(kind=kind, samples=gt_count, seed=int(rng.integers(0, 2**31)))
        gt = generate_shape(spec)
        direction = rng.standard_normal(3)
        direction /= np.linalg.norm(direction)
        occ = OcclusionSpec(
            viewpoint=tuple(direction),
            remove_fraction=float(rng.uniform(*fraction_range)),
            resample_to=partial_count,
            missing_to=missing_count,
        )
        partial, true_missing = occlude(gt, occ)
        out.append(
            {
                "shape": spec,
                "occlusion": occ,
                "gt": gt,
                "partial": partial,
                "true_missing": true_missing,
            }
        )
    return out
