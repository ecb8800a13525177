import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def cube_minus_face(n_points: int = 4096, seed: int = 7):
    """Unit-cube surface cloud with the top face removed, membership known.

    Returns (gt, partial, missing_mask) where missing_mask flags the
    ground-truth points on the removed face.
    """
    g = np.random.default_rng(seed)
    face = g.integers(0, 6, size=n_points)
    uv = g.uniform(-1.0, 1.0, size=(n_points, 2))
    pts = np.empty((n_points, 3))
    axis = face // 2
    sign = np.where(face % 2 == 0, 1.0, -1.0)
    for a in range(3):
        mask = axis == a
        others = [d for d in range(3) if d != a]
        pts[mask, a] = sign[mask]
        pts[np.ix_(mask, others)] = uv[mask]
    missing_mask = face == 4  # +z face
    return pts, pts[~missing_mask], missing_mask


@pytest.fixture(scope="session")
def cube_fixture():
    return cube_minus_face()
