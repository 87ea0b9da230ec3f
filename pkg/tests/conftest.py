import numpy as np
import pytest

from geoseg import BinaryMask, GridSpec, ProbabilityMap


def random_mask(rng, dims, p=0.3, spacing=(1.0, 1.0, 1.0)):
    """Random mask guaranteed to have both foreground and background."""
    grid = GridSpec(dims, spacing)
    while True:
        m = (rng.random(dims) < p).astype(np.float64)
        if 0 < m.sum() < grid.voxel_count:
            return BinaryMask(grid, m)


def random_pair(rng, dims, spacing=(1.0, 1.0, 1.0), p=0.3):
    """(ProbabilityMap, BinaryMask) pair on a shared grid."""
    g = random_mask(rng, dims, p, spacing)
    s = ProbabilityMap(g.grid, rng.random(dims))
    return s, g


def gradcheck_pair(rng, dims, spacing=(1.0, 1.0, 1.0), p=0.3):
    """Pair where s stays in (0.1, 0.9) and |s - g| >= 0.1, so the sign and
    threshold conventions stay fixed under 1e-5 perturbations."""
    g = random_mask(rng, dims, p, spacing)
    fg = g.data > 0
    s = np.where(
        fg,
        rng.uniform(0.55, 0.9, dims),
        rng.uniform(0.1, 0.45, dims),
    )
    return ProbabilityMap(g.grid, s), g


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
