import numpy as np
import pytest

from dtofkit import DenseDepthMap, SparsePointSet

# Filled by tests/test_acceptance.py; echoed after the run so the one-line
# verdicts survive pytest's output capture.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def smooth_scene(seed: int, height: int = 480, width: int = 640) -> DenseDepthMap:
    """Smooth synthetic indoor-like depth in roughly [0.5, 5.5] m."""
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:height, 0:width]
    gt = (1.5
          + 1.5 * np.sin(x / width * 3 + rng.uniform(0, 6))
          * np.cos(y / height * 2 + rng.uniform(0, 6))
          + 1.0 * (y / height))
    return DenseDepthMap.from_values(np.clip(gt, 0.5, 8.0))


def random_point_set(rng: np.random.Generator, n: int,
                     height: int = 480, width: int = 640,
                     consistent: bool = False) -> SparsePointSet:
    """n random points; consistent=True makes rel a monotone map of depth."""
    flat = rng.choice(height * width, size=n, replace=False)
    rows = flat // width
    cols = flat % width
    depths = rng.uniform(0.3, 9.0, n)
    if consistent:
        rels = 2.0 * depths + 0.1
    else:
        rels = rng.uniform(0.01, 5.0, n)
    return SparsePointSet.build(rows, cols, depths, height, width, rels=rels)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
