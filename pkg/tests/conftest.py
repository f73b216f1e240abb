import numpy as np
import pytest

from moi2d import ProcessSpec


def random_spec(rng: np.random.Generator, k, *, mu_scale=2.0, s0_range=(-3.0, -0.3)) -> ProcessSpec:
    s0 = rng.uniform(*s0_range, size=2)
    mu = rng.uniform(-mu_scale, mu_scale, size=2)
    return ProcessSpec(mu=tuple(mu), s0=tuple(s0), k=k)


def boundary_points(rng: np.random.Generator, n: int, reach: float) -> np.ndarray:
    """``n`` points split between the two half-axes bounding the third quadrant."""
    r = rng.uniform(0.0, reach, size=n)
    pts = np.zeros((n, 2))
    half = n // 2
    pts[:half, 0] = -r[:half]  # on B1: x2 = 0
    pts[half:, 1] = -r[half:]  # on B2: x1 = 0
    return pts


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
