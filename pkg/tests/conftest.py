import numpy as np
import pytest


def blobs(rng, centers, per=30, scale=1.0):
    centers = np.asarray(centers, dtype=float)
    pts = [c + scale * rng.standard_normal((per, centers.shape[1])) for c in centers]
    return np.vstack(pts)


def three_blobs(seed, per=30, sep=6.0, dim=2):
    rng = np.random.default_rng(seed)
    centers = np.zeros((3, dim))
    centers[0, 0] = -sep
    centers[1, 0] = sep
    centers[2, 1] = sep
    return blobs(rng, centers, per)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(n, ok, detail)``."""

    def record(number, ok, detail):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number])
