import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def central_difference(fn, x, h=1e-5):
    """Central finite-difference gradient of a scalar function of an array."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        xp = x.copy()
        xp[idx] += h
        xm = x.copy()
        xm[idx] -= h
        grad[idx] = (fn(xp) - fn(xm)) / (2.0 * h)
        it.iternext()
    return grad


def relative_error(approx, exact):
    denom = max(np.abs(exact).max(), 1e-8)
    return np.abs(approx - exact).max() / denom
