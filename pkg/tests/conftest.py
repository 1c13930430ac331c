import numpy as np
import pytest

from monchain.gaussian import GaussianState, orthonormalize_columns


def random_state(L: int, N: int, seed: int) -> GaussianState:
    """Haar-ish random Slater determinant from a seeded complex Gaussian."""
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((L, N)) + 1j * rng.standard_normal((L, N))
    return GaussianState(orthonormalize_columns(raw))


def random_unitary(n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q, r = np.linalg.qr(raw)
    return q * (np.diag(r) / np.abs(np.diag(r)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
