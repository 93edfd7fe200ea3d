import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("calib6", max_examples=40, deadline=None, derandomize=True)
settings.load_profile("calib6")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def complex_of(v):
    """x + i y for a real 6-vector (x1, x2, x3, y1, y2, y3)."""
    v = np.asarray(v)
    return v[..., :3] + 1j * v[..., 3:]


def phi_oracle(u, v, w):
    """Re dz1^dz2^dz3 evaluated as the real part of a complex determinant."""
    return np.linalg.det(np.stack([complex_of(u), complex_of(v), complex_of(w)], axis=-1)).real


def random_su3(rng, scale=1.0):
    a = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    x = scale * (a - a.conj().T) / 2
    x -= np.trace(x) / 3 * np.eye(3)
    from scipy.linalg import expm

    return expm(x)
