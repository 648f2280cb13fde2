import math

import numpy as np
import pytest
from scipy.stats import unitary_group

LN2 = math.log(2)


def rand_complex(rng, *shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def rand_hermitian(rng, d):
    g = rand_complex(rng, d, d)
    return (g + g.conj().T) / 2


def rand_psd(rng, d, rank=None):
    g = rand_complex(rng, d, rank or d)
    return g @ g.conj().T


def rand_pd(rng, d):
    return rand_psd(rng, d) + 0.05 * np.eye(d)


def rand_unitary(rng, d):
    return unitary_group.rvs(d, random_state=rng)


def rand_projector(rng, d, rank=None):
    if rank is None:
        rank = int(rng.integers(0, d + 1))
    v = rand_unitary(rng, d)[:, :rank]
    return v @ v.conj().T


def rand_input(rng, d):
    """Random matrix A with Tr conj(A) A^T = 1 (a unit vector |A>>)."""
    a = rand_complex(rng, d, d)
    return a / np.linalg.norm(a)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
