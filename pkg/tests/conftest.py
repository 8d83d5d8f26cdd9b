import numpy as np
import pytest

from ktrr.data import Dataset2D, SyntheticSpec, generate_synthetic
from ktrr.kernels import KernelDescriptor

KERNELS = [
    KernelDescriptor.linear(),
    KernelDescriptor.rbf(1.0),
    KernelDescriptor.polynomial(2),
]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_data():
    return generate_synthetic(SyntheticSpec(clusters=3, samples_per_cluster=6, a=7, b=5,
                                            subspace_rank=2, noise_sigma=0.05, seed=3))


@pytest.fixture
def random_data(rng):
    return Dataset2D(rng.standard_normal((12, 6, 4)))


def random_orthonormal(rng, b, r):
    Q, _ = np.linalg.qr(rng.standard_normal((b, r)))
    return Q
