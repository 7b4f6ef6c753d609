import numpy as np
import pytest

from wavevit import kernels


def rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


def rand4(seed, dims, dtype=np.float64, lo=-1.0, hi=1.0):
    return rng(seed).uniform(lo, hi, size=dims).astype(dtype)


@pytest.fixture
def pure_backend():
    """Force the NumPy backend (bit-exact pins are defined against it)."""
    with kernels.use_backend("pure"):
        yield


@pytest.fixture(params=sorted(kernels.available_backends()))
def each_backend(request):
    """Run a test once per available kernel backend."""
    with kernels.use_backend(request.param):
        yield request.param
