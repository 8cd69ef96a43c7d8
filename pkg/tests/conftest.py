import numpy as np
import pytest

from octdespeckle import Domain, Volume


@pytest.fixture(scope="session")
def compiled_kernel():
    """Compile (or load from cache) the filter kernel once per session."""
    from octdespeckle import warmup

    warmup()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_unit_volume(shape, seed=0):
    gen = np.random.default_rng(seed)
    data = gen.random(shape, dtype=np.float32)
    return Volume(data, (4.0, 10.0, 10.0), Domain.UNIT)
