import numpy as np
import pytest

from flowseg.synthetic import BlobTexture


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def texture():
    return BlobTexture.random(np.random.default_rng(7), 96, 96, n_blobs=60, sigma_range=(4.0, 10.0))


def random_flow(rng, h=12, w=17, scale=5.0):
    from flowseg.imaging import FlowField
    return FlowField(rng.normal(scale=scale, size=(h, w)), rng.normal(scale=scale, size=(h, w)))
