import numpy as np
import pytest

from pim_sumrate.scenario import ChannelSet, complex_gaussian


@pytest.fixture
def rng():
    return np.random.default_rng(20261018)


def random_channels(rng, K, M, N):
    return ChannelSet(complex_gaussian(rng, (N, M)), complex_gaussian(rng, (K, N)))


def unit_modulus(rng, n):
    return np.exp(1j * rng.uniform(0, 2 * np.pi, n))
