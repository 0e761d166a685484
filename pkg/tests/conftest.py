import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from cyclicmc import chain
from cyclicmc.samplers import FlipChainSpec, make_ar1_sampler, make_flip_chain


def rng_from(seed, *key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


@pytest.fixture(scope="session")
def flip_spec():
    return FlipChainSpec(0.25, 0.5)


@pytest.fixture(scope="session")
def flip_chain_1m(flip_spec):
    """One million flip-chain samples (a=0.25, b=0.5), shared across tests."""
    sampler = make_flip_chain(flip_spec)
    return chain.run_chain(sampler, 10**6, rng_from(1))


@pytest.fixture(scope="session")
def ar1_chain_1m():
    """One million AR(1) phi=0.5 samples, shared across tests."""
    sampler = make_ar1_sampler(0.5)
    return chain.run_chain(sampler, 10**6, rng_from(100))
