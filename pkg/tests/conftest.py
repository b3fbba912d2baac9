"""Shared fixtures for the rdalab test suite"""

import numpy as np
import pytest

from floquet_lab import CounterexampleConfig
from rda_dynamics import RDASystem
from spectral_core import FourierField


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def cos_field():
    return FourierField.from_function(np.cos, 8)


@pytest.fixture
def sine_advection():
    return RDASystem.from_catalog('sine-advection')


@pytest.fixture
def linear_heat():
    return RDASystem.from_catalog('linear-heat')


@pytest.fixture(scope='session')
def counterexample():
    """T = 10 on a small truncation; enough for every structural check"""
    return CounterexampleConfig.create(T=10.0, N_max=6)


@pytest.fixture(scope='session')
def short_counterexample():
    return CounterexampleConfig.create(T=0.5, N_max=6)


@pytest.fixture
def config_file(tmp_path):
    """Write a config file and return its path"""
    def write(text: str, name: str = 'run.cfg'):
        path = tmp_path / name
        path.write_text(text)
        return str(path)
    return write
