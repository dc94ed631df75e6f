import numpy as np
import pytest

from ltmoments import GeneratorMatrix


@pytest.fixture
def two_state_gen():
    """Symmetric two-state chain, unit rates both ways."""
    return GeneratorMatrix(states=(0, 1), rates=[[-1.0, 1.0], [1.0, -1.0]], origin=0)


@pytest.fixture
def escape_gen():
    """Leaves state 0 at rate 2 and never returns."""
    return GeneratorMatrix(states=(0, 1), rates=[[-2.0, 2.0], [0.0, 0.0]], origin=0)


@pytest.fixture
def single_state_gen():
    return GeneratorMatrix(states=(0,), rates=[[0.0]], origin=0)
