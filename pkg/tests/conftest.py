import numpy as np
import pytest

from condwalk.environments import (Constant, HashedIid, Periodic, QuasiPeriodic, Uniform)


@pytest.fixture
def const2():
    return Constant(2, 1.0)


@pytest.fixture
def period2():
    """Period-2 chain on Z with conductances 1, 2, 1, 2, ..."""
    return Periodic.one_dim([1.0, 2.0])


@pytest.fixture
def golden():
    return QuasiPeriodic.golden(1)


@pytest.fixture
def iid2():
    return HashedIid(2, Uniform(0.5, 2.0), seed=7)


@pytest.fixture
def cell2d():
    """A d=2 periodic environment with a 2x2 cell."""
    cell = np.zeros((2, 2, 2))
    cell[..., 0] = [[1.0, 2.0], [3.0, 1.0]]
    cell[..., 1] = [[2.0, 1.0], [1.0, 4.0]]
    return Periodic(cell)
