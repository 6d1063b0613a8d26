import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from oscext import (
    SpaceInstance,
    cantor_instance,
    indicator_field,
    ordinal_instance,
    random_instance,
    sequence_space,
)
from oscext.space import MatrixMetric

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def seq10():
    return sequence_space(10)


@pytest.fixture(scope="session")
def seq_indicator(seq10):
    return indicator_field(seq10, [0])


@pytest.fixture(scope="session")
def cantor6():
    return cantor_instance(6)


@pytest.fixture(scope="session")
def cantor8():
    return cantor_instance(8)


@pytest.fixture(scope="session")
def ordinal1():
    return ordinal_instance(1, 10)


@pytest.fixture(scope="session")
def ordinal2():
    return ordinal_instance(2, 6)


@pytest.fixture(scope="session")
def rand60():
    return random_instance(11, 60, 2)


def tiny_matrix_space(data, resolution=0.5, name="tiny"):
    return SpaceInstance(name, MatrixMetric(np.asarray(data, dtype=float)), resolution)
