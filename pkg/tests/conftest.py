import numpy as np
import pytest

from src import logs
from src.matrix_core import (SparseRowMatrix, column_stats, generate_lowerbound_dataset,
                             generate_random_sparse)


@pytest.fixture(autouse=True)
def _normal_verbosity():
    logs.set_verbosity("normal")
    yield
    logs.set_verbosity("normal")


@pytest.fixture
def identity3():
    return SparseRowMatrix.from_dense(np.eye(3))


@pytest.fixture
def small_binary():
    return generate_random_sparse(300, 12, 4, "binary", seed=3)


@pytest.fixture
def small_uniform():
    return generate_random_sparse(200, 10, 3, "uniform01", seed=5)


@pytest.fixture
def small_binary_stats(small_binary):
    return column_stats(small_binary)


@pytest.fixture
def lowerbound_6_3():
    return generate_lowerbound_dataset(6, 3)

