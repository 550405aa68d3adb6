import numpy as np
import pytest
from scipy.special import expit

from patternsearch.core.patterns import BinaryDataset, build_design, enumerate_patterns


def make_problem(seed, n=60, p=5, q=2):
    """Jeu binaire aléatoire avec un effet principal et une interaction, et sa matrice de plan."""
    rng = np.random.default_rng(seed)
    X = (rng.random((n, p)) < 0.5).astype(np.int8)
    f = -0.5 + 1.2 * X[:, 0] - 1.0 * X[:, 1] * X[:, 2]
    y = (rng.random(n) < expit(f)).astype(np.int8)
    if y.min() == y.max():
        y[0] = 1 - y[0]
    data = BinaryDataset(X, y)
    return data, build_design(data, enumerate_patterns(p, q))


@pytest.fixture
def problem():
    return make_problem(0)


@pytest.fixture
def problem_factory():
    return make_problem


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path
