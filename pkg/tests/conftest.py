import numpy as np
import pytest

from copyforge import models as M
from copyforge.data import make_moons, stratified_split
from copyforge.oracle import Oracle


class Threshold:
    """label = 1 iff x[feature] > cut"""

    k = 2

    def __init__(self, cut=0.0, feature=0):
        self.cut, self.feature = cut, feature

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        return (X[:, self.feature] > self.cut).astype(np.int64)


class Constant:
    def __init__(self, label, k=2):
        self.label, self.k = label, k

    def predict(self, X):
        return np.full(np.asarray(X).shape[0], self.label, dtype=np.int64)


@pytest.fixture
def threshold_oracle():
    return Oracle(Threshold(0.0), dim=1, n_classes=2)


@pytest.fixture(scope="session")
def moons_split():
    return stratified_split(make_moons(2000, 0.1, seed=0), 0.2, seed=0)


@pytest.fixture(scope="session")
def moons_rbf(moons_split):
    train, _ = moons_split
    return M.train_rbf(train.X, train.y, gamma=1.0, seed=0)


_ACCEPTANCE = {}


@pytest.fixture
def criterion():
    """Record a one-line verdict for an acceptance criterion."""

    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[number])
