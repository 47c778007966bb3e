import numpy as np
import pytest
from scipy.special import expit

from synthgmm import Dataset

ACCEPTANCE_LINES = []


def make_dataset(rng, n=60, m=140, d=2, M=2, link="logistic", noise=0.3):
    """Random dataset with correlated auxiliary pairs; not tied to the simulator."""
    T = n + m
    x = rng.standard_normal((T, d))
    x[:, 0] = 1.0
    theta = rng.uniform(-1, 1, d)
    eta = x @ theta
    if link == "logistic":
        y = (rng.uniform(size=T) < expit(eta)).astype(float)
    else:
        y = eta + rng.standard_normal(T)
    aux_x = np.empty((M, T, d))
    aux_y = np.empty((M, T))
    for j in range(M):
        aux_x[j] = x + noise * np.c_[np.zeros(T), rng.standard_normal((T, d - 1))]
        if link == "logistic":
            flip = rng.uniform(size=T) < noise / 2
            aux_y[j] = np.where(flip, 1 - y, y)
        else:
            aux_y[j] = y + noise * rng.standard_normal(T)
    s = np.zeros(T, dtype=int)
    s[rng.choice(T, n, replace=False)] = 1
    lab = s == 1
    return Dataset(s, x[lab], y[lab], aux_x, aux_y)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
