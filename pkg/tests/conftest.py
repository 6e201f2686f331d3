import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240531)


def random_hermitian(d, rng, scale=1.0):
    G = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return scale * (G + G.conj().T) / 2


def random_pd(d, rng, floor=0.05):
    G = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    A = G @ G.conj().T
    A = A / np.trace(A).real
    return (1 - floor) * A + floor * np.eye(d) / d


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: (int(s.split()[1].rstrip(":abc")), s)):
            terminalreporter.write_line(line)
