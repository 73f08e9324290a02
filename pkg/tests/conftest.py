import numpy as np
import pytest

from otbarrier.classical import ClassicalInstance
from otbarrier.quantum import QuantumInstance

# lines appended by the acceptance suite, echoed at the end of the run
ACCEPTANCE_LINES: list = []


def random_classical(rng, dims, floor=0.1):
    C = rng.uniform(-1.0, 1.0, size=dims)
    P = []
    for n in dims:
        p = rng.uniform(floor, 1.0, size=n)
        P.append(p / p.sum())
    return ClassicalInstance(C, P)


def random_density(rng, n, floor=0.1, diagonal=False):
    B = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    if diagonal:
        B = np.diag(np.diag(B))
    r = B @ B.conj().T + floor * np.eye(n)
    return r / np.trace(r).real


def random_quantum(rng, dims, diagonal=False):
    N = int(np.prod(dims))
    A = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
    C = 0.5 * (A + A.conj().T)
    if diagonal:
        C = np.diag(np.diag(C).real)
    C = C / np.linalg.norm(C, 2)
    return QuantumInstance(C, [random_density(rng, n, diagonal=diagonal) for n in dims])


def random_hermitian(rng, n):
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return 0.5 * (A + A.conj().T)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
