import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from finrank.perturbation import OperatorModel

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_hermitian(rng, n, scale=1.0):
    X = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return scale * (X + X.conj().T) / 2


def random_psd(rng, n, rank=None):
    rank = n if rank is None else rank
    X = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
    return X @ X.conj().T


@pytest.fixture
def rank_one():
    """A = [0], B = [1]: the unperturbed measure is a unit atom at 0."""
    return OperatorModel(np.zeros((1, 1)), np.ones((1, 1)))


@pytest.fixture
def diag01():
    """A = diag(0, 1), B = I."""
    return OperatorModel(np.diag([0.0, 1.0]), np.eye(2))


# one summary line per acceptance criterion, printed after the run
_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def criterion():
    """``criterion(k, title, value, tol, ok)`` records and prints a line."""

    def record(k, title, value, tol, ok, note=""):
        line = f"criterion {k:02d} {'PASS' if ok else 'FAIL'}  {title:<34} worst={value:.3e}  tol={tol:.1e}"
        if note:
            line += f"  ({note})"
        _ACCEPTANCE[k] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[k])
