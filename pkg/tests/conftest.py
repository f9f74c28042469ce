import itertools

import numpy as np
import pytest

_ACCEPTANCE_LINES = []


def record_criterion(line: str) -> None:
    _ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pinv_id_error(a, cols):
    """||(I - C C^+) A||_F through an explicit pseudoinverse."""
    c = a[:, list(cols)]
    return float(np.linalg.norm(a - c @ np.linalg.pinv(c) @ a))


def brute_force_best(a, r):
    """Exhaustive minimum ID error over all r-subsets of columns."""
    best, arg = np.inf, None
    for subset in itertools.combinations(range(a.shape[1]), r):
        c = a[:, subset]
        if np.linalg.matrix_rank(c) < r:
            continue
        err = pinv_id_error(a, subset)
        if err < best:
            best, arg = err, subset
    return best, arg


def eig_singular_values(a):
    """Singular values from the eigenvalues of the Gram matrix (independent of SVD)."""
    small = a.T @ a if a.shape[1] <= a.shape[0] else a @ a.T
    w = np.linalg.eigvalsh(small)[::-1]
    return np.sqrt(np.clip(w, 0.0, None))
