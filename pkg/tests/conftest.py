import numpy as np
import pytest

from predsens.data import Dataset


def make_dataset(x, y, split=None, names=None):
    x = np.asarray(x, dtype=float).reshape(len(y), -1)
    names = names or ("y",) + tuple(f"x{j + 1}" for j in range(x.shape[1]))
    return Dataset(tuple(names), np.column_stack([y, x]), "y", split=split)


def ar1_predictors(rng, n, p, rho=0.5):
    c = rho ** np.abs(np.subtract.outer(np.arange(p), np.arange(p)))
    return rng.standard_normal((n, p)) @ np.linalg.cholesky(c).T


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance summary ------------------------------------------------------

_ACCEPTANCE = pytest.StashKey[dict]()


def format_criterion(n, status, detail):
    return f"criterion {n:>2}: {status:<4}  {detail}"


@pytest.fixture
def acceptance_log(request):
    """Record one status line per acceptance criterion for the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, {})

    def log(n, status, detail):
        lines[n] = format_criterion(n, status, detail)
        print(lines[n])

    return log


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
