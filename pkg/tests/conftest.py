import numpy as np
import pytest

from blockclr import _backend
from blockclr.data import MatchedDataset

_RESULTS = []


def random_dataset(rng, n=10, p=3, k=1, blocks=None, scale=1.0, sizes=None):
    """n strata with k controls each (or explicit ``sizes``), case first."""
    if sizes is None:
        sizes = np.full(n, k + 1)
    sizes = np.asarray(sizes)
    N = int(sizes.sum())
    X = scale * rng.standard_normal((N, p))
    stratum = np.repeat(np.arange(len(sizes)), sizes)
    case = np.zeros(N, dtype=int)
    case[np.r_[0, np.cumsum(sizes)[:-1]]] = 1
    return MatchedDataset(X, stratum, case, blocks or (p,))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(params=_backend.available)
def backend(request, monkeypatch):
    """Run a test once per available kernel backend."""
    monkeypatch.setattr(_backend, "kernels", _backend.load(request.param))
    return request.param


def record_criterion(number, passed, detail=""):
    _RESULTS.append((number, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(_RESULTS, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
