import numpy as np
import pytest

from qnet import _kernels
from qnet.estimators import Estimates
from qnet.network import validate_topology


def naive_estimates(topology, paths, quality):
    """Two-pass reference: explicit per-node multisets, textbook moments."""
    groups = {}
    for row, q in zip(np.asarray(paths).tolist(), np.asarray(quality).tolist()):
        for j, i in enumerate(row, start=1):
            groups.setdefault((i, j), []).append(q)
    shape = (topology.r, topology.c)
    T, S, Q = np.zeros(shape), np.zeros(shape), np.zeros(shape)
    counts = np.zeros(shape, dtype=int)
    for (i, j), xs in groups.items():
        n = len(xs)
        mu = sum(xs) / n
        m2 = sum((x - mu) ** 2 for x in xs) / n
        m4 = sum((x - mu) ** 4 for x in xs) / n
        T[i - 1, j - 1], S[i - 1, j - 1], Q[i - 1, j - 1] = mu, m2, m4 - m2 * m2
        counts[i - 1, j - 1] = n
    return T, S, Q, counts


def make_estimates(column_sizes, counts, T, Sigma, Tau2=None):
    """Hand-built Estimates for single-formula checks; arrays are (r, c)."""
    topology = validate_topology(column_sizes)
    counts = np.asarray(counts, dtype=np.int64)
    T = np.asarray(T, dtype=float)
    Sigma = np.asarray(Sigma, dtype=float)
    Tau2 = np.zeros_like(Sigma) if Tau2 is None else np.asarray(Tau2, dtype=float)
    n = int(counts[:, 0].sum())
    return Estimates(topology, T, Sigma, Tau2, counts, n)


@pytest.fixture(params=["numba", "numpy"])
def backend(request, monkeypatch):
    """Run a test once per kernel backend."""
    if request.param == "numba" and not _kernels.HAVE_NUMBA:
        pytest.skip("numba not installed")
    suffix = "_" + request.param
    for name in ("uniforms", "simulate", "accumulate"):
        monkeypatch.setattr(_kernels, name, getattr(_kernels, name + suffix))
    return request.param


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
