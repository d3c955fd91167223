"""Streaming, mergeable per-machine moment accumulators.

For every machine ``(i, j)`` we keep the running count, mean and central sums
``M2, M3, M4`` of the qualities of all parts routed through it. From those,
``finalize`` derives

* ``T``     conditional sample mean of the quality,
* ``Sigma`` conditional population variance (``M2 / count``),
* ``Tau2``  plug-in variance of ``Sigma``: ``M4 / count - Sigma**2``.

Only within-column differences of ``T`` and ``Sigma`` carry information about
the machines; the absolute levels include a column-wide offset from the other
workstations that cannot be removed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from qnet import _kernels
from qnet.errors import NodeAbsent, NodeUnvisited, PathTopologyMismatch, TopologyMismatch
from qnet.network import NetworkTopology, check_path
from qnet.quality import Dataset, Observation


class EstimatorState:
    """Per-node ``(count, mean, M2, M3, M4)`` as dense ``(r, c)`` arrays.

    Placeholder rows (``i > r_j``) are never touched and stay zero.
    """

    def __init__(self, topology: NetworkTopology):
        self.topology = topology
        shape = (topology.r, topology.c)
        self.count = np.zeros(shape, dtype=np.int64)
        self.mean = np.zeros(shape)
        self.m2 = np.zeros(shape)
        self.m3 = np.zeros(shape)
        self.m4 = np.zeros(shape)
        self.n = 0

    def moments(self):
        return self.count, self.mean, self.m2, self.m3, self.m4

    def copy(self) -> "EstimatorState":
        out = EstimatorState(self.topology)
        for dst, src in zip(out.moments(), self.moments()):
            dst[...] = src
        out.n = self.n
        return out

    def update(self, obs: Observation) -> "EstimatorState":
        path = check_path(obs.path, self.topology)
        paths = np.asarray(path.machines, dtype=np.int64)[None, :] - 1
        _kernels.accumulate(paths, np.array([float(obs.quality)]), *self.moments())
        self.n += 1
        return self

    def update_batch(self, paths: np.ndarray, quality: np.ndarray) -> "EstimatorState":
        """Fold in many observations; ``paths`` is 1-based with shape (n, c)."""
        paths = np.asarray(paths, dtype=np.int64)
        quality = np.asarray(quality, dtype=np.float64)
        if paths.ndim != 2 or paths.shape[1] != self.topology.c:
            raise TopologyMismatch("paths do not match the network's column count")
        sizes = np.asarray(self.topology.column_sizes)
        if paths.size and ((paths < 1).any() or (paths > sizes).any()):
            raise PathTopologyMismatch("a path refers to a machine outside the network")
        _kernels.accumulate(np.ascontiguousarray(paths - 1), np.ascontiguousarray(quality), *self.moments())
        self.n += quality.shape[0]
        return self


def init_state(topology: NetworkTopology) -> EstimatorState:
    return EstimatorState(topology)


def update(state: EstimatorState, obs: Observation) -> EstimatorState:
    return state.update(obs)


def merge(a: EstimatorState, b: EstimatorState) -> EstimatorState:
    """State equivalent to streaming ``a``'s observations followed by ``b``'s."""
    if a.topology.column_sizes != b.topology.column_sizes:
        raise TopologyMismatch(f"cannot merge {a.topology.column_sizes} with {b.topology.column_sizes}")
    out = EstimatorState(a.topology)
    merged = _kernels.merge_moments(a.moments(), b.moments())
    for dst, src in zip(out.moments(), merged):
        dst[...] = src
    out.n = a.n + b.n
    return out


@dataclass
class Estimates:
    topology: NetworkTopology
    T: np.ndarray
    Sigma: np.ndarray
    Tau2: np.ndarray
    counts: np.ndarray
    n: int

    def _check(self, col: int, row: int) -> tuple[int, int]:
        if not self.topology.has_node(row, col):
            raise NodeAbsent(f"machine {row} does not exist in column {col}")
        if self.counts[row - 1, col - 1] == 0:
            raise NodeUnvisited(f"machine ({row}, {col}) has no observations")
        return row - 1, col - 1

    def node(self, col: int, row: int):
        """(count, T, Sigma, Tau2) of one visited machine."""
        a, b = self._check(col, row)
        return int(self.counts[a, b]), float(self.T[a, b]), float(self.Sigma[a, b]), float(self.Tau2[a, b])

    def to_dict(self) -> dict:
        mask = self.topology.exists_mask() & (self.counts > 0)

        def masked(m):
            return [[float(v) if ok else None for v, ok in zip(row, okrow)] for row, okrow in zip(m, mask)]

        exists = self.topology.exists_mask()
        return {
            "columns": list(self.topology.column_sizes),
            "n": int(self.n),
            "T": masked(self.T),
            "Sigma": masked(self.Sigma),
            "Tau2": masked(self.Tau2),
            "counts": [[int(v) if ok else None for v, ok in zip(row, okrow)]
                       for row, okrow in zip(self.counts, exists)],
        }


def finalize(state: EstimatorState) -> Estimates:
    count = state.count
    visited = count > 0
    safe = np.where(visited, count, 1).astype(np.float64)
    T = np.where(visited, state.mean, 0.0)
    sigma = np.where(visited, np.maximum(state.m2 / safe, 0.0), 0.0)
    tau2 = np.where(visited, np.maximum(state.m4 / safe - sigma * sigma, 0.0), 0.0)
    return Estimates(state.topology, T, sigma, tau2, count.copy(), state.n)


def estimate(dataset: Dataset) -> Estimates:
    """Stream a whole dataset and finalize."""
    return finalize(init_state(dataset.topology).update_batch(dataset.paths, dataset.quality))


def mean_difference(est: Estimates, j: int, i: int, i2: int) -> float:
    """``T(i, j) - T(i2, j)``: consistent for ``E[S(i, j)] - E[S(i2, j)]``."""
    a, b = est._check(j, i)
    a2, _ = est._check(j, i2)
    return float(est.T[a, b] - est.T[a2, b])


def variance_difference(est: Estimates, j: int, i: int, i2: int) -> float:
    a, b = est._check(j, i)
    a2, _ = est._check(j, i2)
    return float(est.Sigma[a, b] - est.Sigma[a2, b])
