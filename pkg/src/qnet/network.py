"""Layered workstation topology, paths and indicator matrices.

Machine indices are 1-based everywhere in the public API, matching how a
factory numbers its machines. Consecutive columns are always completely
connected, so a path is just one machine index per column.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from qnet.errors import (
    EmptyTopology,
    InvalidColumnSize,
    PathCountOverflow,
    PathTopologyMismatch,
)
from qnet.numerics import RandomStream

_UINT64_MAX = (1 << 64) - 1


@dataclass(frozen=True)
class NetworkTopology:
    """Column sizes ``r_1..r_c`` plus optional per-column routing weights.

    ``weights`` is an extension: the estimators only need the column choices to
    be independent, not uniform. ``None`` means uniform routing.
    """

    column_sizes: tuple[int, ...]
    weights: tuple[tuple[float, ...], ...] | None = None

    @property
    def c(self) -> int:
        return len(self.column_sizes)

    @property
    def r(self) -> int:
        return max(self.column_sizes)

    @property
    def n_nodes(self) -> int:
        return sum(self.column_sizes)

    def has_node(self, row: int, col: int) -> bool:
        return 1 <= col <= self.c and 1 <= row <= self.column_sizes[col - 1]

    def nodes(self) -> Iterator[tuple[int, int]]:
        """Existing nodes as 1-based (row, col), column by column."""
        for j, size in enumerate(self.column_sizes, start=1):
            for i in range(1, size + 1):
                yield i, j

    def exists_mask(self) -> np.ndarray:
        rows = np.arange(1, self.r + 1)[:, None]
        return rows <= np.asarray(self.column_sizes)[None, :]

    def cumulative_weights(self) -> np.ndarray:
        """(c, r) table of cumulative routing probabilities, last entry forced to 1."""
        cum = np.ones((self.c, self.r))
        for j, size in enumerate(self.column_sizes):
            if self.weights is None:
                cum[j, :size] = np.arange(1, size + 1) / size
            else:
                w = np.asarray(self.weights[j], dtype=float)
                cum[j, :size] = np.cumsum(w / w.sum())
            cum[j, size - 1:] = 1.0
        return cum


@dataclass(frozen=True)
class PathRecord:
    machines: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.machines)

    def __getitem__(self, j: int) -> int:
        return self.machines[j]


def validate_topology(column_sizes: Sequence[int], weights=None) -> NetworkTopology:
    sizes = list(column_sizes)
    if not sizes:
        raise EmptyTopology("a network needs at least one column")
    for j, size in enumerate(sizes, start=1):
        if isinstance(size, bool) or int(size) != size or size < 1:
            raise InvalidColumnSize(f"column {j} has invalid size {size!r}")
    sizes = tuple(int(s) for s in sizes)
    if weights is not None:
        if len(weights) != len(sizes):
            raise InvalidColumnSize("one weight vector per column is required")
        checked = []
        for j, (w, size) in enumerate(zip(weights, sizes), start=1):
            w = tuple(float(v) for v in w)
            if len(w) != size or any(not math.isfinite(v) or v < 0 for v in w) or sum(w) <= 0:
                raise InvalidColumnSize(f"column {j}: need {size} non-negative weights with positive sum")
            checked.append(w)
        weights = tuple(checked)
    return NetworkTopology(sizes, weights)


def path_count(topology: NetworkTopology) -> int:
    total = math.prod(topology.column_sizes)
    if total > _UINT64_MAX:
        raise PathCountOverflow(f"{total} paths do not fit in 64 bits")
    return total


def check_path(path: PathRecord | Sequence[int], topology: NetworkTopology) -> PathRecord:
    machines = tuple(path.machines if isinstance(path, PathRecord) else path)
    if len(machines) != topology.c:
        raise PathTopologyMismatch(f"path has {len(machines)} entries, network has {topology.c} columns")
    for j, (i, size) in enumerate(zip(machines, topology.column_sizes), start=1):
        if not 1 <= i <= size:
            raise PathTopologyMismatch(f"machine {i} does not exist in column {j} (size {size})")
    return path if isinstance(path, PathRecord) else PathRecord(machines)


def choose_index(cum: np.ndarray, size: int, u: float) -> int:
    """0-based category for uniform ``u``; same rule as the simulation kernels."""
    idx = 0
    while idx < size - 1 and u >= cum[idx]:
        idx += 1
    return idx


def sample_path(topology: NetworkTopology, rng: RandomStream) -> PathRecord:
    """Draw one path; consumes one uniform per column."""
    cum = topology.cumulative_weights()
    return PathRecord(tuple(
        choose_index(cum[j], size, rng.uniform()) + 1
        for j, size in enumerate(topology.column_sizes)
    ))


def indicator_matrix(path: PathRecord | Sequence[int], topology: NetworkTopology) -> np.ndarray:
    path = check_path(path, topology)
    v = np.zeros((topology.r, topology.c), dtype=np.int8)
    v[np.asarray(path.machines) - 1, np.arange(topology.c)] = 1
    return v
