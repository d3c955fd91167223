"""Per-machine quality laws, path quality draws and simulated datasets."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping, Sequence

import numpy as np

from qnet import _kernels
from qnet.errors import InvalidDistribution, PathTopologyMismatch
from qnet.network import (
    NetworkTopology,
    PathRecord,
    check_path,
    choose_index,
    sample_path,
    validate_topology,
)
from qnet.numerics import RandomStream, box_muller, stream_key

KINDS = ("constant", "gaussian", "bernoulli", "discrete")
_KIND_CODE = {
    "constant": _kernels.KIND_CONSTANT,
    "gaussian": _kernels.KIND_GAUSSIAN,
    "bernoulli": _kernels.KIND_BERNOULLI,
    "discrete": _kernels.KIND_DISCRETE,
}


@dataclass(frozen=True)
class NodeDistribution:
    """Law of one machine's quality contribution.

    Every draw consumes exactly two uniforms ``(u1, u2)`` whatever the kind, so
    stream positions never depend on the model. ``custom`` wraps a user
    callback ``sampler(u1, u2) -> float``; models using it are simulated by the
    slow scalar path and cannot be written to model files.
    """

    kind: str
    params: tuple = ()
    sampler: Callable[[float, float], float] | None = field(default=None, compare=False)

    @classmethod
    def constant(cls, value: float) -> "NodeDistribution":
        return cls("constant", (float(value),))

    @classmethod
    def gaussian(cls, mean: float, variance: float) -> "NodeDistribution":
        if not variance >= 0 or not math.isfinite(variance) or not math.isfinite(mean):
            raise InvalidDistribution(f"gaussian needs finite mean and variance >= 0, got ({mean}, {variance})")
        return cls("gaussian", (float(mean), float(variance)))

    @classmethod
    def bernoulli(cls, success_prob: float) -> "NodeDistribution":
        if not 0.0 <= success_prob <= 1.0:
            raise InvalidDistribution(f"bernoulli probability {success_prob} outside [0, 1]")
        return cls("bernoulli", (float(success_prob),))

    @classmethod
    def discrete(cls, values: Sequence[float], probabilities: Sequence[float]) -> "NodeDistribution":
        values = tuple(float(v) for v in values)
        probs = tuple(float(p) for p in probabilities)
        if not values or len(values) != len(probs):
            raise InvalidDistribution("discrete needs equally many values and probabilities")
        if any(p < 0 for p in probs) or abs(math.fsum(probs) - 1.0) > 1e-12:
            raise InvalidDistribution("discrete probabilities must be non-negative and sum to 1")
        if not all(math.isfinite(v) for v in values):
            raise InvalidDistribution("discrete values must be finite")
        return cls("discrete", (values, probs))

    @classmethod
    def custom(cls, sampler, mean: float = math.nan, variance: float = math.nan) -> "NodeDistribution":
        return cls("custom", (float(mean), float(variance)), sampler)

    def mean(self) -> float:
        if self.kind == "discrete":
            values, probs = self.params
            return math.fsum(v * p for v, p in zip(values, probs))
        return self.params[0]

    def variance(self) -> float:
        if self.kind == "constant":
            return 0.0
        if self.kind in ("gaussian", "custom"):
            return self.params[1]
        if self.kind == "bernoulli":
            p = self.params[0]
            return p * (1.0 - p)
        values, probs = self.params
        mu = self.mean()
        return math.fsum(p * (v - mu) ** 2 for v, p in zip(values, probs))

    def cumulative(self) -> np.ndarray:
        values, probs = self.params
        cum = np.cumsum(probs)
        cum[-1] = 1.0
        return cum

    def draw(self, u1: float, u2: float) -> float:
        if self.kind == "constant":
            return self.params[0]
        if self.kind == "gaussian":
            mean, var = self.params
            return mean + math.sqrt(var) * box_muller(u1, u2)
        if self.kind == "bernoulli":
            return 1.0 if u1 < self.params[0] else 0.0
        if self.kind == "discrete":
            values = self.params[0]
            return values[choose_index(self.cumulative(), len(values), u1)]
        return float(self.sampler(u1, u2))

    def to_dict(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "value": self.params[0]}
        if self.kind == "gaussian":
            return {"kind": "gaussian", "mean": self.params[0], "var": self.params[1]}
        if self.kind == "bernoulli":
            return {"kind": "bernoulli", "p": self.params[0]}
        if self.kind == "discrete":
            return {"kind": "discrete", "values": list(self.params[0]), "probs": list(self.params[1])}
        raise InvalidDistribution("custom distributions cannot be serialised")

    @classmethod
    def from_dict(cls, spec: Mapping) -> "NodeDistribution":
        kind = spec.get("kind")
        try:
            if kind == "constant":
                return cls.constant(spec["value"])
            if kind == "gaussian":
                return cls.gaussian(spec["mean"], spec["var"])
            if kind == "bernoulli":
                return cls.bernoulli(spec["p"])
            if kind == "discrete":
                return cls.discrete(spec["values"], spec["probs"])
        except KeyError as exc:
            raise InvalidDistribution(f"{kind} distribution is missing {exc}") from None
        raise InvalidDistribution(f"unknown distribution kind {kind!r}")


@dataclass(frozen=True)
class Observation:
    path: PathRecord
    quality: float


class QualityModel:
    """Topology plus one distribution per existing node.

    ``dists`` maps 1-based ``(row, col)`` to a distribution; nodes without an
    entry get ``default``.
    """

    def __init__(self, topology: NetworkTopology, dists: Mapping[tuple[int, int], NodeDistribution] | None = None,
                 default: NodeDistribution | None = None):
        self.topology = topology
        dists = dict(dists or {})
        for node in dists:
            if not topology.has_node(*node):
                raise InvalidDistribution(f"node (row={node[0]}, col={node[1]}) does not exist")
        if default is None and len(dists) < topology.n_nodes:
            raise InvalidDistribution("some nodes have no distribution and no default was given")
        self._dists = {node: dists.get(node, default) for node in topology.nodes()}

    def __getitem__(self, node: tuple[int, int]) -> NodeDistribution:
        return self._dists[node]

    def items(self):
        return self._dists.items()

    @property
    def has_custom(self) -> bool:
        return any(d.kind == "custom" for d in self._dists.values())

    def to_spec(self) -> dict:
        spec = {
            "columns": list(self.topology.column_sizes),
            "nodes": [{"col": j, "row": i, "dist": d.to_dict()} for (i, j), d in self._dists.items()],
        }
        if self.topology.weights is not None:
            spec["weights"] = [list(w) for w in self.topology.weights]
        return spec

    @classmethod
    def from_spec(cls, spec: Mapping) -> "QualityModel":
        if "edges" in spec:
            raise InvalidDistribution("only completely connected layered networks are supported")
        topology = validate_topology(spec["columns"], spec.get("weights"))
        default = spec.get("default")
        default = NodeDistribution.from_dict(default) if default is not None else None
        dists = {}
        for entry in spec.get("nodes", []):
            node = (int(entry["row"]), int(entry["col"]))
            if node in dists:
                raise InvalidDistribution(f"node {node} listed twice")
            dists[node] = NodeDistribution.from_dict(entry["dist"])
        return cls(topology, dists, default)

    def tables(self):
        """Dense arrays describing the model for the simulation kernels."""
        t = self.topology
        r, c = t.r, t.c
        kinds = np.full((r, c), _kernels.KIND_ABSENT, dtype=np.int64)
        p1 = np.zeros((r, c))
        p2 = np.zeros((r, c))
        width = max([len(d.params[0]) for d in self._dists.values() if d.kind == "discrete"] or [1])
        disc_vals = np.zeros((r, c, width))
        disc_cum = np.ones((r, c, width))
        disc_len = np.ones((r, c), dtype=np.int64)
        for (i, j), d in self._dists.items():
            a, b = i - 1, j - 1
            kinds[a, b] = _KIND_CODE[d.kind]
            if d.kind == "discrete":
                values = d.params[0]
                disc_vals[a, b, :len(values)] = values
                disc_cum[a, b, :len(values)] = d.cumulative()
                disc_len[a, b] = len(values)
            else:
                p1[a, b] = d.params[0]
                if d.kind == "gaussian":
                    p2[a, b] = d.params[1]
        return kinds, p1, p2, disc_vals, disc_cum, disc_len


def demo_model() -> QualityModel:
    """Gaussian 4-3-2-4 network with one shifted mean and one inflated variance.

    Machine 2 of column 2 has mean 2, machine 1 of column 3 has variance 4;
    every other machine is standard normal.
    """
    topology = validate_topology([4, 3, 2, 4])
    return QualityModel(
        topology,
        {(2, 2): NodeDistribution.gaussian(2.0, 1.0), (1, 3): NodeDistribution.gaussian(0.0, 4.0)},
        default=NodeDistribution.gaussian(0.0, 1.0),
    )


def draw_path_quality(model: QualityModel, path: PathRecord | Sequence[int], rng: RandomStream) -> float:
    """Additive quality of one part; consumes two uniforms per column."""
    path = check_path(path, model.topology)
    total = 0.0
    for j, i in enumerate(path.machines, start=1):
        u1 = rng.uniform()
        u2 = rng.uniform()
        v = model[(i, j)].draw(u1, u2)
        total = v if j == 1 else total + v
    return total


def theoretical_moments(model: QualityModel) -> tuple[np.ndarray, np.ndarray]:
    """E[S] and V[S] as (r, c) arrays with NaN at non-existent machines."""
    t = model.topology
    mean = np.full((t.r, t.c), np.nan)
    var = np.full((t.r, t.c), np.nan)
    for (i, j), d in model.items():
        mean[i - 1, j - 1] = d.mean()
        var[i - 1, j - 1] = d.variance()
    return mean, var


@dataclass
class Dataset:
    """Observed paths (1-based, shape (n, c)) and qualities (shape (n,)).

    ``contributions`` holds the per-column draws when the dataset was
    simulated with ``debug=True``; real data never has them.
    """

    topology: NetworkTopology
    paths: np.ndarray
    quality: np.ndarray
    contributions: np.ndarray | None = None

    def __post_init__(self):
        self.paths = np.asarray(self.paths, dtype=np.int64)
        self.quality = np.asarray(self.quality, dtype=np.float64)
        if self.paths.ndim != 2 or self.paths.shape[1] != self.topology.c:
            raise PathTopologyMismatch("paths must have one column per workstation")
        if self.paths.shape[0] != self.quality.shape[0]:
            raise ValueError("paths and quality have different lengths")

    def __len__(self) -> int:
        return self.quality.shape[0]

    def __iter__(self) -> Iterator[Observation]:
        for row, q in zip(self.paths.tolist(), self.quality.tolist()):
            yield Observation(PathRecord(tuple(row)), q)

    @classmethod
    def from_observations(cls, topology: NetworkTopology, observations) -> "Dataset":
        observations = list(observations)
        paths = np.array([check_path(o.path, topology).machines for o in observations], dtype=np.int64)
        return cls(topology, paths.reshape(len(observations), topology.c),
                   np.array([o.quality for o in observations], dtype=np.float64))


def generate_dataset(model: QualityModel, n: int, seed: int, *, debug: bool = False) -> Dataset:
    """``n`` i.i.d. simulated parts, fully determined by ``(model, n, seed)``.

    Observation ``k`` uses uniforms ``[3ck, 3c(k+1))`` of the stream: ``c``
    for the path, then two per column for the contributions. This is exactly
    what calling :func:`sample_path` and :func:`draw_path_quality` in a loop
    on one :class:`RandomStream` consumes.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    t = model.topology
    if model.has_custom:
        rng = RandomStream(seed)
        paths = np.empty((n, t.c), dtype=np.int64)
        contrib = np.empty((n, t.c))
        for k in range(n):
            path = sample_path(t, rng)
            paths[k] = path.machines
            for j, i in enumerate(path.machines):
                contrib[k, j] = model[(i, j + 1)].draw(rng.uniform(), rng.uniform())
        quality = contrib[:, 0].copy()
        for j in range(1, t.c):
            quality += contrib[:, j]
        return Dataset(t, paths, quality, contrib if debug else None)
    sizes = np.asarray(t.column_sizes, dtype=np.int64)
    paths0, quality, contrib = _kernels.simulate(
        np.uint64(stream_key(seed)), 0, n, sizes, t.cumulative_weights(), *model.tables())
    return Dataset(t, paths0 + 1, quality, contrib if debug else None)
