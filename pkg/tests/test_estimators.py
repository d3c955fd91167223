import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import naive_estimates
from qnet import _kernels
from qnet.errors import NodeAbsent, NodeUnvisited, PathTopologyMismatch, TopologyMismatch
from qnet.estimators import (
    estimate,
    finalize,
    init_state,
    mean_difference,
    merge,
    update,
    variance_difference,
)
from qnet.network import PathRecord, validate_topology
from qnet.quality import NodeDistribution, Observation, QualityModel, demo_model, generate_dataset


def moments_close(a, b, rel=1e-9):
    for x, y in zip(a.moments(), b.moments()):
        np.testing.assert_allclose(x, y, rtol=rel, atol=rel * (1 + np.abs(y).max()))


class TestInitAndUpdate:
    def test_init(self):
        s = init_state(validate_topology([2, 2]))
        assert s.count.shape == (2, 2) and not s.count.any() and s.n == 0

    def test_init_demo_network(self):
        t = validate_topology([4, 3, 2, 4])
        assert t.exists_mask().sum() == 13
        est = finalize(init_state(t))
        assert not est.T.any() and not est.Sigma.any() and not est.Tau2.any() and est.n == 0

    def test_single_update(self, backend):
        s = update(init_state(validate_topology([1, 1])), Observation(PathRecord((1, 1)), 5.0))
        assert s.count.tolist() == [[1, 1]]
        assert s.mean.tolist() == [[5.0, 5.0]]

    def test_two_updates_same_node(self, backend):
        s = init_state(validate_topology([1]))
        update(s, Observation(PathRecord((1,)), 1.0))
        update(s, Observation(PathRecord((1,)), 3.0))
        assert (s.count[0, 0], s.mean[0, 0], s.m2[0, 0]) == (2, 2.0, 2.0)

    def test_column_counts_sum_to_n(self, backend):
        data = generate_dataset(demo_model(), 777, 3)
        s = init_state(data.topology).update_batch(data.paths, data.quality)
        assert (s.count.sum(axis=0) == 777).all() and s.n == 777

    def test_bad_path(self):
        s = init_state(validate_topology([2, 2]))
        with pytest.raises(PathTopologyMismatch):
            update(s, Observation(PathRecord((3, 1)), 0.0))
        with pytest.raises(PathTopologyMismatch):
            s.update_batch(np.array([[1, 3]]), np.array([0.0]))


class TestFinalize:
    def test_two_points(self):
        s = init_state(validate_topology([1]))
        for x in (1.0, 3.0):
            update(s, Observation(PathRecord((1,)), x))
        est = finalize(s)
        assert (est.T[0, 0], est.Sigma[0, 0]) == (2.0, 1.0)

    def test_single_point(self):
        s = update(init_state(validate_topology([2])), Observation(PathRecord((2,)), 4.25))
        est = finalize(s)
        assert (est.T[1, 0], est.Sigma[1, 0], est.Tau2[1, 0]) == (4.25, 0.0, 0.0)
        assert (est.T[0, 0], est.counts[0, 0]) == (0.0, 0)

    def test_oracle_equivalence(self, backend):
        model = QualityModel(validate_topology([3, 2, 3]), {(1, 2): NodeDistribution.discrete([0, 5], [0.9, 0.1])},
                             default=NodeDistribution.gaussian(1e3, 4.0))
        data = generate_dataset(model, 1000, 8)
        est = estimate(data)
        T, S, Q, counts = naive_estimates(data.topology, data.paths, data.quality)
        assert np.array_equal(est.counts, counts)
        np.testing.assert_allclose(est.T, T, rtol=1e-10)
        np.testing.assert_allclose(est.Sigma, S, rtol=1e-10)
        np.testing.assert_allclose(est.Tau2, Q, rtol=1e-10)

    def test_bounds(self):
        data = generate_dataset(demo_model(), 300, 2)
        est = estimate(data)
        visited = est.counts > 0
        assert (est.Sigma >= 0).all()
        assert (est.T[visited] >= data.quality.min()).all() and (est.T[visited] <= data.quality.max()).all()

    def test_column_conservation(self):
        data = generate_dataset(demo_model(), 1000, 12)
        est = estimate(data)
        for j in range(4):
            assert est.counts[:, j].sum() == 1000
            assert (est.counts[:, j] * est.T[:, j]).sum() == pytest.approx(data.quality.sum(), rel=1e-12)

    def test_demo_model_large_n(self):
        est = estimate(generate_dataset(demo_model(), 10_000, 2024))
        offset = est.T[0, 1]
        assert abs(est.T[1, 1] - offset - 2.0) < 0.15 * 2
        assert abs(est.T[2, 1] - offset) < 0.15 * 2


class TestMerge:
    def test_identity(self):
        data = generate_dataset(demo_model(), 200, 1)
        s = init_state(data.topology).update_batch(data.paths, data.quality)
        m = merge(s, init_state(data.topology))
        for x, y in zip(m.moments(), s.moments()):
            assert np.array_equal(x, y)
        assert m.n == s.n

    @pytest.mark.parametrize("split", [1, 250, 499])
    def test_split_equals_full(self, backend, split):
        data = generate_dataset(demo_model(), 500, 5)
        full = init_state(data.topology).update_batch(data.paths, data.quality)
        a = init_state(data.topology).update_batch(data.paths[:split], data.quality[:split])
        b = init_state(data.topology).update_batch(data.paths[split:], data.quality[split:])
        moments_close(merge(a, b), full)
        moments_close(merge(b, a), merge(a, b))

    def test_backend_streams_agree(self):
        data = generate_dataset(demo_model(), 3000, 6)
        states = []
        for acc in (_kernels.accumulate_numba, _kernels.accumulate_numpy):
            s = init_state(data.topology)
            acc(data.paths - 1, data.quality, *s.moments())
            states.append(s)
        moments_close(*states, rel=1e-10)

    def test_topology_mismatch(self):
        with pytest.raises(TopologyMismatch):
            merge(init_state(validate_topology([2])), init_state(validate_topology([3])))


class TestDifferences:
    def test_same_node(self):
        est = estimate(generate_dataset(demo_model(), 100, 3))
        assert mean_difference(est, 2, 1, 1) == 0.0
        assert variance_difference(est, 3, 2, 2) == 0.0

    def test_demo_model_n10000(self):
        est = estimate(generate_dataset(demo_model(), 10_000, 31))
        assert abs(mean_difference(est, 2, 2, 1) - 2.0) < 0.2
        assert abs(variance_difference(est, 3, 1, 2) - 3.0) < 0.6

    def test_deterministic_machines(self):
        model = QualityModel(validate_topology([2]), {(1, 1): NodeDistribution.constant(3.0),
                                                      (2, 1): NodeDistribution.constant(5.0)})
        est = estimate(generate_dataset(model, 50, 1))
        assert mean_difference(est, 1, 1, 2) == -2.0
        assert variance_difference(est, 1, 1, 2) == 0.0

    def test_errors(self):
        t = validate_topology([2, 3])
        s = update(init_state(t), Observation(PathRecord((1, 1)), 0.0))
        est = finalize(s)
        with pytest.raises(NodeUnvisited):
            mean_difference(est, 1, 1, 2)
        with pytest.raises(NodeAbsent):
            mean_difference(est, 1, 1, 3)

    def test_consistency_bound(self):
        est = estimate(generate_dataset(demo_model(), 10_000, 77))
        for j, (i, i2, true) in {2: (2, 1, 2.0), 1: (1, 4, 0.0)}.items():
            counts = est.counts[:, j - 1][est.counts[:, j - 1] > 0]
            bound = 5 * np.sqrt(2 * est.Sigma[:, j - 1].max() / counts.min())
            assert abs(mean_difference(est, j, i, i2) - true) < bound
        counts = est.counts[:2, 2]
        bound = 5 * np.sqrt(2 * est.Tau2[:2, 2].max() / counts.min())
        assert abs(variance_difference(est, 3, 1, 2) - 3.0) < bound


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32), shift=st.floats(-1e3, 1e3).filter(lambda d: abs(d) > 1e-3))
def test_shift_invariance(seed, shift):
    data = generate_dataset(demo_model(), 300, seed)
    base = estimate(data)
    data.quality = data.quality + shift
    moved = estimate(data)
    visited = base.counts > 0
    np.testing.assert_allclose(moved.T[visited], base.T[visited] + shift, rtol=1e-12, atol=1e-9)
    np.testing.assert_allclose(moved.Sigma, base.Sigma, rtol=1e-7, atol=1e-7)
    for j in (1, 2, 3, 4):
        size = base.topology.column_sizes[j - 1]
        for i in range(1, size):
            assert mean_difference(moved, j, i, size) == pytest.approx(mean_difference(base, j, i, size), abs=1e-9)
