import itertools

import numpy as np
import pytest
from scipy import stats

from qnet.errors import EmptyTopology, InvalidColumnSize, PathCountOverflow, PathTopologyMismatch
from qnet.network import PathRecord, indicator_matrix, path_count, sample_path, validate_topology
from qnet.numerics import RandomStream
from qnet.quality import NodeDistribution, QualityModel, generate_dataset


def test_validate_demo_network():
    t = validate_topology([4, 3, 2, 4])
    assert (t.c, t.r, t.n_nodes) == (4, 4, 13)


def test_validate_single_machine():
    t = validate_topology([1])
    assert (t.c, t.r) == (1, 1)


@pytest.mark.parametrize("sizes", [[2, 0, 2], [3, -1], [1.5]])
def test_invalid_column_size(sizes):
    with pytest.raises(InvalidColumnSize):
        validate_topology(sizes)


def test_empty_topology():
    with pytest.raises(EmptyTopology):
        validate_topology([])


@pytest.mark.parametrize("sizes, expected", [([4, 3, 2, 4], 96), ([1, 1, 1], 1)])
def test_path_count(sizes, expected):
    assert path_count(validate_topology(sizes)) == expected


def test_path_count_brute_force():
    t = validate_topology([5, 7])
    assert path_count(t) == len(list(itertools.product(range(1, 6), range(1, 8)))) == 35


def test_path_count_overflow():
    with pytest.raises(PathCountOverflow):
        path_count(validate_topology([2] * 64))
    assert path_count(validate_topology([2] * 63)) == 2**63


def test_sample_path_trivial():
    for seed in range(5):
        assert sample_path(validate_topology([1, 1]), RandomStream(seed)) == PathRecord((1, 1))


def test_sample_path_reproducible():
    t = validate_topology([4, 3, 2, 4])
    a, b = RandomStream(77), RandomStream(77)
    assert [sample_path(t, a) for _ in range(500)] == [sample_path(t, b) for _ in range(500)]


def test_binary_column_frequency_within_binomial_bound():
    t = validate_topology([2])
    bound = 1.96 * np.sqrt(0.25 / 100_000)
    hits = 0
    for rep in range(20):
        rng = RandomStream(1000 + rep)
        u = rng.uniforms(100_000)
        # same rule sample_path applies, vectorised
        ones = np.mean(u < 0.5)
        hits += abs(ones - 0.5) <= bound
    assert hits >= 19


def test_sample_path_matches_vectorised_rule():
    t = validate_topology([2])
    rng = RandomStream(4)
    draws = [sample_path(t, rng)[0] for _ in range(2000)]
    u = RandomStream(4).uniforms(2000)
    assert draws == [1 if v < 0.5 else 2 for v in u]


def test_marginal_of_two_machine_column():
    t = validate_topology([4, 3, 2, 4])
    data = generate_dataset(QualityModel(t, default=NodeDistribution.constant(0.0)), 100_000, 8)
    assert abs(np.mean(data.paths[:, 2] == 1) - 0.5) < 0.01


def test_chi_square_goodness_of_fit():
    t = validate_topology([4, 3, 2, 4, 7])
    data = generate_dataset(QualityModel(t, default=NodeDistribution.constant(0.0)), 100_000, 21)
    for j, size in enumerate(t.column_sizes):
        observed = np.bincount(data.paths[:, j], minlength=size + 1)[1:]
        assert stats.chisquare(observed).pvalue > 0.001


def test_weighted_routing_extension():
    t = validate_topology([3], weights=[[0.5, 0.25, 0.25]])
    data = generate_dataset(QualityModel(t, default=NodeDistribution.constant(0.0)), 50_000, 3)
    freq = np.bincount(data.paths[:, 0], minlength=4)[1:] / 50_000
    assert np.allclose(freq, [0.5, 0.25, 0.25], atol=0.01)
    with pytest.raises(InvalidColumnSize):
        validate_topology([2], weights=[[1.0]])


class TestIndicatorMatrix:
    def test_single_path(self):
        assert indicator_matrix((1, 1), validate_topology([1, 1])).tolist() == [[1, 1]]

    def test_two_by_two(self):
        assert indicator_matrix(PathRecord((2, 1)), validate_topology([2, 2])).tolist() == [[0, 1], [1, 0]]

    def test_column_sums(self):
        t = validate_topology([4, 3, 2, 4])
        v = indicator_matrix((3, 2, 1, 4), t)
        assert v.shape == (4, 4)
        assert v.sum(axis=0).tolist() == [1, 1, 1, 1]
        assert v[2:, 2].sum() == 0  # placeholder rows stay zero

    def test_sampled_paths_have_one_node_per_column(self):
        t = validate_topology([4, 3, 2, 4])
        rng = RandomStream(0)
        for _ in range(200):
            v = indicator_matrix(sample_path(t, rng), t)
            assert (v.sum(axis=0) == 1).all()
            assert not v[~t.exists_mask()].any()

    @pytest.mark.parametrize("path", [(1, 1, 1), (3, 1), (0, 1)])
    def test_mismatch(self, path):
        with pytest.raises(PathTopologyMismatch):
            indicator_matrix(path, validate_topology([2, 2]))
