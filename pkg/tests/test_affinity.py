from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from constellation_match.affinity import (
    AffinityConfig,
    NodeMetric,
    bhattacharyya_distance,
    build_affinity_matrix,
    edge_affinity,
    mahalanobis_distance,
    node_affinity,
    node_affinity_bhattacharyya,
    node_affinity_mahalanobis,
    node_affinity_table,
    node_affinity_weighted_cosine,
)
from constellation_match.errors import ValidationError
from constellation_match.graph import ObjectGraph

from conftest import make_node, random_graph

METRICS = list(NodeMetric)


def _n(emb, u=0.0, var=None, pos=(0, 0, 0), nid=0):
    return make_node(nid, pos, emb, u, var)


def dense_reference(g1, g2, cfg):
    """K straight from the definition: loop over index pairs and edge pairs."""
    n1, n2 = len(g1), len(g2)
    K = np.zeros((n1 * n2, n1 * n2))
    for i, a_node in enumerate(g1.nodes):
        for a, b_node in enumerate(g2.nodes):
            K[i + a * n1, i + a * n1] = max(0.0, node_affinity(a_node, b_node, cfg))
    len1 = {(g1.index_of(e.i), g1.index_of(e.j)): e.length for e in g1.edges}
    len2 = {(g2.index_of(e.i), g2.index_of(e.j)): e.length for e in g2.edges}
    for (i, j), l1 in len1.items():
        for (a, b), l2 in len2.items():
            w = math.exp(-((l1 - l2) ** 2) / cfg.edge_sigma)
            for (p, q), (r, s) in (((i, a), (j, b)), ((i, b), (j, a))):
                K[p + q * n1, r + s * n1] = w
                K[r + s * n1, p + q * n1] = w
    return K


class TestWeightedCosine:
    def test_identity(self):
        assert node_affinity_weighted_cosine(_n([1.0, 0.0]), _n([1.0, 0.0])) == 1.0

    def test_unit_uncertainty_halves(self):
        assert node_affinity_weighted_cosine(_n([0.6, 0.8], 1.0), _n([0.6, 0.8], 1.0)) == pytest.approx(0.5)

    def test_orthogonal(self):
        assert node_affinity_weighted_cosine(_n([1.0, 0.0], 0.3), _n([0.0, 2.0], 0.1)) == 0.0

    def test_scale_invariant(self):
        a = node_affinity_weighted_cosine(_n([1.0, 2.0], 0.2), _n([3.0, -1.0], 0.1))
        b = node_affinity_weighted_cosine(_n([10.0, 20.0], 0.2), _n([0.3, -0.1], 0.1))
        assert a == pytest.approx(b, abs=1e-15)

    def test_dim_mismatch(self):
        with pytest.raises(ValidationError):
            node_affinity_weighted_cosine(_n([1.0]), _n([1.0, 0.0]))


class TestBhattacharyya:
    def test_identical(self):
        a = _n([1.0, 2.0], var=[0.3, 0.4])
        assert bhattacharyya_distance(a, a) == 0.0
        assert node_affinity_bhattacharyya(a, a) == 1.0

    def test_mean_shift(self):
        # means 0 vs 2 in the textbook case; shifted by one because a zero
        # embedding is not a valid node, and only the difference matters
        d = bhattacharyya_distance(_n([1.0], var=[1.0]), _n([3.0], var=[1.0]))
        assert d == pytest.approx(0.5, abs=1e-15)
        assert node_affinity_bhattacharyya(_n([1.0], var=[1.0]), _n([3.0], var=[1.0]), 2.0) == pytest.approx(
            math.exp(-0.25))

    def test_variance_mismatch(self):
        d = bhattacharyya_distance(_n([1.0], var=[1.0]), _n([1.0], var=[4.0]))
        assert d == pytest.approx(0.5 * math.log(2.5 / 2.0), abs=1e-15)
        assert d == pytest.approx(0.11157, abs=1e-5)

    def test_high_dim_finite(self, rng):
        # raw determinants of 384 small variances underflow; log sums do not
        v1, v2 = np.full(384, 1e-4), np.full(384, 2e-4)
        d = bhattacharyya_distance(_n(rng.normal(size=384), var=v1), _n(rng.normal(size=384), var=v2))
        assert np.prod(v1) == 0.0 and math.isfinite(d)
        ref = 0.5 * 384 * math.log(1.5e-4 / math.sqrt(2e-8))
        same = bhattacharyya_distance(_n(np.ones(384), var=v1), _n(np.ones(384), var=v2))
        assert same == pytest.approx(ref, rel=1e-12)

    def test_zero_variance_rejected(self):
        with pytest.raises(ValidationError):
            bhattacharyya_distance(_n([1.0], var=[0.0]), _n([1.0], var=[1.0]))


class TestMahalanobis:
    def test_identical(self):
        assert node_affinity_mahalanobis(_n([1.0, 2.0], 0.1), _n([1.0, 2.0], 0.3)) == 1.0

    def test_analytic(self):
        a, b = _n([1.0], var=[1.0]), _n([4.0], var=[1.0])
        assert mahalanobis_distance(a, b) == 3.0
        assert node_affinity_mahalanobis(a, b, 1.5) == pytest.approx(math.exp(-2.0))

    def test_variance_scaling(self):
        d1 = mahalanobis_distance(_n([0.0, 1.0], var=[0.5, 2.0]), _n([1.0, -1.0], var=[1.0, 0.3]))
        d2 = mahalanobis_distance(_n([0.0, 1.0], var=[1.0, 4.0]), _n([1.0, -1.0], var=[2.0, 0.6]))
        assert d2 == pytest.approx(d1 / math.sqrt(2), rel=1e-14)

    def test_zero_variance_rejected(self):
        with pytest.raises(ValidationError):
            mahalanobis_distance(_n([1.0], var=[0.0]), _n([1.0], var=[0.0]))


class TestEdgeAffinity:
    def test_equal_lengths(self):
        assert edge_affinity(3.2, 3.2, 0.5) == 1.0

    def test_unit_difference(self):
        assert edge_affinity(1.0, 2.0, 1.0) == pytest.approx(0.36788, abs=1e-5)

    def test_large_difference(self):
        assert edge_affinity(0.0, 100.0, 0.5) == 0.0

    def test_vectorized_matches_scalar(self, rng):
        a, b = rng.uniform(0, 5, 10), rng.uniform(0, 5, 10)
        vec = edge_affinity(a, b, 0.7)
        assert [edge_affinity(x, y, 0.7) for x, y in zip(a, b)] == pytest.approx(vec.tolist(), abs=0)

    def test_bad_sigma(self):
        with pytest.raises(ValidationError):
            edge_affinity(1.0, 1.0, 0.0)


class TestAffinityConfig:
    def test_roundtrip(self):
        cfg = AffinityConfig("bhattacharyya", 100.0, 2.0)
        assert AffinityConfig.from_dict(cfg.to_dict()) == cfg

    def test_unknown_metric(self):
        with pytest.raises(ValidationError, match="unknown node metric"):
            AffinityConfig("euclid")

    def test_unknown_key(self):
        with pytest.raises(ValidationError):
            AffinityConfig.from_dict({"sigma": 1.0})


class TestNodeTable:
    @pytest.mark.parametrize("metric", METRICS)
    def test_matches_scalar(self, rng, metric):
        g1, g2 = random_graph(rng, 4, dim=16), random_graph(rng, 7, dim=16)
        cfg = AffinityConfig(metric, distance_to_affinity_scale=3.0)
        table = node_affinity_table(g1, g2, cfg)
        for i, a in enumerate(g1.nodes):
            for j, b in enumerate(g2.nodes):
                assert table[i, j] == pytest.approx(node_affinity(a, b, cfg), rel=1e-12, abs=1e-14)


class TestBuildAffinityMatrix:
    def test_single_node(self):
        g = ObjectGraph.from_nodes([_n([1.0, 0.0])], 2.0)
        K = build_affinity_matrix(g, g)
        assert K.size == 1 and K.to_dense().tolist() == [[1.0]]

    def test_two_edge_pattern(self):
        g1 = ObjectGraph.from_nodes([_n([1.0, 0.0], pos=(0, 0, 0), nid=0),
                                     _n([0.0, 1.0], pos=(1, 0, 0), nid=1)], 2.0)
        K = build_affinity_matrix(g1, g1)
        assert K.size == 4
        off = K.offdiag_entries()
        assert set(off) == {((0, 0), (1, 1)), ((1, 1), (0, 0)), ((0, 1), (1, 0)), ((1, 0), (0, 1))}
        dense = K.to_dense()
        # flat index i + a*n1: (0,0)->0, (1,0)->1, (0,1)->2, (1,1)->3
        assert dense[0, 3] == dense[3, 0] == 1.0
        assert dense[2, 1] == dense[1, 2] == 1.0
        assert np.count_nonzero(dense - np.diag(np.diag(dense))) == 4

    def test_orthogonal_embeddings_zero_diag(self):
        g1 = ObjectGraph.from_nodes([_n([1.0, 0.0, 0.0], nid=0), _n([1.0, 0.0, 0.0], pos=(1, 0, 0), nid=1)], 2.0)
        g2 = ObjectGraph.from_nodes([_n([0.0, 1.0, 0.0], nid=0), _n([0.0, 0.0, 1.0], pos=(1, 0, 0), nid=1)], 2.0)
        assert np.all(build_affinity_matrix(g1, g2).diag == 0.0)

    def test_negative_cosine_clamped(self):
        g1 = ObjectGraph.from_nodes([_n([1.0, 0.0])], 2.0)
        g2 = ObjectGraph.from_nodes([_n([-1.0, 0.0])], 2.0)
        K = build_affinity_matrix(g1, g2)
        assert K.diag[0] == 0.0 and K.raw_node_affinity[0, 0] == -1.0

    def test_self_match_identity_diag(self, rng):
        nodes = [make_node(k, rng.uniform(0, 3, 3), rng.normal(size=6), 0.0) for k in range(5)]
        g = ObjectGraph.from_nodes(nodes, 2.0)
        K = build_affinity_matrix(g, g)
        table = K.node_table()
        assert np.all(np.diag(table) == 1.0)
        # all node and edge affinities of the identity pairing are 1
        assert K.objective(np.arange(5)) == pytest.approx(5 + 2 * len(g.edges), abs=1e-12)

    @pytest.mark.parametrize("metric", METRICS)
    def test_matches_dense_reference(self, rng, metric):
        for _ in range(10):
            g1 = random_graph(rng, int(rng.integers(1, 5)), dim=8)
            g2 = random_graph(rng, int(rng.integers(4, 7)), dim=8, id0=100)
            cfg = AffinityConfig(metric, edge_sigma=float(rng.uniform(0.2, 2.0)))
            K = build_affinity_matrix(g1, g2, cfg)
            np.testing.assert_allclose(K.to_dense(), dense_reference(g1, g2, cfg), rtol=1e-12, atol=1e-14)

    def test_entry_count(self, rng):
        for _ in range(20):
            g1 = random_graph(rng, int(rng.integers(1, 8)))
            g2 = random_graph(rng, int(rng.integers(8, 15)), extent=6.0)
            K = build_affinity_matrix(g1, g2)
            assert len(K.vals) == 4 * len(g1.edges) * len(g2.edges)
            assert K.offdiag().nnz == len(K.vals)  # no duplicate coordinates

    def test_swap_recorded(self, rng):
        big, small = random_graph(rng, 6), random_graph(rng, 3, id0=50)
        K = build_affinity_matrix(big, small)
        assert K.swapped and (K.n1, K.n2) == (3, 6) and K.ids1 == tuple(small.ids)

    def test_empty_and_dim_mismatch(self, rng):
        with pytest.raises(ValidationError, match="empty graph"):
            build_affinity_matrix(ObjectGraph((), ()), random_graph(rng, 2))
        with pytest.raises(ValidationError, match="dim"):
            build_affinity_matrix(random_graph(rng, 2, dim=3), random_graph(rng, 2, dim=4))

    def test_objective_against_dense(self, rng):
        g1, g2 = random_graph(rng, 3), random_graph(rng, 6)
        K = build_affinity_matrix(g1, g2)
        D = K.to_dense()
        for cols in ([0, 1, 2], [5, 3, 1], [2, 4, 0]):
            x = np.zeros(K.size)
            x[np.arange(3) + np.array(cols) * 3] = 1.0
            assert K.objective(cols) == pytest.approx(x @ D @ x, abs=1e-12)


class TestAffinityProperties:
    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.sampled_from(METRICS))
    def test_symmetric_nonnegative(self, seed, metric):
        rng = np.random.default_rng(seed)
        g1 = random_graph(rng, int(rng.integers(1, 6)))
        g2 = random_graph(rng, int(rng.integers(1, 9)))
        K = build_affinity_matrix(g1, g2, AffinityConfig(metric))
        assert K.is_symmetric() and K.is_nonnegative()
        assert K.n1 <= K.n2
