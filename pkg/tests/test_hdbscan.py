import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.cluster import HDBSCAN as SkHDBSCAN
from sklearn.metrics import adjusted_rand_score

from spatialcrime.errors import DisconnectedInputError, TooFewPointsError
from spatialcrime.geo import GeoPoint
from spatialcrime.hdbscan import (
    LAMBDA_CAP,
    HdbscanParams,
    MstEdge,
    build_mst,
    condense_tree,
    core_distances,
    distance_matrix,
    extract_clusters,
    fit,
    mutual_reachability,
    prim_mst,
    single_linkage,
)

from conftest import load_fixture
from oracles import adjusted_rand_index, kruskal_total_weight, make_blobs, same_partition

LINE = np.array([[0.0], [1.0], [10.0]])
EUCLID = dict(metric="euclidean")


def sk_labels(X, mcs, k, single=False):
    return SkHDBSCAN(min_cluster_size=mcs, min_samples=k + 1, allow_single_cluster=single).fit_predict(X)


class TestParams:
    @pytest.mark.parametrize("kw", [dict(min_cluster_size=1), dict(min_samples=0), dict(metric="manhattan"),
                                    dict(min_cluster_size=2.5)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            HdbscanParams(**kw)

    def test_min_samples_defaults_to_cluster_size(self):
        assert HdbscanParams(min_cluster_size=7).k == 7
        assert HdbscanParams(min_cluster_size=7, min_samples=3).k == 3


class TestCoreAndReachability:
    def test_line(self):
        np.testing.assert_array_equal(core_distances(LINE, 1, **EUCLID), [1, 1, 9])

    def test_duplicates(self):
        np.testing.assert_array_equal(core_distances(np.zeros((2, 2)), 1, **EUCLID), [0, 0])

    def test_too_few_points(self):
        with pytest.raises(TooFewPointsError):
            core_distances(LINE, 3, **EUCLID)

    def test_matches_brute_force_knn(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(50, 2))
        got = core_distances(X, 5, **EUCLID)
        for i in range(50):
            others = sorted(math.dist(X[i], X[j]) for j in range(50) if j != i)
            assert got[i] == pytest.approx(others[4], rel=1e-12)

    def test_haversine_metric(self):
        pts = [GeoPoint(0, 0), GeoPoint(0, 1), GeoPoint(0, 3)]
        core = core_distances(pts, 1)
        deg = 2 * math.pi * 6371.0088 / 360
        np.testing.assert_allclose(core, [deg, deg, 2 * deg], rtol=1e-12)

    def test_mutual_reachability_line(self):
        core = core_distances(LINE, 1, **EUCLID)
        m = mutual_reachability(LINE, core, **EUCLID)
        assert m[0, 1] == 1 and m[1, 2] == 9
        np.testing.assert_array_equal(np.diag(m), core)

    @given(st.integers(0, 10_000), st.integers(1, 6))
    def test_mutual_reachability_dominates(self, seed, k):
        X = np.random.default_rng(seed).normal(size=(12, 2))
        core = core_distances(X, k, **EUCLID)
        m = mutual_reachability(X, core, **EUCLID)
        d = distance_matrix(X, "euclidean")
        assert np.array_equal(m, m.T)
        assert np.all(m >= d)
        assert np.all(m >= np.maximum(core[:, None], core[None, :]))


class TestMst:
    def test_two_points(self):
        edges = build_mst(np.array([[0.0, 0], [3, 4]]), HdbscanParams(min_cluster_size=2, min_samples=1, **EUCLID))
        assert edges == [MstEdge(0, 1, 5.0)]

    def test_line(self):
        edges = build_mst(LINE, HdbscanParams(min_cluster_size=2, min_samples=1, **EUCLID))
        assert sorted(edges, key=lambda e: e.u) == [MstEdge(0, 1, 1.0), MstEdge(1, 2, 9.0)]

    def test_single_point(self):
        with pytest.raises(TooFewPointsError):
            prim_mst(np.zeros((1, 1)))

    def test_disconnected(self):
        w = np.full((3, 3), np.inf)
        w[0, 1] = w[1, 0] = 1.0
        with pytest.raises(DisconnectedInputError):
            prim_mst(w)

    def test_edges_respect_core(self):
        X = np.random.default_rng(1).normal(size=(40, 2))
        params = HdbscanParams(min_cluster_size=5, **EUCLID)
        core = core_distances(X, params.k, **EUCLID)
        for e in build_mst(X, params):
            assert e.u != e.v
            assert e.weight >= max(core[e.u], core[e.v])

    @given(st.integers(0, 100_000), st.integers(2, 60))
    def test_total_matches_kruskal(self, seed, n):
        X = np.random.default_rng(seed).uniform(size=(n, 2))
        k = min(3, n - 1)
        m = mutual_reachability(X, core_distances(X, k, **EUCLID), **EUCLID)
        edges = prim_mst(m)
        assert len(edges) == n - 1
        assert sum(e.weight for e in edges) == pytest.approx(kruskal_total_weight(m), abs=1e-9)


class TestSingleLinkage:
    def test_two_points(self):
        d = single_linkage([MstEdge(0, 1, 2.0)])
        np.testing.assert_array_equal(d, [[0, 1, 2.0, 2]])

    def test_chain(self):
        d = single_linkage([MstEdge(1, 2, 9.0), MstEdge(0, 1, 1.0)])
        np.testing.assert_array_equal(d[:, 2], [1.0, 9.0])
        np.testing.assert_array_equal(d[:, 3], [2, 3])

    def test_tie_order(self):
        edges = [MstEdge(2, 3, 1.0), MstEdge(0, 1, 1.0), MstEdge(1, 2, 1.0)]
        d1 = single_linkage(edges)
        d2 = single_linkage(list(reversed(edges)))
        np.testing.assert_array_equal(d1, d2)
        assert tuple(d1[0, :2]) == (0, 1)

    def test_cycle_is_rejected(self):
        with pytest.raises(DisconnectedInputError):
            single_linkage([MstEdge(0, 1, 1.0), MstEdge(1, 0, 2.0)], 3)

    def test_wrong_edge_count(self):
        with pytest.raises(DisconnectedInputError):
            single_linkage([MstEdge(0, 1, 1.0)], 4)


class TestCondense:
    def test_small_input_root_only(self):
        X = np.random.default_rng(2).normal(size=(4, 2))
        params = HdbscanParams(min_cluster_size=5, min_samples=2, **EUCLID)
        tree = condense_tree(single_linkage(build_mst(X, params)), 5)
        assert len(tree) == 1
        assert sorted(p for p, _ in tree[0].points) == [0, 1, 2, 3]

    def test_two_blobs_split(self):
        X, _ = make_blobs(3, sizes=(20, 20), sd=0.3, min_gap=8)
        params = HdbscanParams(min_cluster_size=5, **EUCLID)
        tree = condense_tree(single_linkage(build_mst(X, params)), 5)
        root = tree[0]
        assert root.parent is None and len(root.children) == 2
        assert len(np.unique(sk_labels(X, 5, 5)[sk_labels(X, 5, 5) >= 0])) == 2

    def test_one_blob_root_only(self):
        X, _ = make_blobs(4, sizes=(40,), sd=0.5)
        params = HdbscanParams(min_cluster_size=5, **EUCLID)
        tree = condense_tree(single_linkage(build_mst(X, params)), 5)
        assert tree[0].children == []
        lab = fit(X, params).labels
        assert same_partition(lab, sk_labels(X, 5, 5)) or set(lab) == {0}

    def test_lambda_order_and_cap(self):
        X = np.vstack([np.zeros((6, 2)), np.ones((6, 2)) * 5])
        tree = condense_tree(single_linkage(build_mst(X, HdbscanParams(min_cluster_size=3, **EUCLID))), 3)
        for node in tree:
            assert node.lambda_death >= node.lambda_birth >= 0
            assert all(lam <= LAMBDA_CAP for _, lam in node.points)

    def test_each_point_on_one_path(self):
        X, _ = make_blobs(5, n_noise=18)
        tree = condense_tree(single_linkage(build_mst(X, HdbscanParams(**EUCLID))), 10)
        pts = sorted(p for node in tree for p, _ in node.points)
        assert pts == list(range(len(X)))


class TestFit:
    def test_single_point(self):
        assert fit([GeoPoint(1, 1)]).labels.tolist() == [-1]

    def test_fewer_than_min_cluster_size(self):
        lab = fit(np.arange(8.0)[:, None], HdbscanParams(min_cluster_size=10, **EUCLID))
        assert lab.n_clusters == 0 and lab.noise_count == 8

    def test_identical_points(self):
        lab = fit(np.zeros((20, 2)), HdbscanParams(min_cluster_size=5, **EUCLID))
        assert lab.labels.tolist() == [0] * 20
        # our root is selectable when nothing splits below it
        assert (sk_labels(np.zeros((20, 2)), 5, 5, single=True) == 0).all()

    def test_three_blobs(self):
        X, truth = make_blobs(11)
        lab = fit(X, HdbscanParams(**EUCLID))
        assert lab.n_clusters == 3
        assert adjusted_rand_index(lab.labels, truth) >= 0.95

    def test_far_points_are_noise(self):
        X, _ = make_blobs(12)
        far = np.array([[200.0 + 40 * i, -300.0 + 17 * i * i] for i in range(10)])
        lab = fit(np.vstack([X, far]), HdbscanParams(**EUCLID))
        assert (lab.labels[-10:] == -1).all()

    def test_matches_fixture_oracle(self):
        data = load_fixture("hdbscan_oracle.json")
        for ds in data["datasets"][:5]:
            lab = fit(np.array(ds["points"]), HdbscanParams(min_cluster_size=data["min_cluster_size"], **EUCLID))
            assert adjusted_rand_index(lab.labels, ds["oracle_labels"]) >= 0.95

    def test_labels_contiguous_and_large(self):
        X, _ = make_blobs(13, n_noise=18)
        lab = fit(X, HdbscanParams(**EUCLID))
        ids = sorted(set(lab.labels.tolist()) - {-1})
        assert ids == list(range(lab.n_clusters))
        assert all(np.sum(lab.labels == c) >= 10 for c in ids)
        assert (lab.stabilities >= 0).all()

    def test_noise_monotone_in_min_cluster_size(self):
        X, _ = make_blobs(14, n_noise=18)
        noise = [fit(X, HdbscanParams(min_cluster_size=m, min_samples=5, **EUCLID)).noise_count
                 for m in (5, 10, 20, 40, 60)]
        assert noise == sorted(noise)

    @given(st.integers(0, 10_000))
    def test_permutation_invariance(self, seed):
        X, _ = make_blobs(seed % 50, n_noise=18)
        perm = np.random.default_rng(seed).permutation(len(X))
        params = HdbscanParams(**EUCLID)
        a = fit(X, params).labels
        b = fit(X[perm], params).labels
        assert same_partition(a[perm], b)

    @given(st.integers(0, 10_000))
    def test_small_patch_consistency(self, seed):
        rng = np.random.default_rng(seed)
        lat0, lon0 = 44.65, -63.58
        centres = rng.uniform(-0.004, 0.004, (2, 2))
        while np.linalg.norm(centres[0] - centres[1]) < 0.005:
            centres = rng.uniform(-0.004, 0.004, (2, 2))
        off = np.vstack([rng.normal(c, 0.0004, (25, 2)) for c in centres])
        off = np.clip(off, -0.005, 0.005)
        ll = np.column_stack([lat0 + off[:, 0], lon0 + off[:, 1]])
        R = 6371.0088
        xy = np.column_stack([np.radians(ll[:, 0] - lat0) * R,
                              np.radians(ll[:, 1] - lon0) * R * math.cos(math.radians(lat0))])
        a = fit(ll, HdbscanParams(min_cluster_size=8))
        b = fit(xy, HdbscanParams(min_cluster_size=8, **EUCLID))
        assert adjusted_rand_index(a.labels, b.labels) >= 0.95

    @given(st.integers(0, 10_000))
    def test_clusters_at_least_min_size(self, seed):
        X = np.random.default_rng(seed).uniform(size=(60, 2))
        lab = fit(X, HdbscanParams(min_cluster_size=7, **EUCLID))
        for c in range(lab.n_clusters):
            assert np.sum(lab.labels == c) >= 7


class TestAriOracle:
    @given(st.lists(st.integers(-1, 3), min_size=2, max_size=30), st.data())
    def test_agrees_with_sklearn(self, a, data):
        b = data.draw(st.lists(st.integers(-1, 3), min_size=len(a), max_size=len(a)))
        assert adjusted_rand_index(a, b) == pytest.approx(adjusted_rand_score(a, b), abs=1e-12)
