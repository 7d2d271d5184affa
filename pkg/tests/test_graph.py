import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvsc.graph import (
    DegenerateBandwidthError,
    GraphError,
    GraphLaplacian,
    ProximityGraph,
    first_order_proximity,
    fuse_graphs,
    graph_regularizer,
    laplacian,
    median_bandwidth,
    multiview_graph,
    mutual_knn_mask,
    pairwise_sqdist,
    second_order_proximity,
)

# ---------------------------------------------------------------------------
# naive reference implementations (independent double loops)
# ---------------------------------------------------------------------------


def ref_sqdist(P):
    n = P.shape[1]
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            diff = P[:, i] - P[:, j]
            D[i, j] = float(np.dot(diff, diff))
    return D


def ref_median_bandwidth(D):
    n = D.shape[0]
    dists = sorted(np.sqrt(D[i, j]) for i in range(n) for j in range(i + 1, n))
    m = len(dists)
    if m % 2 == 1:
        return dists[m // 2]
    return (dists[m // 2 - 1] + dists[m // 2]) / 2


def ref_knn_lists(D, k):
    n = D.shape[0]
    lists = []
    for i in range(n):
        others = sorted((D[i, j], j) for j in range(n) if j != i)
        lists.append({j for _, j in others[:k]})
    return lists


def ref_mutual_mask(D, k):
    lists = ref_knn_lists(D, k)
    n = D.shape[0]
    mask = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(n):
            if i != j and j in lists[i] and i in lists[j]:
                mask[i, j] = True
    return mask


def ref_kernel_graph(D, k):
    sigma = ref_median_bandwidth(D)
    mask = ref_mutual_mask(D, k)
    n = D.shape[0]
    W = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if mask[i, j]:
                W[i, j] = np.exp(-D[i, j] / (sigma * sigma))
    return W


def ref_fuse(first_mats, second_mats):
    n = first_mats[0].shape[0]
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            prod = 1.0
            for W in first_mats:
                prod = prod * W[i, j]
            out[i, j] = prod
            if second_mats is not None:
                prod2 = 1.0
                for W in second_mats:
                    prod2 = prod2 * W[i, j]
                out[i, j] = prod + prod2
    return out


def random_points(seed, d=5, n=8):
    return np.random.default_rng(seed).standard_normal((d, n))


# ---------------------------------------------------------------------------
# pairwise distances and bandwidth
# ---------------------------------------------------------------------------


class TestPairwiseSqdist:
    def test_one_dimensional_analytic(self):
        D = pairwise_sqdist(np.array([[0.0, 3.0]]))
        assert D[0, 1] == D[1, 0] == 9.0

    def test_zero_diagonal(self):
        D = pairwise_sqdist(random_points(3))
        assert np.array_equal(np.diagonal(D), np.zeros(8))

    def test_against_naive_loop(self):
        P = random_points(17, d=5, n=8)
        D = pairwise_sqdist(P)
        assert np.abs(D - ref_sqdist(P)).max() < 1e-10

    def test_no_negative_entries(self):
        P = np.ones((4, 6)) + 1e-9 * random_points(5, d=4, n=6)
        assert pairwise_sqdist(P).min() >= 0.0


class TestMedianBandwidth:
    def test_hand_computed_even_count(self):
        # 1-D points {0,1,2,10}: distances {1,1,2,8,9,10} -> (2+8)/2
        D = pairwise_sqdist(np.array([[0.0, 1.0, 2.0, 10.0]]))
        assert median_bandwidth(D) == 5.0

    def test_two_points(self):
        D = pairwise_sqdist(np.array([[0.0, 4.0]]))
        assert median_bandwidth(D) == 4.0

    def test_identical_points_degenerate(self):
        D = np.zeros((3, 3))
        with pytest.raises(DegenerateBandwidthError):
            median_bandwidth(D)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(2, 12))
    def test_matches_reference(self, seed, n):
        D = pairwise_sqdist(random_points(seed, d=3, n=n))
        assert median_bandwidth(D) == pytest.approx(ref_median_bandwidth(D), abs=1e-12)


class TestMutualKnnMask:
    def test_two_points(self):
        D = pairwise_sqdist(np.array([[0.0, 1.0]]))
        mask = mutual_knn_mask(D, 1)
        assert mask[0, 1] and mask[1, 0] and not mask[0, 0]

    def test_hand_enumeration_with_tie(self):
        # point 1 is equidistant from 0 and 2; index tie-breaking picks 0,
        # so (0,1) is the only mutual pair
        D = pairwise_sqdist(np.array([[0.0, 1.0, 2.0, 10.0]]))
        mask = mutual_knn_mask(D, 1)
        expected = np.zeros((4, 4), dtype=bool)
        expected[0, 1] = expected[1, 0] = True
        assert np.array_equal(mask, expected)

    def test_complete_graph_at_k_max(self):
        D = pairwise_sqdist(random_points(2, d=3, n=6))
        mask = mutual_knn_mask(D, 5)
        assert np.array_equal(mask, ~np.eye(6, dtype=bool))

    def test_k_out_of_range(self):
        D = pairwise_sqdist(random_points(2, d=3, n=6))
        for k in (0, 6):
            with pytest.raises(GraphError):
                mutual_knn_mask(D, k)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(3, 14), st.integers(1, 6))
    def test_matches_reference_exactly(self, seed, n, k):
        if k > n - 1:
            k = n - 1
        D = pairwise_sqdist(random_points(seed, d=3, n=n))
        assert np.array_equal(mutual_knn_mask(D, k), ref_mutual_mask(D, k))


# ---------------------------------------------------------------------------
# proximity graphs
# ---------------------------------------------------------------------------


class TestFirstOrder:
    def test_kernel_at_zero_distance(self):
        X = np.array([[1.0, 1.0, 5.0], [2.0, 2.0, -1.0]])
        W = first_order_proximity(X, 1).weights
        assert W[0, 1] == 1.0

    def test_hand_computed_example(self):
        X = np.array([[0.0, 1.0, 2.0, 10.0]])
        W = first_order_proximity(X, 1).weights
        expected = np.zeros((4, 4))
        expected[0, 1] = expected[1, 0] = np.exp(-1.0 / 25.0)
        assert np.array_equal(W, expected)
        assert W[0, 1] == pytest.approx(0.960789439, abs=1e-9)

    def test_invariants(self):
        g = first_order_proximity(random_points(9, d=4, n=12), 3)
        W = g.weights
        assert np.array_equal(W, W.T)
        assert np.array_equal(np.diagonal(W), np.zeros(12))
        assert W.min() >= 0.0 and W.max() <= 1.0


class TestSecondOrder:
    def test_identical_rows_score_one(self):
        # mirror-symmetric points: 0/3 and 1/2 have identical neighbor rows
        X = np.array([[0.0, 1.0, 2.0, 3.0]])
        first = first_order_proximity(X, 2)
        second = second_order_proximity(first, 2)
        rows_equal = np.array_equal(first.weights[1], first.weights[2])
        if rows_equal:
            assert second.weights[1, 2] == 1.0

    def test_matches_reference(self):
        X = random_points(23, d=4, n=10)
        first = first_order_proximity(X, 3)
        mine = second_order_proximity(first, 3).weights
        theirs = ref_kernel_graph(ref_sqdist(first.weights.T), 3)
        assert np.abs(mine - theirs).max() < 1e-12

    def test_rejects_non_first_order_input(self):
        g = ProximityGraph(weights=np.zeros((3, 3)), kind="fused")
        with pytest.raises(GraphError, match="first-order"):
            second_order_proximity(g, 1)

    def test_invariants(self):
        first = first_order_proximity(random_points(4, d=3, n=9), 2)
        W = second_order_proximity(first, 2).weights
        assert np.array_equal(W, W.T)
        assert np.array_equal(np.diagonal(W), np.zeros(9))
        assert W.min() >= 0.0 and W.max() <= 1.0


class TestFusion:
    def test_single_view_is_sum(self):
        X = random_points(31, d=3, n=8)
        first = first_order_proximity(X, 3)
        second = second_order_proximity(first, 3)
        fused = fuse_graphs([first], [second])
        assert np.array_equal(fused.weights, first.weights + second.weights)

    def test_zero_first_order_view_kills_local_term(self):
        zero = ProximityGraph(weights=np.zeros((6, 6)), kind="first-order")
        other = first_order_proximity(random_points(1, d=3, n=6), 2)
        with pytest.warns(RuntimeWarning):
            fused = fuse_graphs([zero, other])
        assert np.array_equal(fused.weights, np.zeros((6, 6)))

    def test_matches_reference_two_views(self):
        firsts, seconds = [], []
        for seed in (5, 6):
            f = first_order_proximity(random_points(seed, d=4, n=9), 3)
            firsts.append(f)
            seconds.append(second_order_proximity(f, 3))
        fused = fuse_graphs(firsts, seconds).weights
        expected = ref_fuse([g.weights for g in firsts], [g.weights for g in seconds])
        assert np.array_equal(fused, expected)

    def test_shape_mismatch(self):
        a = first_order_proximity(random_points(1, d=2, n=5), 2)
        b = first_order_proximity(random_points(2, d=2, n=6), 2)
        with pytest.raises(GraphError, match="mismatch"):
            fuse_graphs([a, b])

    def test_empty_sequence(self):
        with pytest.raises(GraphError, match="at least one"):
            fuse_graphs([])


# ---------------------------------------------------------------------------
# laplacian and regularizer
# ---------------------------------------------------------------------------


def random_graph(seed, n):
    rng = np.random.default_rng(seed)
    W = rng.uniform(0, 1, (n, n))
    W = 0.5 * (W + W.T)
    np.fill_diagonal(W, 0.0)
    return ProximityGraph(weights=W, kind="fused")


class TestLaplacian:
    def test_zero_graph(self):
        g = ProximityGraph(weights=np.zeros((4, 4)), kind="fused")
        assert np.array_equal(laplacian(g).laplacian, np.zeros((4, 4)))

    def test_two_node_analytic(self):
        W = np.array([[0.0, 0.7], [0.7, 0.0]])
        L = laplacian(ProximityGraph(weights=W, kind="first-order")).laplacian
        assert np.allclose(L, [[0.7, -0.7], [-0.7, 0.7]])

    def test_row_sums_vanish(self):
        L = laplacian(random_graph(3, 15)).laplacian
        assert np.abs(L.sum(axis=1)).max() <= 1e-10

    def test_quadratic_form_nonnegative(self):
        lap = laplacian(random_graph(8, 12))
        rng = np.random.default_rng(0)
        for _ in range(100):
            x = rng.standard_normal(12)
            assert x @ lap.laplacian @ x >= -1e-10


class TestGraphRegularizer:
    def test_zero_laplacian(self):
        lap = GraphLaplacian(laplacian=np.zeros((5, 5)))
        assert graph_regularizer(np.ones((5, 5)), lap) == 0.0

    def test_constant_rows_in_null_space(self):
        lap = laplacian(random_graph(5, 6))
        C = np.tile(np.random.default_rng(1).standard_normal(6), (6, 1))
        assert abs(graph_regularizer(C, lap)) < 1e-10

    def test_trace_equals_pairwise_row_sum(self):
        for seed in range(5):
            g = random_graph(seed, 6)
            lap = laplacian(g)
            C = np.random.default_rng(100 + seed).standard_normal((6, 6))
            pairwise = 0.5 * sum(
                g.weights[i, j] * np.sum((C[i] - C[j]) ** 2)
                for i in range(6)
                for j in range(6)
            )
            assert graph_regularizer(C, lap) == pytest.approx(pairwise, abs=1e-10)


class TestMultiviewGraph:
    def test_diagnostics_shapes(self):
        views = [random_points(s, d=4, n=20) for s in (1, 2, 3)]
        fused, diag = multiview_graph(views, 4)
        assert fused.kind == "fused"
        assert len(diag.first_bandwidths) == 3
        assert len(diag.second_edge_counts) == 3
        assert diag.fused_edge_count == fused.edge_count

    def test_first_only_mode(self):
        views = [random_points(s, d=4, n=20) for s in (1, 2)]
        fused, diag = multiview_graph(views, 4, include_second=False)
        expected = fuse_graphs([first_order_proximity(v, 4) for v in views])
        assert np.array_equal(fused.weights, expected.weights)
        assert diag.second_bandwidths == ()


class TestProximityGraphType:
    def test_asymmetric_rejected(self):
        W = np.zeros((3, 3))
        W[0, 1] = 0.5
        with pytest.raises(GraphError, match="symmetric"):
            ProximityGraph(weights=W, kind="first-order")

    def test_nonzero_diagonal_rejected(self):
        with pytest.raises(GraphError, match="diagonal"):
            ProximityGraph(weights=np.eye(3), kind="first-order")

    def test_first_order_range_enforced(self):
        W = np.full((2, 2), 1.5)
        np.fill_diagonal(W, 0.0)
        with pytest.raises(GraphError, match=r"\[0, 1\]"):
            ProximityGraph(weights=W, kind="first-order")
        # fused graphs are sums of products and may exceed 1
        ProximityGraph(weights=W, kind="fused")
