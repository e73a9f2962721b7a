"""Structural features and the closed-form ridge fit against brute-force oracles."""

import itertools

import numpy as np
import pytest

from pathcast.features import (
    FEATURE_NAMES,
    extract_features,
    fit_ridge,
    predict_ridge,
    triangle_counts,
    write_features_csv,
)
from pathcast.graphs import GlobalGraph, frontier, induce_cascade


def brute_force_triangles(c):
    """Exhaustively classify all node triples on the undirected projection."""
    und = {v: set() for v in c.node_list}
    for s, d, _ in c.edges():
        und[s].add(d)
        und[d].add(s)
    closed = opened = 0
    for a, b, cc in itertools.combinations(c.node_list, 3):
        links = (b in und[a]) + (cc in und[a]) + (cc in und[b])
        if links == 3:
            closed += 1
        elif links == 2:
            opened += 1
    return opened, closed


def random_cascade(rng, n):
    edges = []
    for s in range(n):
        for d in range(n):
            if s != d and rng.random() < 0.2:
                edges.append((s, d, 1.0))
    g = GlobalGraph.from_edges(n, edges) if edges else GlobalGraph.from_edges(n, [(0, 1, 1.0)])
    return g, induce_cascade(g, set(range(n)), {0})


class TestTriangles:
    def test_directed_triangle_hand_count(self):
        g = GlobalGraph.from_edges(4, [(1, 2, 1.0), (2, 3, 1.0), (3, 1, 1.0)])
        c = induce_cascade(g, {1, 2, 3}, {1})
        assert triangle_counts(c) == (0, 1)
        feats = dict(zip(FEATURE_NAMES, extract_features(c, frontier(g, c), g)))
        assert feats["closed_triangles"] == 1
        assert feats["open_triangles"] == 0
        assert feats["edge_density"] == 0.5

    def test_path_hand_count(self):
        g = GlobalGraph.from_edges(4, [(1, 2, 1.0), (2, 3, 1.0)])
        c = induce_cascade(g, {1, 2, 3}, {1})
        assert triangle_counts(c) == (1, 0)
        feats = dict(zip(FEATURE_NAMES, extract_features(c, frontier(g, c), g)))
        assert feats["n_leaves"] == 1  # node 3: one incoming, no outgoing

    def test_matches_exhaustive_enumeration(self):
        rng = np.random.default_rng(61)
        for trial in range(50):
            n = int(rng.integers(3, 26))
            _, c = random_cascade(rng, n)
            assert triangle_counts(c) == brute_force_triangles(c)

    def test_path_count_identity(self):
        rng = np.random.default_rng(62)
        for trial in range(50):
            n = int(rng.integers(3, 26))
            _, c = random_cascade(rng, n)
            und = {v: set() for v in c.node_list}
            for s, d, _ in c.edges():
                und[s].add(d)
                und[d].add(s)
            wedge_sum = sum(len(nb) * (len(nb) - 1) // 2 for nb in und.values())
            opened, closed = triangle_counts(c)
            assert opened + 3 * closed == wedge_sum


class TestFeatureVector:
    def setup_method(self):
        self.g = GlobalGraph.from_edges(
            8,
            [
                (0, 1, 1.0),
                (1, 2, 2.0),
                (2, 0, 1.0),
                (2, 3, 1.0),
                (3, 4, 1.0),
                (5, 0, 1.0),
                (6, 5, 1.0),
                (5, 6, 2.0),
            ],
        )
        self.c = induce_cascade(self.g, {0, 1, 2}, {0})
        self.f = frontier(self.g, self.c)

    def test_base_values(self):
        feats = dict(zip(FEATURE_NAMES, extract_features(self.c, self.f, self.g)))
        assert feats["n_nodes"] == 3
        assert feats["n_edges"] == 3
        assert feats["frontier_n_nodes"] == 2  # {3, 5}
        assert feats["frontier_n_edges"] == 0
        assert feats["mean_local_out_degree"] == 1.0
        assert feats["mean_global_out_degree"] == pytest.approx((1 + 1 + 2) / 3)

    def test_p90_nearest_rank(self):
        # ten values: p90 of 1..10 is the 9th ascending value
        g = GlobalGraph.from_edges(2, [(0, 1, 1.0)])
        from pathcast.features import _p90

        assert _p90(list(range(1, 11))) == 9
        assert _p90([5]) == 5
        assert _p90([3, 7]) == 7

    def test_identity_block(self):
        full = extract_features(self.c, self.f, self.g, include_identity=True, identity_dim=None)
        assert full.shape[0] == len(FEATURE_NAMES) + self.g.n_nodes
        block = full[len(FEATURE_NAMES):]
        assert block.sum() == 3
        assert all(block[v] == 1.0 for v in (0, 1, 2))
        hashed = extract_features(self.c, self.f, self.g, include_identity=True, identity_dim=16)
        assert hashed.shape[0] == len(FEATURE_NAMES) + 16
        assert 0 < hashed[len(FEATURE_NAMES):].sum() <= 3

    def test_mismatched_frontier_rejected(self):
        other = induce_cascade(self.g, {0, 1, 2, 3}, {0})
        bad_frontier = frontier(self.g, other)  # contains node 4 but misses 3 checks
        c_small = induce_cascade(self.g, {3}, {3})
        with pytest.raises(ValueError, match="frontier"):
            extract_features(self.c, frontier(self.g, c_small), self.g)

    def test_relabeling_invariance(self):
        rng = np.random.default_rng(67)
        edges = [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 0, 1.0), (0, 2, 1.0)]
        g1 = GlobalGraph.from_edges(4, edges)
        perm = {0: 2, 1: 0, 2: 3, 3: 1}
        g2 = GlobalGraph.from_edges(4, [(perm[s], perm[d], w) for s, d, w in edges])
        c1 = induce_cascade(g1, {0, 1, 2, 3}, {0})
        c2 = induce_cascade(g2, {0, 1, 2, 3}, {perm[0]})
        f1 = extract_features(c1, frontier(g1, c1), g1)
        f2 = extract_features(c2, frontier(g2, c2), g2)
        np.testing.assert_allclose(f1, f2)


class TestRidge:
    def test_perfect_line(self):
        model = fit_ridge(np.array([[1.0], [2.0]]), np.array([1.0, 2.0]), l2=0.0)
        assert model.weights[0] == pytest.approx(1.0, abs=1e-12)
        assert model.bias == pytest.approx(0.0, abs=1e-12)
        assert predict_ridge(model, np.array([3.0])) == pytest.approx(3.0, abs=1e-12)

    def test_hand_derived_regularized_slope(self):
        # raw solve, no intercept: w = (1^2 + 2^2 + 1)^-1 (1*1 + 2*2) = 5/6
        model = fit_ridge(
            np.array([[1.0], [2.0]]),
            np.array([1.0, 2.0]),
            l2=1.0,
            standardize=False,
            fit_intercept=False,
        )
        assert model.weights[0] == pytest.approx(5.0 / 6.0, abs=1e-12)
        assert model.bias == 0.0

    def test_constant_targets(self):
        rng = np.random.default_rng(71)
        X = rng.normal(size=(30, 4))
        model = fit_ridge(X, np.full(30, 2.5), l2=0.1)
        assert np.max(np.abs(model.weights)) < 1e-8
        assert model.bias == pytest.approx(2.5, abs=1e-8)

    def test_normal_equation_residuals(self):
        rng = np.random.default_rng(73)
        for trial in range(5):
            X = rng.normal(size=(200, 12))
            y = rng.normal(size=200)
            l2 = 10.0 ** rng.uniform(-4, 0)
            model = fit_ridge(X, y, l2)
            # verify in the standardized frame the solver actually used
            mu, sd = X.mean(axis=0), X.std(axis=0)
            Xs = (X - mu) / sd
            yc = y - y.mean()
            w_std = model.weights * sd
            residual = Xs.T @ Xs @ w_std + l2 * w_std - Xs.T @ yc
            assert np.linalg.norm(residual) < 1e-8

    def test_fit_mse_non_decreasing_in_l2(self):
        rng = np.random.default_rng(79)
        X = rng.normal(size=(60, 5))
        y = X @ rng.normal(size=5) + 0.1 * rng.normal(size=60)
        fits = []
        for l2 in (0.0, 0.1, 1.0, 10.0, 100.0):
            model = fit_ridge(X, y, l2)
            fits.append(float(np.mean((predict_ridge(model, X) - y) ** 2)))
        assert all(a <= b + 1e-12 for a, b in zip(fits, fits[1:]))

    def test_singular_system_advises_regularization(self):
        X = np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])  # collinear
        with pytest.raises(np.linalg.LinAlgError, match="l2 > 0"):
            fit_ridge(X, np.array([1.0, 2.0, 3.0]), l2=0.0)

    def test_refit_consistency(self):
        rng = np.random.default_rng(83)
        X = rng.normal(size=(50, 6))
        y = rng.normal(size=50)
        model = fit_ridge(X, y, l2=0.5)
        again = fit_ridge(X, y, l2=0.5)
        preds_a = predict_ridge(model, X)
        preds_b = predict_ridge(again, X)
        np.testing.assert_allclose(preds_a, preds_b, atol=1e-10)

    def test_prediction_layout_checks(self):
        model = fit_ridge(np.array([[1.0], [2.0]]), np.array([1.0, 2.0]), l2=0.1)
        with pytest.raises(ValueError, match="features"):
            predict_ridge(model, np.array([1.0, 2.0]))
        assert predict_ridge(model, np.zeros(1)) == pytest.approx(model.bias)

    def test_zero_weight_prediction_is_bias(self):
        model = fit_ridge(np.array([[1.0], [2.0]]), np.array([3.0, 3.0]), l2=1.0)
        assert predict_ridge(model, np.array([9.0])) == pytest.approx(3.0, abs=1e-8)


class TestCsvDump:
    def test_round_trip_header(self, tmp_path):
        g = GlobalGraph.from_edges(4, [(0, 1, 1.0), (1, 2, 1.0)])
        c = induce_cascade(g, {0, 1, 2}, {0})
        row = extract_features(c, frontier(g, c), g)
        path = tmp_path / "features.csv"
        write_features_csv(path, ["c0"], row.reshape(1, -1))
        lines = path.read_text().strip().splitlines()
        assert lines[0].split(",") == ["cascade_id", *FEATURE_NAMES]
        values = lines[1].split(",")
        assert values[0] == "c0"
        np.testing.assert_allclose([float(v) for v in values[1:]], row)
