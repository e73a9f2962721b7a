"""Hand-crafted structural features and the closed-form ridge baseline.

Features summarize the cascade graph (counts, degrees, density, leaves,
triads on the undirected projection) and its frontier. An optional node
presence block hashes adopter ids into a fixed-width indicator vector.
The ridge regressor standardizes features internally, leaves the intercept
unpenalized, and solves the normal equations directly.
"""

import csv
import math
import os

import numpy as np
import scipy.linalg

from .graphs import CascadeGraph, FrontierGraph, GlobalGraph

__all__ = [
    "FEATURE_NAMES",
    "extract_features",
    "feature_matrix",
    "triangle_counts",
    "RidgeModel",
    "fit_ridge",
    "predict_ridge",
    "write_features_csv",
]

FEATURE_NAMES = (
    "n_nodes",
    "n_edges",
    "edge_density",
    "n_leaves",
    "mean_local_out_degree",
    "p90_local_out_degree",
    "mean_global_out_degree",
    "p90_global_out_degree",
    "frontier_n_nodes",
    "frontier_n_edges",
    "open_triangles",
    "closed_triangles",
)

_HASH_MULT = 0x9E3779B97F4A7C15  # splitmix64 multiplier; stable across runs


def _p90(values) -> float:
    """Nearest-rank 90th percentile: ascending sort, index ceil(0.9 n) - 1."""
    ordered = sorted(values)
    return float(ordered[math.ceil(0.9 * len(ordered)) - 1])


def triangle_counts(c: CascadeGraph) -> tuple[int, int]:
    """(open, closed) triangle counts on the undirected simple projection."""
    und: dict[int, set[int]] = {v: set() for v in c.node_list}
    for src, dst, _ in c.edges():
        und[src].add(dst)
        und[dst].add(src)
    wedges = sum(len(nbrs) * (len(nbrs) - 1) // 2 for nbrs in und.values())
    per_edge = 0
    for v in c.node_list:
        for u in und[v]:
            if u > v:
                per_edge += len(und[v] & und[u])
    closed = per_edge // 3
    return wedges - 3 * closed, closed


def extract_features(
    c: CascadeGraph,
    f: FrontierGraph,
    g: GlobalGraph,
    include_identity: bool = False,
    identity_dim: int | None = 4096,
) -> np.ndarray:
    """Feature vector in FEATURE_NAMES order, plus the optional identity block.

    ``identity_dim`` hashes node presence into that many slots; None uses one
    exact indicator per global node.
    """
    if f.nodes & c.nodes:
        raise ValueError("frontier overlaps the cascade; not a frontier of this cascade")
    n = c.n_nodes
    local_out = [c.out_degree(v) for v in c.node_list]
    global_out = [g.out_degree(v) for v in c.node_list]
    n_leaves = sum(1 for v in c.node_list if c.in_degree(v) == 1 and c.out_degree(v) == 0)
    density = c.n_edges / (n * (n - 1)) if n >= 2 else 0.0
    open_tri, closed_tri = triangle_counts(c)
    base = np.array(
        [
            float(n),
            float(c.n_edges),
            density,
            float(n_leaves),
            float(np.mean(local_out)),
            _p90(local_out),
            float(np.mean(global_out)),
            _p90(global_out),
            float(f.n_nodes),
            float(f.n_edges),
            float(open_tri),
            float(closed_tri),
        ]
    )
    if not include_identity:
        return base
    dim = g.n_nodes if identity_dim is None else identity_dim
    block = np.zeros(dim)
    for v in c.node_list:
        slot = v if identity_dim is None else ((v * _HASH_MULT) & 0xFFFFFFFFFFFFFFFF) % dim
        block[slot] = 1.0
    return np.concatenate([base, block])


def feature_matrix(cascades, frontiers, g: GlobalGraph, include_identity=False, identity_dim=4096) -> np.ndarray:
    rows = [
        extract_features(c, f, g, include_identity, identity_dim)
        for c, f in zip(cascades, frontiers)
    ]
    return np.vstack(rows)


class RidgeModel:
    """Fitted linear model; weights live in raw (unstandardized) feature space."""

    def __init__(self, weights: np.ndarray, bias: float, l2: float, n_features: int):
        self.weights = np.asarray(weights, dtype=np.float64).ravel()
        self.bias = float(bias)
        self.l2 = float(l2)
        self.n_features = int(n_features)


def fit_ridge(
    X: np.ndarray,
    y: np.ndarray,
    l2: float,
    standardize: bool = True,
    fit_intercept: bool = True,
) -> RidgeModel:
    """Solve (X'X + l2 I) w = X'y on (optionally standardized) features.

    Standardization uses the training mean/std per column; constant columns
    get weight zero. The intercept is never penalized. A non-positive-definite
    system (possible only with l2 = 0) raises with advice to regularize.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[0] < 1:
        raise ValueError(f"need matching non-empty X/y, got {X.shape} and {y.shape}")
    n, d = X.shape
    if standardize:
        mu = X.mean(axis=0)
        sd = X.std(axis=0)
        sd = np.where(sd == 0.0, 1.0, sd)
    else:
        mu = np.zeros(d)
        sd = np.ones(d)
    Xs = (X - mu) / sd
    y_off = y.mean() if fit_intercept else 0.0
    yc = y - y_off
    gram = Xs.T @ Xs + l2 * np.eye(d)
    try:
        cho = scipy.linalg.cho_factor(gram)
        w_std = scipy.linalg.cho_solve(cho, Xs.T @ yc)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"normal equations are singular ({exc}); use l2 > 0"
        ) from exc
    weights = w_std / sd
    bias = y_off - float(weights @ mu)
    return RidgeModel(weights, bias, l2, d)


def predict_ridge(model: RidgeModel, x: np.ndarray) -> float | np.ndarray:
    """w . x + bias for one feature vector or a matrix of rows."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        if x.shape[0] != model.n_features:
            raise ValueError(f"expected {model.n_features} features, got {x.shape[0]}")
        return float(x @ model.weights + model.bias)
    if x.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got {x.shape[1]}")
    return x @ model.weights + model.bias


def write_features_csv(path: str | os.PathLike, cascade_ids, matrix: np.ndarray, identity_cols: int = 0) -> None:
    """One cascade per row with a named header, for external analysis."""
    names = list(FEATURE_NAMES) + [f"identity_{i}" for i in range(identity_cols)]
    if matrix.shape[1] != len(names):
        raise ValueError(f"matrix has {matrix.shape[1]} columns, header has {len(names)}")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cascade_id", *names])
        for cid, row in zip(cascade_ids, matrix):
            writer.writerow([cid, *[repr(float(v)) for v in row]])
