"""Scikit-learn compatible estimators wrapping the library.

``CascadeGrowthRegressor`` fits the path-encoded model on a list of
CascadeGraph objects; ``StructuralFeatures`` turns cascades into a numeric
feature matrix; ``RidgeGrowthRegressor`` is the closed-form linear baseline.
All three follow the fit/transform/predict and get_params conventions, so
they compose with pipelines and model selection utilities.
"""

import dataclasses

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_array, check_X_y

from .features import FEATURE_NAMES, RidgeModel, extract_features, fit_ridge, predict_ridge
from .graphs import CascadeGraph, GlobalGraph, frontier
from .model import ModelConfig, predict_cascade
from .rng import derive_rng
from .training import TrainConfig, effective_walk_config, train
from .walks import WalkConfig, sample_paths

__all__ = ["CascadeGrowthRegressor", "StructuralFeatures", "RidgeGrowthRegressor"]


def _check_cascades(X, graph: GlobalGraph):
    cascades = list(X)
    if not cascades:
        raise ValueError("X must contain at least one cascade")
    for i, c in enumerate(cascades):
        if not isinstance(c, CascadeGraph):
            raise TypeError(f"X[{i}] is {type(c).__name__}, expected CascadeGraph")
        if max(c.node_list) >= graph.n_nodes:
            raise ValueError(f"X[{i}] references nodes outside the global graph")
    return cascades


class _CascadeAsRecord:
    """Adapter giving a CascadeGraph the record interface train() expects."""

    def __init__(self, index: int, cascade: CascadeGraph, label: float):
        self.cascade_id = f"x{index:06d}"
        self.adopters = list(cascade.node_list)
        self.roots = list(cascade.roots)
        self.scaled = {0: float(label)}
        self.growth = {0: 0}

    def primary_horizon(self) -> int:
        return 0


class CascadeGrowthRegressor(RegressorMixin, BaseEstimator):
    """End-to-end growth regressor over cascade graphs.

    Parameters mirror the underlying walk/model/training configs. ``fit``
    carves ``validation_fraction`` of the data out for early stopping.
    """

    def __init__(
        self,
        global_graph: GlobalGraph | None = None,
        variant: str = "full",
        scorer: str = "deg",
        n_paths: int = 200,
        path_len: int = 10,
        batch_paths: int = 5,
        smoothing: float = 0.01,
        hidden_size: int = 32,
        n_buckets: int = 12,
        mlp_hidden: int = 0,
        update_rule: str = "standard",
        normalize_attention: bool = False,
        learning_rate: float = 0.01,
        epochs_max: int = 30,
        patience: int = 10,
        batch_cascades: int = 16,
        l2_coeff: float = 0.0,
        grad_clip_norm: float = 5.0,
        validation_fraction: float = 0.1,
        threads: int = 1,
        seed: int = 0,
    ):
        self.global_graph = global_graph
        self.variant = variant
        self.scorer = scorer
        self.n_paths = n_paths
        self.path_len = path_len
        self.batch_paths = batch_paths
        self.smoothing = smoothing
        self.hidden_size = hidden_size
        self.n_buckets = n_buckets
        self.mlp_hidden = mlp_hidden
        self.update_rule = update_rule
        self.normalize_attention = normalize_attention
        self.learning_rate = learning_rate
        self.epochs_max = epochs_max
        self.patience = patience
        self.batch_cascades = batch_cascades
        self.l2_coeff = l2_coeff
        self.grad_clip_norm = grad_clip_norm
        self.validation_fraction = validation_fraction
        self.threads = threads
        self.seed = seed

    def _configs(self):
        path_len = 1 if self.variant == "bag" else self.path_len
        model_cfg = ModelConfig(
            n_nodes=self.global_graph.n_nodes,
            hidden_size=self.hidden_size,
            n_paths=self.n_paths,
            path_len=path_len,
            batch_paths=self.batch_paths,
            n_buckets=self.n_buckets,
            variant=self.variant,
            mlp_hidden=self.mlp_hidden,
            update_rule=self.update_rule,
            normalize_attention=self.normalize_attention,
            seed=self.seed,
        )
        walk_cfg = WalkConfig(
            n_paths=self.n_paths,
            path_len=self.path_len,
            smoothing=self.smoothing,
            scorer=self.scorer,
            seed=self.seed,
        )
        train_cfg = TrainConfig(
            learning_rate=self.learning_rate,
            epochs_max=self.epochs_max,
            patience=self.patience,
            grad_clip_norm=self.grad_clip_norm,
            l2_coeff=self.l2_coeff,
            batch_cascades=self.batch_cascades,
            seed=self.seed,
        )
        return model_cfg, walk_cfg, train_cfg

    def fit(self, X, y):
        if self.global_graph is None:
            raise ValueError("global_graph must be provided before fitting")
        cascades = _check_cascades(X, self.global_graph)
        y = np.asarray(y, dtype=np.float64).ravel()
        if len(y) != len(cascades):
            raise ValueError(f"X has {len(cascades)} cascades but y has {len(y)} labels")
        records = [_CascadeAsRecord(i, c, label) for i, (c, label) in enumerate(zip(cascades, y))]
        n_val = int(round(self.validation_fraction * len(records)))
        if n_val > 0 and len(records) > n_val:
            perm = derive_rng(self.seed, "estimator-val-split").permutation(len(records))
            val_idx = set(int(i) for i in perm[:n_val])
            train_recs = [r for i, r in enumerate(records) if i not in val_idx]
            val_recs = [r for i, r in enumerate(records) if i in val_idx]
        else:
            train_recs, val_recs = records, []
        model_cfg, walk_cfg, train_cfg = self._configs()
        self.params_, self.report_ = train(
            model_cfg,
            train_recs,
            val_recs,
            self.global_graph,
            walk_cfg,
            train_cfg,
            horizon=0,
            threads=self.threads,
        )
        return self

    def predict(self, X):
        if not hasattr(self, "params_"):
            raise NotFittedError("fit must be called before predict")
        cascades = _check_cascades(X, self.global_graph)
        _, walk_cfg, _ = self._configs()
        walk_cfg = effective_walk_config(self.variant, walk_cfg)
        preds = []
        for i, c in enumerate(cascades):
            seed = int(derive_rng(self.seed, "predict-walks", i).integers(0, 2**63 - 1))
            cfg = dataclasses.replace(walk_cfg, seed=seed)
            paths = sample_paths(c, self.global_graph, cfg)
            preds.append(predict_cascade(paths, c.n_nodes, self.params_).item())
        return np.array(preds)


class StructuralFeatures(TransformerMixin, BaseEstimator):
    """Cascade graphs -> numeric feature matrix (see FEATURE_NAMES)."""

    def __init__(self, global_graph: GlobalGraph | None = None, include_identity: bool = False, identity_dim: int | None = 4096):
        self.global_graph = global_graph
        self.include_identity = include_identity
        self.identity_dim = identity_dim

    def fit(self, X, y=None):
        if self.global_graph is None:
            raise ValueError("global_graph must be provided")
        return self

    def transform(self, X):
        if self.global_graph is None:
            raise ValueError("global_graph must be provided")
        cascades = _check_cascades(X, self.global_graph)
        rows = []
        for c in cascades:
            f = frontier(self.global_graph, c)
            rows.append(
                extract_features(c, f, self.global_graph, self.include_identity, self.identity_dim)
            )
        return np.vstack(rows)

    def get_feature_names_out(self, input_features=None):
        names = list(FEATURE_NAMES)
        if self.include_identity:
            dim = self.global_graph.n_nodes if self.identity_dim is None else self.identity_dim
            names += [f"identity_{i}" for i in range(dim)]
        return np.array(names, dtype=object)


class RidgeGrowthRegressor(RegressorMixin, BaseEstimator):
    """Closed-form ridge regression with internal standardization."""

    def __init__(self, l2: float = 0.1, standardize: bool = True, fit_intercept: bool = True):
        self.l2 = l2
        self.standardize = standardize
        self.fit_intercept = fit_intercept

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.model_: RidgeModel = fit_ridge(
            X, y, self.l2, standardize=self.standardize, fit_intercept=self.fit_intercept
        )
        self.coef_ = self.model_.weights
        self.intercept_ = self.model_.bias
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        if not hasattr(self, "model_"):
            raise NotFittedError("fit must be called before predict")
        X = check_array(X, dtype=np.float64)
        return predict_ridge(self.model_, X)
