"""Optimization and evaluation of the growth model.

Paths are sampled once per cascade (seeded by the cascade id) and frozen
across epochs unless resampling is requested. Each gradient step averages
the squared-error loss over a batch of cascades, clips the global gradient
norm, and applies Adam (or plain SGD). Early stopping tracks validation
MSE and restores the best parameters.
"""

import dataclasses
import json
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import autodiff as ad
from .autodiff import GradTape, Tensor
from .errors import NumericalError
from .graphs import GlobalGraph, induce_cascade
from .model import ModelConfig, ModelParams, init_params, predict_cascade
from .rng import derive_rng
from .walks import WalkConfig, sample_paths

__all__ = [
    "TrainConfig",
    "TrainReport",
    "mse",
    "effective_walk_config",
    "prepare_examples",
    "train",
    "evaluate",
    "error_analysis",
]


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs_max: int = 30
    patience: int = 10
    grad_clip_norm: float = 5.0
    l2_coeff: float = 0.0
    batch_cascades: int = 16
    optimizer: str = "adam"  # or "sgd"
    resample_walks: bool = False
    eval_walk_samples: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate cannot be negative")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        if self.batch_cascades < 1:
            raise ValueError("batch_cascades must be at least 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if self.eval_walk_samples < 1:
            raise ValueError("eval_walk_samples must be at least 1")


@dataclasses.dataclass
class TrainReport:
    train_history: list[float]
    val_history: list[float]
    best_epoch: int
    best_val_mse: float | None
    final_train_mse: float
    test_mse: float | None
    wall_seconds: float
    seed: int

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)


def mse(preds, labels) -> float:
    preds = list(preds)
    labels = list(labels)
    if not preds or len(preds) != len(labels):
        raise ValueError(f"need equal non-empty prediction/label lists, got {len(preds)}/{len(labels)}")
    return float(np.mean([(p - t) ** 2 for p, t in zip(preds, labels)]))


def effective_walk_config(variant: str, walk_cfg: WalkConfig) -> WalkConfig:
    """Adjust the sampler for a model variant.

    bag: single-node paths cycling over all cascade nodes; root: walks start
    at roots only; full/fixed: unchanged jump starts.
    """
    if variant == "bag":
        return dataclasses.replace(walk_cfg, path_len=1, start_mode="nodes")
    if variant == "root":
        return dataclasses.replace(walk_cfg, start_mode="roots")
    return walk_cfg


class _Example:
    __slots__ = ("cascade_id", "cascade", "paths", "label")

    def __init__(self, cascade_id, cascade, paths, label):
        self.cascade_id = cascade_id
        self.cascade = cascade
        self.paths = paths
        self.label = label


def prepare_examples(records, g: GlobalGraph, walk_cfg: WalkConfig, horizon=None, threads: int = 1):
    """Induce cascades and sample their (frozen) path sets.

    Every cascade gets an independent walk stream derived from the walk seed
    and its id, so results do not depend on record order or thread count.
    Returns examples sorted by cascade id.
    """
    records = sorted(records, key=lambda r: r.cascade_id)

    def build(record):
        h = horizon if horizon is not None else record.primary_horizon()
        cascade = induce_cascade(g, record.adopters, record.roots)
        seed = _walk_seed(walk_cfg.seed, record.cascade_id)
        cfg = dataclasses.replace(walk_cfg, seed=seed)
        paths = sample_paths(cascade, g, cfg, cascade_id=record.cascade_id)
        return _Example(record.cascade_id, cascade, paths, record.scaled[h])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(build, records))
    return [build(r) for r in records]


def _walk_seed(base_seed: int, cascade_id: str) -> int:
    return int(derive_rng(base_seed, "walk-seed", cascade_id).integers(0, 2**63 - 1))


def _squared_error(example: _Example, params: ModelParams) -> Tensor:
    pred = predict_cascade(example.paths, example.cascade.n_nodes, params)
    diff = pred - Tensor([[example.label]])
    return ad.mul(diff, diff)


class _Adam:
    def __init__(self, params: ModelParams, cfg: TrainConfig):
        self.cfg = cfg
        self.m = {name: np.zeros_like(t.data) for name, t in params.named()}
        self.v = {name: np.zeros_like(t.data) for name, t in params.named()}
        self.t = 0

    def step(self, params: ModelParams) -> None:
        cfg = self.cfg
        self.t += 1
        b1, b2 = cfg.adam_beta1, cfg.adam_beta2
        for name, tensor in params.named():
            g = tensor.grad
            if g is None:
                continue
            if cfg.optimizer == "sgd":
                tensor.data -= cfg.learning_rate * g
                continue
            m = self.m[name] = b1 * self.m[name] + (1 - b1) * g
            v = self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            m_hat = m / (1 - b1**self.t)
            v_hat = v / (1 - b2**self.t)
            tensor.data -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)


def _clip_gradients(params: ModelParams, max_norm: float) -> None:
    if max_norm <= 0:
        return
    total = 0.0
    for _, t in params.named():
        if t.grad is not None:
            total += float(np.sum(t.grad * t.grad))
    norm = np.sqrt(total)
    if norm > max_norm:
        scale = max_norm / norm
        for _, t in params.named():
            if t.grad is not None:
                t.grad *= scale


def _diagnose_non_finite(batch, params: ModelParams) -> None:
    """Re-run the batch forward with per-op checks to name the failing op."""
    with ad.debug_checks():
        for example in batch:
            _squared_error(example, params)
    raise NumericalError("loss is non-finite but every op output was finite")


def train(
    model_cfg: ModelConfig,
    train_records,
    val_records,
    global_graph: GlobalGraph,
    walk_cfg: WalkConfig,
    train_cfg: TrainConfig,
    test_records=None,
    horizon=None,
    threads: int = 1,
    initial_params: ModelParams | None = None,
) -> tuple[ModelParams, TrainReport]:
    """Fit the model; returns the best-validation parameters and a report.

    With no validation records, runs all epochs and keeps the final
    parameters. Deterministic for fixed seeds regardless of record order or
    thread count: examples are processed in cascade-id order and the epoch
    shuffle has its own seeded stream.
    """
    if not train_records:
        raise ValueError("training split is empty")
    start = time.monotonic()
    walk_cfg = effective_walk_config(model_cfg.variant, walk_cfg)
    n_eval_sets = train_cfg.eval_walk_samples
    examples = prepare_examples(train_records, global_graph, walk_cfg, horizon, threads)
    val_sets = (
        _prepare_example_sets(val_records, global_graph, walk_cfg, horizon, threads, n_eval_sets)
        if val_records
        else []
    )

    params = initial_params if initial_params is not None else init_params(model_cfg)
    optimizer = _Adam(params, train_cfg)
    train_history: list[float] = []
    val_history: list[float] = []
    best_val = None
    best_epoch = -1
    best_snapshot = None
    stale = 0
    n = len(examples)

    for epoch in range(train_cfg.epochs_max):
        if train_cfg.resample_walks and epoch > 0:
            epoch_walks = dataclasses.replace(walk_cfg, seed=walk_cfg.seed + epoch)
            examples = prepare_examples(train_records, global_graph, epoch_walks, horizon, threads)
        order = derive_rng(train_cfg.seed, "shuffle", epoch).permutation(n)
        epoch_losses = []
        for lo in range(0, n, train_cfg.batch_cascades):
            batch = [examples[int(i)] for i in order[lo : lo + train_cfg.batch_cascades]]
            params.zero_grads()
            with GradTape() as tape:
                total = _squared_error(batch[0], params)
                for ex in batch[1:]:
                    total = total + _squared_error(ex, params)
                loss = ad.scalar_mul(1.0 / len(batch), total)
            loss_value = loss.item()
            if not np.isfinite(loss_value):
                _diagnose_non_finite(batch, params)
            tape.backward(loss)
            if train_cfg.l2_coeff > 0:
                for _, t in params.named():
                    if t.grad is not None:
                        t.grad += 2.0 * train_cfg.l2_coeff * t.data
            _clip_gradients(params, train_cfg.grad_clip_norm)
            optimizer.step(params)
            epoch_losses.append(loss_value)
        train_history.append(float(np.mean(epoch_losses)))

        if val_sets:
            val_mse, _ = _evaluate_sets(val_sets, params, threads)
            val_history.append(val_mse)
            if best_val is None or val_mse < best_val:
                best_val, best_epoch, stale = val_mse, epoch, 0
                best_snapshot = params.copy()
            else:
                stale += 1
                if stale >= train_cfg.patience:
                    break

    if best_snapshot is not None:
        params = best_snapshot
    else:
        best_epoch = len(train_history) - 1

    final_train_mse, _ = _evaluate_examples(examples, params, threads)
    test_mse = None
    if test_records:
        test_sets = _prepare_example_sets(
            test_records, global_graph, walk_cfg, horizon, threads, n_eval_sets
        )
        test_mse, _ = _evaluate_sets(test_sets, params, threads)

    report = TrainReport(
        train_history=train_history,
        val_history=val_history,
        best_epoch=best_epoch,
        best_val_mse=best_val,
        final_train_mse=final_train_mse,
        test_mse=test_mse,
        wall_seconds=time.monotonic() - start,
        seed=train_cfg.seed,
    )
    return params, report


def _predictions(examples, params: ModelParams, threads: int = 1):
    def predict(ex):
        return predict_cascade(ex.paths, ex.cascade.n_nodes, params).item()

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(predict, examples))
    return [predict(ex) for ex in examples]


def _prepare_example_sets(records, g, walk_cfg, horizon, threads, n_sets):
    return [
        prepare_examples(
            records, g,
            walk_cfg if s == 0 else dataclasses.replace(walk_cfg, seed=walk_cfg.seed + s),
            horizon, threads,
        )
        for s in range(n_sets)
    ]


def _evaluate_sets(example_sets, params: ModelParams, threads: int = 1):
    """Average each cascade's prediction over the sampled path sets."""
    preds = np.array(_predictions(example_sets[0], params, threads))
    for examples in example_sets[1:]:
        preds += np.array(_predictions(examples, params, threads))
    preds /= len(example_sets)
    labels = [ex.label for ex in example_sets[0]]
    residuals = {ex.cascade_id: p - ex.label for ex, p in zip(example_sets[0], preds)}
    return mse(preds, labels), residuals


def _evaluate_examples(examples, params: ModelParams, threads: int = 1):
    return _evaluate_sets([examples], params, threads)


def evaluate(
    params: ModelParams,
    records,
    global_graph: GlobalGraph,
    walk_cfg: WalkConfig,
    horizon=None,
    threads: int = 1,
    walk_samples: int = 1,
):
    """MSE and per-cascade residuals (prediction minus label), keyed by id.

    ``walk_samples`` > 1 averages each cascade's prediction over that many
    independently sampled path sets, a Monte Carlo estimate of the model's
    expected output under the walk distribution.
    """
    if not records:
        raise ValueError("cannot evaluate an empty dataset")
    walk_cfg = effective_walk_config(params.config.variant, walk_cfg)
    examples = prepare_examples(records, global_graph, walk_cfg, horizon, threads)
    preds = np.array(_predictions(examples, params, threads))
    for s in range(1, walk_samples):
        resampled = dataclasses.replace(walk_cfg, seed=walk_cfg.seed + s)
        more = prepare_examples(records, global_graph, resampled, horizon, threads)
        preds += np.array(_predictions(more, params, threads))
    preds /= walk_samples
    labels = [ex.label for ex in examples]
    residuals = {ex.cascade_id: p - ex.label for ex, p in zip(examples, preds)}
    return mse(preds, labels), residuals


def error_analysis(residuals_a: dict, residuals_b: dict, records, global_graph: GlobalGraph, top_n: int = 100):
    """Compare two methods on the cascades each one wins.

    For the cascades where method A has smaller squared error than B (and
    vice versa), takes the top ``top_n`` by squared-error difference and
    summarizes their graph statistics (node/edge counts, mean out-degree,
    edge density).
    """
    if set(residuals_a) != set(residuals_b):
        raise ValueError("residual maps cover different cascades")
    by_id = {r.cascade_id: r for r in records}
    if set(residuals_a) - set(by_id):
        raise ValueError("residuals reference cascades missing from the dataset")

    gaps = []
    for cid in residuals_a:
        se_a, se_b = residuals_a[cid] ** 2, residuals_b[cid] ** 2
        gaps.append((cid, se_b - se_a))

    def summarize(selected_ids):
        if not selected_ids:
            return {"count": 0, "mean_nodes": None, "mean_edges": None, "mean_out_degree": None, "mean_edge_density": None}
        stats = []
        for cid in selected_ids:
            rec = by_id[cid]
            c = induce_cascade(global_graph, rec.adopters, rec.roots)
            n = c.n_nodes
            density = c.n_edges / (n * (n - 1)) if n >= 2 else 0.0
            stats.append((n, c.n_edges, c.n_edges / n, density))
        arr = np.array(stats)
        return {
            "count": len(selected_ids),
            "mean_nodes": float(arr[:, 0].mean()),
            "mean_edges": float(arr[:, 1].mean()),
            "mean_out_degree": float(arr[:, 2].mean()),
            "mean_edge_density": float(arr[:, 3].mean()),
        }

    a_wins = sorted((g for g in gaps if g[1] > 0), key=lambda g: (-g[1], g[0]))
    b_wins = sorted((g for g in gaps if g[1] < 0), key=lambda g: (g[1], g[0]))
    return {
        "a_better": summarize([cid for cid, _ in a_wins[:top_n]]),
        "b_better": summarize([cid for cid, _ in b_wins[:top_n]]),
    }
