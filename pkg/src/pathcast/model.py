"""The path-encoded growth model.

Each sampled path is embedded per node, read by forward and backward gated
recurrent cells, and the per-position states are concatenated. A learned
attention scheme then collapses all paths into one graph vector: positions
carry a shared multinomial weight (softmax over logits), while mini-batches
of sequences carry geometrically decaying weight a*(1-a)^j, with ``a``
chosen per cascade through a size-bucket lookup. A linear (optionally
one-hidden-layer) head maps the graph vector to the predicted growth.

Variants: "full" uses everything above; "bag" degenerates paths to single
nodes; "fixed" replaces the learned attention with uniform weights
1/(n_paths*path_len); "root" only changes where walks start (handled by the
sampler).
"""

import dataclasses
import json
import math
import os

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError
from .walks import PAD, PathSet

__all__ = [
    "VARIANTS",
    "ModelConfig",
    "GruParams",
    "ModelParams",
    "init_params",
    "apply_embedding_import",
    "size_bucket",
    "gru_step",
    "encode_paths",
    "sequence_weights",
    "position_weights",
    "attention_weight_matrix",
    "attention_mass",
    "predict_cascade",
    "save_checkpoint",
    "load_checkpoint",
]

VARIANTS = ("full", "bag", "fixed", "root")
UPDATE_RULES = ("standard", "lagged")


@dataclasses.dataclass(frozen=True)
class ModelConfig:
    n_nodes: int
    hidden_size: int = 32
    n_paths: int = 200
    path_len: int = 10
    batch_paths: int = 5
    n_buckets: int = 12
    variant: str = "full"
    mlp_hidden: int = 0
    update_rule: str = "standard"
    normalize_attention: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.n_nodes < 1:
            raise ConfigError("n_nodes must be positive")
        if self.hidden_size < 1:
            raise ConfigError("hidden_size must be positive")
        if self.batch_paths < 1 or self.batch_paths > self.n_paths:
            raise ConfigError("batch_paths must lie in [1, n_paths]")
        if self.n_paths % self.batch_paths != 0:
            raise ConfigError(
                f"n_paths ({self.n_paths}) must be a multiple of batch_paths ({self.batch_paths})"
            )
        if self.n_buckets < 1:
            raise ConfigError("n_buckets must be positive")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.variant == "bag" and self.path_len != 1:
            raise ConfigError("bag variant requires path_len == 1")
        if self.update_rule not in UPDATE_RULES:
            raise ConfigError(f"update_rule must be one of {UPDATE_RULES}")
        if self.mlp_hidden < 0:
            raise ConfigError("mlp_hidden cannot be negative")


@dataclasses.dataclass
class GruParams:
    """One direction's gate parameters (input, recurrent, bias per gate)."""

    in_update: Tensor
    in_reset: Tensor
    in_cand: Tensor
    rec_update: Tensor
    rec_reset: Tensor
    rec_cand: Tensor
    bias_update: Tensor
    bias_reset: Tensor
    bias_cand: Tensor

    def named(self, prefix: str):
        for f in dataclasses.fields(self):
            yield f"{prefix}.{f.name}", getattr(self, f.name)


@dataclasses.dataclass
class ModelParams:
    config: ModelConfig
    embedding: Tensor  # hidden_size x (n_nodes + 1); last column embeds PAD
    fwd: GruParams
    bwd: GruParams
    lambda_logits: Tensor  # path_len x 1
    geo_logits: Tensor  # n_buckets x 1
    out_weight: Tensor
    out_bias: Tensor
    hidden_weight: Tensor | None = None
    hidden_bias: Tensor | None = None

    def named(self):
        """Stable-ordered (name, tensor) pairs over every parameter group."""
        yield "embedding", self.embedding
        yield from self.fwd.named("fwd")
        yield from self.bwd.named("bwd")
        yield "lambda_logits", self.lambda_logits
        yield "geo_logits", self.geo_logits
        if self.hidden_weight is not None:
            yield "hidden_weight", self.hidden_weight
            yield "hidden_bias", self.hidden_bias
        yield "out_weight", self.out_weight
        yield "out_bias", self.out_bias

    def tensors(self) -> list[Tensor]:
        return [t for _, t in self.named()]

    def zero_grads(self) -> None:
        for t in self.tensors():
            t.zero_grad()

    def copy(self) -> "ModelParams":
        clone = ModelParams(
            config=self.config,
            embedding=_clone(self.embedding),
            fwd=GruParams(**{f.name: _clone(getattr(self.fwd, f.name)) for f in dataclasses.fields(GruParams)}),
            bwd=GruParams(**{f.name: _clone(getattr(self.bwd, f.name)) for f in dataclasses.fields(GruParams)}),
            lambda_logits=_clone(self.lambda_logits),
            geo_logits=_clone(self.geo_logits),
            out_weight=_clone(self.out_weight),
            out_bias=_clone(self.out_bias),
            hidden_weight=_clone(self.hidden_weight) if self.hidden_weight is not None else None,
            hidden_bias=_clone(self.hidden_bias) if self.hidden_bias is not None else None,
        )
        return clone


def _clone(t: Tensor) -> Tensor:
    return Tensor(t.data.copy(), requires_grad=t.requires_grad)


def _uniform(rng, rows: int, cols: int, scale: float) -> Tensor:
    return Tensor(rng.uniform(-scale, scale, size=(rows, cols)), requires_grad=True)


def init_params(cfg: ModelConfig, embedding_init: np.ndarray | None = None) -> ModelParams:
    """Fresh parameters; embeddings uniform in (-0.05, 0.05) unless imported."""
    from .rng import derive_rng

    rng = derive_rng(cfg.seed, "model-init")
    h = cfg.hidden_size
    emb = _uniform(rng, h, cfg.n_nodes + 1, 0.05)
    if embedding_init is not None:
        init = np.asarray(embedding_init, dtype=np.float64)
        if init.shape != (h, cfg.n_nodes):
            raise ConfigError(
                f"embedding import must be {h} x {cfg.n_nodes}, got {init.shape}"
            )
        emb.data[:, : cfg.n_nodes] = init

    def gru() -> GruParams:
        s = 1.0 / math.sqrt(h)
        return GruParams(
            in_update=_uniform(rng, h, h, s),
            in_reset=_uniform(rng, h, h, s),
            in_cand=_uniform(rng, h, h, s),
            rec_update=_uniform(rng, h, h, s),
            rec_reset=_uniform(rng, h, h, s),
            rec_cand=_uniform(rng, h, h, s),
            bias_update=Tensor(np.zeros((h, 1)), requires_grad=True),
            bias_reset=Tensor(np.zeros((h, 1)), requires_grad=True),
            bias_cand=Tensor(np.zeros((h, 1)), requires_grad=True),
        )

    head_in = cfg.mlp_hidden if cfg.mlp_hidden > 0 else 2 * h
    params = ModelParams(
        config=cfg,
        embedding=emb,
        fwd=gru(),
        bwd=gru(),
        lambda_logits=Tensor(np.zeros((cfg.path_len, 1)), requires_grad=True),
        geo_logits=Tensor(np.zeros((cfg.n_buckets, 1)), requires_grad=True),
        out_weight=_uniform(rng, 1, head_in, 1.0 / math.sqrt(head_in)),
        out_bias=Tensor(np.zeros((1, 1)), requires_grad=True),
    )
    if cfg.mlp_hidden > 0:
        params.hidden_weight = _uniform(rng, cfg.mlp_hidden, 2 * h, 1.0 / math.sqrt(2 * h))
        params.hidden_bias = Tensor(np.zeros((cfg.mlp_hidden, 1)), requires_grad=True)
    return params


def apply_embedding_import(params: ModelParams, path: str | os.PathLike) -> int:
    """Overwrite embedding columns from a TSV of ``id`` followed by H floats.

    Ids absent from the file keep their random initialization; returns the
    number of imported columns.
    """
    h = params.config.hidden_size
    count = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != h + 1:
                raise ConfigError(
                    f"embedding file line {lineno}: expected id + {h} values, got {len(parts)} fields"
                )
            node = int(parts[0])
            if not (0 <= node < params.config.n_nodes):
                raise ConfigError(f"embedding file line {lineno}: node {node} out of range")
            params.embedding.data[:, node] = [float(v) for v in parts[1:]]
            count += 1
    return count


def size_bucket(n_cascade_nodes: int, n_buckets: int) -> int:
    """floor(log2(nodes + 1)) clamped to the available buckets."""
    return min(int(math.floor(math.log2(n_cascade_nodes + 1))), n_buckets - 1)


def gru_step(gp: GruParams, x: Tensor, h_prev: Tensor, cand_prev: Tensor, update_rule: str):
    """One recurrent step over a column batch; returns (h, candidate).

    update = sigmoid(Wu x + Uu h + bu), reset likewise; the candidate is
    tanh(Wc x + reset * (Uc h) + bc). The "standard" rule blends the current
    candidate into the state; "lagged" blends the previous step's candidate.
    """
    n = x.shape[1]
    u = ad.sigmoid(gp.in_update @ x + gp.rec_update @ h_prev + ad.expand_cols(gp.bias_update, n))
    r = ad.sigmoid(gp.in_reset @ x + gp.rec_reset @ h_prev + ad.expand_cols(gp.bias_reset, n))
    cand = ad.tanh(gp.in_cand @ x + ad.mul(r, gp.rec_cand @ h_prev) + ad.expand_cols(gp.bias_cand, n))
    blend = cand if update_rule == "standard" else cand_prev
    ones = Tensor(np.ones(u.shape))
    h = ad.mul(u, blend) + ad.mul(ones - u, h_prev)
    return h, cand


def encode_paths(paths: np.ndarray, params: ModelParams) -> list[Tensor]:
    """Bidirectional encoding of an n_paths x path_len id array.

    Returns one (2*hidden_size) x n_paths tensor per position: the forward
    state stacked on the backward state. PAD ids select the embedding
    table's dedicated last column.
    """
    cfg = params.config
    h, t_len = cfg.hidden_size, paths.shape[1]
    ids = np.where(paths == PAD, cfg.n_nodes, paths)
    if ids.min() < 0 or ids.max() > cfg.n_nodes:
        raise IndexError(f"path ids outside [0, {cfg.n_nodes}]")
    xs = [ad.gather_columns(params.embedding, ids[:, i]) for i in range(t_len)]
    n = paths.shape[0]

    zero = Tensor(np.zeros((h, n)))
    fwd_states: list[Tensor] = []
    state, cand = zero, zero
    for i in range(t_len):
        state, cand = gru_step(params.fwd, xs[i], state, cand, cfg.update_rule)
        fwd_states.append(state)

    bwd_states: list[Tensor | None] = [None] * t_len
    state, cand = zero, zero
    for i in reversed(range(t_len)):
        state, cand = gru_step(params.bwd, xs[i], state, cand, cfg.update_rule)
        bwd_states[i] = state

    return [ad.concat([fwd_states[i], bwd_states[i]], axis=0) for i in range(t_len)]


def position_weights(params: ModelParams) -> Tensor:
    """Multinomial attention over positions: softmax of the shared logits."""
    return ad.softmax(params.lambda_logits, axis=0)


def sequence_weights(params: ModelParams, bucket: int, n_paths: int) -> Tensor:
    """Geometric attention over sequences as an n_paths x 1 column.

    Sequence k falls in mini-batch floor(k / batch_paths) and carries weight
    a * (1 - a)^batch, with a = sigmoid(geo_logits[bucket]). Computed with
    taped ops so gradients reach the logits.
    """
    cfg = params.config
    b = cfg.batch_paths
    if n_paths % b != 0:
        raise ConfigError(f"n_paths ({n_paths}) must be a multiple of batch_paths ({b})")
    a = ad.sigmoid(ad.slice_block(params.geo_logits, rows=(bucket, bucket + 1)))
    one = Tensor([[1.0]])
    rem = one - a
    ones_b = Tensor(np.ones((b, 1)))
    blocks = []
    for j in range(n_paths // b):
        w_j = ad.mul(a, ad.power(rem, j))
        blocks.append(ad.scalar_mul(w_j, ones_b))
    geo = ad.concat(blocks, axis=0)
    if cfg.normalize_attention:
        mass = ad.scalar_mul(float(b), one - ad.power(rem, n_paths // b))
        geo = ad.scalar_mul(ad.power(mass, -1.0), geo)
    return geo


def attention_mass(a: float, n_paths: int, batch_paths: int) -> float:
    """Closed form of the summed sequence weights: B * (1 - (1-a)^(K/B))."""
    if n_paths % batch_paths != 0:
        raise ConfigError("n_paths must be a multiple of batch_paths")
    return batch_paths * (1.0 - (1.0 - a) ** (n_paths // batch_paths))


def attention_weight_matrix(a: float, lam: np.ndarray, n_paths: int, batch_paths: int) -> np.ndarray:
    """Per-(sequence, position) attention weights as a plain array (no tape)."""
    lam = np.asarray(lam, dtype=np.float64).ravel()
    geo = np.array([a * (1.0 - a) ** (k // batch_paths) for k in range(n_paths)])
    return np.outer(geo, lam)


def _combine(enc: list[Tensor], geo: Tensor, lam: Tensor) -> Tensor:
    parts = []
    for i, enc_i in enumerate(enc):
        lam_i = ad.slice_block(lam, rows=(i, i + 1))
        parts.append(ad.scalar_mul(lam_i, enc_i @ geo))
    total = parts[0]
    for p in parts[1:]:
        total = total + p
    return total


def predict_cascade(paths: PathSet, n_cascade_nodes: int, params: ModelParams) -> Tensor:
    """Predicted scaled growth for one cascade as a 1x1 tensor."""
    cfg = params.config
    if paths.n_paths != cfg.n_paths or paths.path_len != cfg.path_len:
        raise ConfigError(
            f"path set {paths.paths.shape} does not match config "
            f"({cfg.n_paths} x {cfg.path_len}) for variant {cfg.variant!r}"
        )
    enc = encode_paths(paths.paths, params)
    if cfg.variant == "fixed":
        uniform = Tensor(np.ones((cfg.n_paths, 1)))
        scale = 1.0 / (cfg.n_paths * cfg.path_len)
        parts = [ad.scalar_mul(scale, enc_i @ uniform) for enc_i in enc]
        h_graph = parts[0]
        for p in parts[1:]:
            h_graph = h_graph + p
    else:
        bucket = size_bucket(n_cascade_nodes, cfg.n_buckets)
        geo = sequence_weights(params, bucket, cfg.n_paths)
        lam = position_weights(params)
        h_graph = _combine(enc, geo, lam)
    if params.hidden_weight is not None:
        hid = ad.tanh(params.hidden_weight @ h_graph + params.hidden_bias)
        return params.out_weight @ hid + params.out_bias
    return params.out_weight @ h_graph + params.out_bias


def save_checkpoint(params: ModelParams, path: str | os.PathLike, meta: dict | None = None) -> None:
    doc = {
        "format_version": 1,
        "config": dataclasses.asdict(params.config),
        "params": {
            name: {"shape": list(t.shape), "data": t.data.ravel().tolist()}
            for name, t in params.named()
        },
    }
    if meta is not None:
        doc["meta"] = meta
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)


def load_checkpoint(path: str | os.PathLike) -> ModelParams:
    """Rebuild parameters, validating every stored shape against the config."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format_version") != 1:
        raise ConfigError(f"unsupported checkpoint format {doc.get('format_version')!r}")
    cfg = ModelConfig(**doc["config"])
    params = init_params(cfg)
    stored = doc["params"]
    for name, tensor in params.named():
        if name not in stored:
            raise ConfigError(f"checkpoint missing parameter {name!r}")
        entry = stored[name]
        shape = tuple(entry["shape"])
        if shape != tensor.shape:
            raise ConfigError(
                f"checkpoint parameter {name!r} has shape {shape}, expected {tensor.shape}"
            )
        tensor.data = np.array(entry["data"], dtype=np.float64).reshape(shape)
    return params
