"""Command-line entry point for reproducible experiment runs.

Subcommands: gen-data, sample-walks, train, eval, features-baseline,
ablate. Settings merge, in increasing precedence: built-in defaults, a JSON
config file with flat dotted keys (e.g. "walk.K"), the CASCADE_SEED
environment variable, command-line flags. The fully resolved configuration
is echoed into every output artifact's meta block. Result JSON goes to
stdout; logs go to stderr. Exit codes: 0 success, 2 usage/config error,
3 numerical abort, 4 partial ablation.
"""

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from .errors import ConfigError, GenerationError, GraphParseError, NumericalError
from .features import FEATURE_NAMES, feature_matrix, fit_ridge, predict_ridge, write_features_csv
from .graphs import frontier, induce_cascade, load_global_graph, save_global_graph
from .model import ModelConfig, apply_embedding_import, init_params, load_checkpoint, save_checkpoint
from .rng import derive_rng
from .synth import (
    SyntheticConfig,
    downsample_zero_growth,
    generate_global,
    make_dataset,
    read_records,
    split_dataset,
    write_records,
)
from .training import TrainConfig, effective_walk_config, evaluate, train
from .walks import SCORERS, WalkConfig, sample_paths

DEFAULT_L2_GRID = []
for _k in range(9):
    DEFAULT_L2_GRID.append(10.0 ** -_k)
    if _k < 8:
        DEFAULT_L2_GRID.append(5.0 * 10.0 ** -(_k + 1))

# key -> (parser, default). Config files and flags share these dotted names.
_BOOL = {"true": True, "false": False, "1": True, "0": False}


def _parse_bool(text):
    if isinstance(text, bool):
        return text
    try:
        return _BOOL[str(text).lower()]
    except KeyError:
        raise ConfigError(f"expected true/false, got {text!r}")


def _int_list(text):
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(v) for v in str(text).split(",") if v != ""]


def _float_list(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).split(",") if v != ""]


def _str_list(text):
    if isinstance(text, (list, tuple)):
        return [str(v) for v in text]
    return [v for v in str(text).split(",") if v != ""]


CONFIG_KEYS: dict[str, tuple] = {
    "seed": (int, 0),
    "threads": (int, os.cpu_count() or 1),
    "data.n_nodes": (int, 2000),
    "data.attachment_degree": (int, 3),
    "data.activation_base": (float, 0.15),
    "data.t_steps": (int, 2),
    "data.horizons": (_int_list, [2]),
    "data.n_cascades": (int, 500),
    "data.downsample_fraction": (float, 0.5),
    "data.split": (_float_list, [0.8, 0.1, 0.1]),
    "data.horizon": (int, None),
    "walk.K": (int, 200),
    "walk.T": (int, 10),
    "walk.alpha": (float, 0.01),
    "walk.scorer": (str, "deg"),
    "model.H": (int, 32),
    "model.B": (int, 5),
    "model.buckets": (int, 12),
    "model.variant": (str, "full"),
    "model.mlp_hidden": (int, 0),
    "model.gru_update": (str, "standard"),
    "model.normalize_attention": (_parse_bool, False),
    "model.embedding_init": (str, None),
    "train.lr": (float, 0.01),
    "train.epochs": (int, 30),
    "train.patience": (int, 10),
    "train.batch": (int, 16),
    "train.l2": (float, 0.0),
    "train.grad_clip": (float, 5.0),
    "train.optimizer": (str, "adam"),
    "train.resample_walks": (_parse_bool, False),
    "train.eval_walk_samples": (int, 1),
    "baseline.l2_grid": (_float_list, DEFAULT_L2_GRID),
    "baseline.identity": (_parse_bool, False),
    "baseline.identity_dim": (int, 4096),
    "ablate.variants": (_str_list, ["bag", "fixed", "root", "full"]),
    "ablate.scorers": (_str_list, list(SCORERS)),
}

# short aliases for the most common flags
ALIASES = {
    "K": "walk.K",
    "T": "walk.T",
    "alpha": "walk.alpha",
    "scorer": "walk.scorer",
    "H": "model.H",
    "B": "model.B",
    "variant": "model.variant",
    "mlp-hidden": "model.mlp_hidden",
    "gru-update": "model.gru_update",
    "normalize-attention": "model.normalize_attention",
    "embedding-init": "model.embedding_init",
    "lr": "train.lr",
    "epochs": "train.epochs",
    "patience": "train.patience",
    "l2": "train.l2",
    "l2-grid": "baseline.l2_grid",
    "horizon": "data.horizon",
}


def _dest(key: str) -> str:
    return "cfg__" + key.replace(".", "__").replace("-", "_")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file with flat dotted keys")
    seen = set()
    for key in CONFIG_KEYS:
        parser.add_argument(f"--{key}", dest=_dest(key), default=None, metavar="V")
        seen.add(_dest(key))
    for alias, key in ALIASES.items():
        if _dest(key) in seen:
            parser.add_argument(f"--{alias}", dest=_dest(key), default=None, metavar="V")


def resolve_config(args: argparse.Namespace) -> dict:
    """Merge defaults, config file, CASCADE_SEED, and flags (that order)."""
    cfg = {key: default for key, (_, default) in CONFIG_KEYS.items()}
    path = getattr(args, "config", None)
    if path:
        with open(path, "r", encoding="utf-8") as fh:
            loaded = json.load(fh)
        for key, value in loaded.items():
            if key not in CONFIG_KEYS:
                raise ConfigError(f"unknown config key {key!r}")
            cfg[key] = CONFIG_KEYS[key][0](value)
    env_seed = os.environ.get("CASCADE_SEED")
    if env_seed is not None:
        cfg["seed"] = int(env_seed)
    for key in CONFIG_KEYS:
        raw = getattr(args, _dest(key), None)
        if raw is not None:
            cfg[key] = CONFIG_KEYS[key][0](raw)
    return cfg


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _synthetic_config(cfg: dict) -> SyntheticConfig:
    return SyntheticConfig(
        n_nodes=cfg["data.n_nodes"],
        attachment_degree=cfg["data.attachment_degree"],
        activation_base=cfg["data.activation_base"],
        t_steps=cfg["data.t_steps"],
        horizon_steps=tuple(cfg["data.horizons"]),
        n_cascades=cfg["data.n_cascades"],
        seed=cfg["seed"],
    )


def _walk_config(cfg: dict) -> WalkConfig:
    return WalkConfig(
        n_paths=cfg["walk.K"],
        path_len=cfg["walk.T"],
        smoothing=cfg["walk.alpha"],
        scorer=cfg["walk.scorer"],
        seed=cfg["seed"],
    )


def _model_config(cfg: dict, n_nodes: int, variant: str | None = None) -> ModelConfig:
    variant = variant if variant is not None else cfg["model.variant"]
    return ModelConfig(
        n_nodes=n_nodes,
        hidden_size=cfg["model.H"],
        n_paths=cfg["walk.K"],
        path_len=1 if variant == "bag" else cfg["walk.T"],
        batch_paths=cfg["model.B"],
        n_buckets=cfg["model.buckets"],
        variant=variant,
        mlp_hidden=cfg["model.mlp_hidden"],
        update_rule=cfg["model.gru_update"],
        normalize_attention=cfg["model.normalize_attention"],
        seed=cfg["seed"],
    )


def _train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(
        learning_rate=cfg["train.lr"],
        epochs_max=cfg["train.epochs"],
        patience=cfg["train.patience"],
        grad_clip_norm=cfg["train.grad_clip"],
        l2_coeff=cfg["train.l2"],
        batch_cascades=cfg["train.batch"],
        optimizer=cfg["train.optimizer"],
        resample_walks=cfg["train.resample_walks"],
        eval_walk_samples=cfg["train.eval_walk_samples"],
        seed=cfg["seed"],
    )


def _load_dataset(data_dir: str):
    paths = {name: os.path.join(data_dir, f"{name}.jsonl") for name in ("train", "val", "test")}
    for name, p in paths.items():
        if not os.path.exists(p):
            raise FileNotFoundError(f"missing dataset file {p}")
    graph_path = os.path.join(data_dir, "global.tsv")
    if not os.path.exists(graph_path):
        raise FileNotFoundError(f"missing global graph {graph_path}")
    g = load_global_graph(graph_path)
    return g, {name: read_records(p) for name, p in paths.items()}


def cmd_gen_data(args) -> int:
    cfg = resolve_config(args)
    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    if not os.access(out_dir, os.W_OK):
        raise PermissionError(f"output directory {out_dir} is not writable")
    scfg = _synthetic_config(cfg)
    _log(f"generating global graph ({scfg.n_nodes} nodes) and {scfg.n_cascades} cascades")
    g = generate_global(scfg)
    records = make_dataset(g, scfg)
    splits = dict(zip(("train", "val", "test"), split_dataset(records, tuple(cfg["data.split"]), scfg.seed)))
    sizes = {}
    for name, recs in splits.items():
        sub_seed = int(derive_rng(scfg.seed, "downsample-split", name).integers(0, 2**63 - 1))
        splits[name] = downsample_zero_growth(recs, cfg["data.downsample_fraction"], sub_seed)
        sizes[name] = len(splits[name])
        write_records(splits[name], os.path.join(out_dir, f"{name}.jsonl"))
    save_global_graph(g, os.path.join(out_dir, "global.tsv"))
    meta = {"command": "gen-data", "config": cfg, "sizes": sizes, "n_generated": len(records)}
    _write_json(os.path.join(out_dir, "meta.json"), meta)
    _emit({"out": out_dir, "sizes": sizes, "seed": cfg["seed"]})
    return 0


def cmd_sample_walks(args) -> int:
    cfg = resolve_config(args)
    g, splits = _load_dataset(args.data)
    records = splits[args.split]
    if args.cascade:
        records = [r for r in records if r.cascade_id == args.cascade]
        if not records:
            raise ConfigError(f"cascade {args.cascade!r} not in split {args.split!r}")
    walk_cfg = effective_walk_config(cfg["model.variant"], _walk_config(cfg))
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for record in records:
            cascade = induce_cascade(g, record.adopters, record.roots)
            seed = int(derive_rng(walk_cfg.seed, "walk-seed", record.cascade_id).integers(0, 2**63 - 1))
            ps = sample_paths(cascade, g, dataclasses.replace(walk_cfg, seed=seed), record.cascade_id)
            out.write(json.dumps({"cascade": record.cascade_id, "paths": ps.paths.tolist()}) + "\n")
    finally:
        if args.out:
            out.close()
    return 0


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    g, splits = _load_dataset(args.data)
    os.makedirs(args.out, exist_ok=True)
    horizon = cfg["data.horizon"]
    model_cfg = _model_config(cfg, g.n_nodes)
    walk_cfg = _walk_config(cfg)
    train_cfg = _train_config(cfg)
    initial = None
    if cfg["model.embedding_init"]:
        initial = init_params(model_cfg)
        imported = apply_embedding_import(initial, cfg["model.embedding_init"])
        _log(f"imported {imported} embedding columns")
    _log(
        f"training variant={model_cfg.variant} scorer={walk_cfg.scorer} on "
        f"{len(splits['train'])}/{len(splits['val'])}/{len(splits['test'])} cascades"
    )
    params, report = train(
        model_cfg,
        splits["train"],
        splits["val"],
        g,
        walk_cfg,
        train_cfg,
        test_records=splits["test"],
        horizon=horizon,
        threads=cfg["threads"],
        initial_params=initial,
    )
    save_checkpoint(params, os.path.join(args.out, "ckpt_best.json"), meta={"command": "train", "config": cfg})
    report_doc = {
        "meta": {"command": "train", "config": cfg},
        "report": json.loads(report.to_json()),
    }
    _write_json(os.path.join(args.out, "report.json"), report_doc)
    _emit(
        {
            "test_mse": report.test_mse,
            "best_val_mse": report.best_val_mse,
            "best_epoch": report.best_epoch,
            "epochs_run": len(report.train_history),
        }
    )
    return 0


def cmd_eval(args) -> int:
    cfg = resolve_config(args)
    g, splits = _load_dataset(args.data)
    params = load_checkpoint(args.ckpt)
    walk_cfg = _walk_config(cfg)
    records = splits[args.split]
    value, residuals = evaluate(
        params, records, g, walk_cfg,
        horizon=cfg["data.horizon"],
        threads=cfg["threads"],
        walk_samples=cfg["train.eval_walk_samples"],
    )
    _emit({"mse": value, "n": len(records), "split": args.split})
    return 0


def cmd_features_baseline(args) -> int:
    cfg = resolve_config(args)
    g, splits = _load_dataset(args.data)
    horizon = cfg["data.horizon"]
    identity = cfg["baseline.identity"]
    identity_dim = cfg["baseline.identity_dim"]

    def build(records):
        cascades = [induce_cascade(g, r.adopters, r.roots) for r in records]
        frontiers = [frontier(g, c) for c in cascades]
        X = feature_matrix(cascades, frontiers, g, identity, identity_dim)
        h = horizon if horizon is not None else records[0].primary_horizon()
        y = np.array([r.scaled[h] for r in records])
        return X, y

    _log("extracting features for train/val/test")
    X_train, y_train = build(splits["train"])
    X_val, y_val = build(splits["val"])
    X_test, y_test = build(splits["test"])

    grid_results = {}
    best_l2, best_val = None, None
    for l2 in cfg["baseline.l2_grid"]:
        model = fit_ridge(X_train, y_train, l2)
        val_mse = float(np.mean((predict_ridge(model, X_val) - y_val) ** 2))
        grid_results[repr(l2)] = val_mse
        if best_val is None or val_mse < best_val:
            best_l2, best_val = l2, val_mse
    model = fit_ridge(X_train, y_train, best_l2)
    test_mse = float(np.mean((predict_ridge(model, X_test) - y_test) ** 2))
    if args.features_csv:
        ids = [r.cascade_id for r in splits["train"]]
        identity_cols = X_train.shape[1] - len(FEATURE_NAMES)
        write_features_csv(args.features_csv, ids, X_train, identity_cols)
    _emit({"l2": best_l2, "val_mse": best_val, "test_mse": test_mse, "grid": grid_results})
    return 0


def cmd_ablate(args) -> int:
    cfg = resolve_config(args)
    g, splits = _load_dataset(args.data)
    os.makedirs(args.out, exist_ok=True)
    horizon = cfg["data.horizon"]
    rows = []
    failures = 0
    combos = []
    for variant in cfg["ablate.variants"]:
        scorers = cfg["ablate.scorers"] if variant == "full" else cfg["ablate.scorers"][:1]
        combos.extend((variant, s) for s in scorers)
    for variant, scorer in combos:
        _log(f"ablation: variant={variant} scorer={scorer}")
        try:
            model_cfg = _model_config(cfg, g.n_nodes, variant=variant)
            walk_cfg = WalkConfig(
                n_paths=cfg["walk.K"],
                path_len=cfg["walk.T"],
                smoothing=cfg["walk.alpha"],
                scorer=scorer,
                seed=cfg["seed"],
            )
            _, report = train(
                model_cfg,
                splits["train"],
                splits["val"],
                g,
                walk_cfg,
                _train_config(cfg),
                test_records=splits["test"],
                horizon=horizon,
                threads=cfg["threads"],
            )
            rows.append(
                {
                    "variant": variant,
                    "scorer": scorer,
                    "test_mse": report.test_mse,
                    "best_val_mse": report.best_val_mse,
                    "epochs_run": len(report.train_history),
                }
            )
        except Exception as exc:  # keep the partial table on sub-run failure
            failures += 1
            rows.append({"variant": variant, "scorer": scorer, "error": str(exc)})
            _log(f"ablation run failed: {exc}")
    doc = {"meta": {"command": "ablate", "config": cfg}, "rows": rows}
    _write_json(os.path.join(args.out, "ablation.json"), doc)
    lines = ["| variant | scorer | test MSE |", "|---|---|---|"]
    for row in rows:
        result = f"{row['test_mse']:.4f}" if "test_mse" in row and row.get("test_mse") is not None else "FAILED"
        lines.append(f"| {row['variant']} | {row['scorer']} | {result} |")
    with open(os.path.join(args.out, "ablation.md"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    _emit({"rows": rows, "failures": failures})
    return 4 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pathcast", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("sample-walks", help="dump sampled walk paths as JSON lines")
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="train", choices=("train", "val", "test"))
    p.add_argument("--cascade", default=None)
    p.add_argument("--out", default=None)
    _add_config_flags(p)
    p.set_defaults(func=cmd_sample_walks)

    p = sub.add_parser("train", help="train the growth model")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    _add_config_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("features-baseline", help="fit the linear feature baseline")
    p.add_argument("--data", required=True)
    p.add_argument("--features-csv", default=None)
    _add_config_flags(p)
    p.set_defaults(func=cmd_features_baseline)

    p = sub.add_parser("ablate", help="train every configured variant and tabulate")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericalError as exc:
        _log(f"numerical abort: {exc}")
        return 3
    except (ConfigError, GraphParseError, GenerationError, ValueError, OSError) as exc:
        _log(f"error: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
