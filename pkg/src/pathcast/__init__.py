"""pathcast: predicts information-cascade growth from random-walk path
representations of cascade graphs, with a feature-based linear baseline and
a synthetic cascade generator for reproducible experiments."""

from .estimators import CascadeGrowthRegressor, RidgeGrowthRegressor, StructuralFeatures
from .graphs import (
    CascadeGraph,
    FrontierGraph,
    GlobalGraph,
    degree,
    frontier,
    induce_cascade,
    load_global_graph,
)
from .model import ModelConfig, ModelParams, init_params, load_checkpoint, predict_cascade, save_checkpoint
from .synth import (
    CascadeRecord,
    SyntheticConfig,
    downsample_zero_growth,
    generate_global,
    make_dataset,
    scale_label,
    simulate_ic,
    split_dataset,
)
from .training import TrainConfig, TrainReport, error_analysis, evaluate, mse, train
from .walks import PAD, PathSet, WalkConfig, jump_probs, sample_paths, transition_probs

__version__ = "0.1.0"

__all__ = [
    "CascadeGrowthRegressor",
    "RidgeGrowthRegressor",
    "StructuralFeatures",
    "GlobalGraph",
    "CascadeGraph",
    "FrontierGraph",
    "load_global_graph",
    "induce_cascade",
    "frontier",
    "degree",
    "SyntheticConfig",
    "CascadeRecord",
    "generate_global",
    "simulate_ic",
    "make_dataset",
    "scale_label",
    "downsample_zero_growth",
    "split_dataset",
    "PAD",
    "WalkConfig",
    "PathSet",
    "transition_probs",
    "jump_probs",
    "sample_paths",
    "ModelConfig",
    "ModelParams",
    "init_params",
    "predict_cascade",
    "save_checkpoint",
    "load_checkpoint",
    "TrainConfig",
    "TrainReport",
    "train",
    "evaluate",
    "mse",
    "error_analysis",
    "__version__",
]
