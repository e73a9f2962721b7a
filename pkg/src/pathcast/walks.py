"""Random-walk path sampling over cascade graphs.

A cascade is represented by ``n_paths`` node sequences of length
``path_len``. Each sequence starts at a node drawn from the jump
distribution (or cycles through the roots), then follows the transition
distribution over out-neighbors; walks that hit a dead end are padded with
the PAD sentinel (-1). Transition and jump probabilities are proportional
to a pluggable score plus a smoothing pseudo-count.
"""

import dataclasses

import numpy as np

from .errors import ConfigError
from .graphs import CascadeGraph, GlobalGraph
from .rng import derive_rng

__all__ = ["PAD", "SCORERS", "WalkConfig", "PathSet", "transition_probs", "jump_probs", "sample_paths"]

PAD = -1

# edge: weight of the traversed edge; deg: out-degree inside the cascade;
# DEG: out-degree in the global graph.
SCORERS = ("edge", "deg", "DEG")


@dataclasses.dataclass(frozen=True)
class WalkConfig:
    n_paths: int = 200
    path_len: int = 10
    smoothing: float = 0.01
    scorer: str = "deg"
    start_mode: str = "jump"  # "jump" | "roots" | "nodes" (degenerate bag-of-nodes cycling)
    seed: int = 0

    def __post_init__(self):
        if self.n_paths < 1 or self.path_len < 1:
            raise ValueError("n_paths and path_len must be at least 1")
        if self.smoothing < 0:
            raise ValueError("smoothing must be non-negative")
        if self.scorer not in SCORERS:
            raise ValueError(f"scorer must be one of {SCORERS}, got {self.scorer!r}")
        if self.start_mode not in ("jump", "roots", "nodes"):
            raise ValueError(f"unknown start_mode {self.start_mode!r}")


@dataclasses.dataclass
class PathSet:
    """n_paths x path_len integer array of node ids, PAD-filled suffixes."""

    paths: np.ndarray
    cascade_id: str = ""

    @property
    def n_paths(self) -> int:
        return self.paths.shape[0]

    @property
    def path_len(self) -> int:
        return self.paths.shape[1]


def _normalize(scores: np.ndarray, smoothing: float, context: str) -> np.ndarray:
    shifted = scores + smoothing
    total = shifted.sum()
    if total <= 0:
        raise ZeroDivisionError(
            f"{context}: all scores are zero and smoothing is zero; distribution undefined"
        )
    return shifted / total


def transition_probs(
    c: CascadeGraph,
    g: GlobalGraph,
    v: int,
    scorer: str = "deg",
    smoothing: float = 0.01,
) -> tuple[np.ndarray, np.ndarray]:
    """Distribution over the out-neighbors of ``v`` inside the cascade.

    Returns (neighbor ids, probabilities), both ordered by neighbor id.
    Scores: "edge" uses the traversed edge weight, "deg" the neighbor's
    out-degree in the cascade, "DEG" its out-degree in the global graph.
    """
    edges = c.out_edges(v)
    if not edges:
        raise ValueError(f"node {v} has no out-neighbors in the cascade")
    ids = np.array([u for u, _ in edges], dtype=np.int64)
    if scorer == "edge":
        scores = np.array([w for _, w in edges], dtype=np.float64)
    elif scorer == "deg":
        scores = np.array([c.out_degree(u) for u, _ in edges], dtype=np.float64)
    elif scorer == "DEG":
        scores = np.array([g.out_degree(u) for u, _ in edges], dtype=np.float64)
    else:
        raise ValueError(f"unknown scorer {scorer!r}")
    return ids, _normalize(scores, smoothing, f"transition from {v}")


def jump_probs(
    c: CascadeGraph,
    g: GlobalGraph,
    scorer: str = "deg",
    smoothing: float = 0.01,
) -> tuple[np.ndarray, np.ndarray]:
    """Distribution over all cascade nodes used to start (or restart) walks.

    The "edge" variant scores a node by the weight sum of its outgoing
    cascade edges; "deg" and "DEG" are as in transition_probs.
    """
    ids = np.array(c.node_list, dtype=np.int64)
    if scorer == "edge":
        scores = np.array(
            [sum(w for _, w in c.out_edges(v)) for v in c.node_list], dtype=np.float64
        )
    elif scorer == "deg":
        scores = np.array([c.out_degree(v) for v in c.node_list], dtype=np.float64)
    elif scorer == "DEG":
        scores = np.array([g.out_degree(v) for v in c.node_list], dtype=np.float64)
    else:
        raise ValueError(f"unknown scorer {scorer!r}")
    return ids, _normalize(scores, smoothing, "jump")


class _TransitionTable:
    """Cumulative transition distributions, built lazily per visited node."""

    def __init__(self, c: CascadeGraph, g: GlobalGraph, scorer: str, smoothing: float):
        self._c = c
        self._g = g
        self._scorer = scorer
        self._smoothing = smoothing
        self._cum: dict[int, tuple[np.ndarray, np.ndarray] | None] = {}

    def step(self, v: int, rng) -> int | None:
        entry = self._cum.get(v, False)
        if entry is False:
            if self._c.out_degree(v) == 0:
                entry = None
            else:
                ids, probs = transition_probs(self._c, self._g, v, self._scorer, self._smoothing)
                entry = (ids, np.cumsum(probs))
            self._cum[v] = entry
        if entry is None:
            return None
        ids, cum = entry
        return int(ids[int(np.searchsorted(cum, rng.random(), side="right").clip(0, len(ids) - 1))])


def sample_paths(c: CascadeGraph, g: GlobalGraph, cfg: WalkConfig, cascade_id: str = "") -> PathSet:
    """Sample ``n_paths`` sequences of length ``path_len`` from the cascade.

    Start nodes come from the jump distribution ("jump" mode), from the roots
    cycled in a freshly shuffled order per cycle ("roots" mode), or from all
    cascade nodes cycled the same way ("nodes" mode, the bag-of-nodes
    degenerate form). A walk stops early at a node without out-neighbors and
    is PAD-filled to full length. Deterministic for a given config and cascade.
    """
    if cfg.start_mode == "roots" and not c.roots:
        raise ConfigError("roots start mode requires a cascade with roots")
    rng = derive_rng(cfg.seed, "walks", c.n_nodes, c.n_edges)
    paths = np.full((cfg.n_paths, cfg.path_len), PAD, dtype=np.int64)
    table = _TransitionTable(c, g, cfg.scorer, cfg.smoothing)

    if cfg.start_mode == "jump":
        ids, probs = jump_probs(c, g, cfg.scorer, cfg.smoothing)
        cum = np.cumsum(probs)
        def next_start() -> int:
            return int(ids[int(np.searchsorted(cum, rng.random(), side="right").clip(0, len(ids) - 1))])
    else:
        pool = list(c.roots) if cfg.start_mode == "roots" else list(c.node_list)
        cycle: list[int] = []
        def next_start() -> int:
            if not cycle:
                order = rng.permutation(len(pool))
                cycle.extend(pool[int(i)] for i in order)
            return cycle.pop()

    for k in range(cfg.n_paths):
        v = next_start()
        paths[k, 0] = v
        for i in range(1, cfg.path_len):
            nxt = table.step(v, rng)
            if nxt is None:
                break
            paths[k, i] = nxt
            v = nxt
    return PathSet(paths=paths, cascade_id=cascade_id)
