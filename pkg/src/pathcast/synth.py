"""Synthetic networks and labeled cascade datasets.

A preferential-attachment global graph hosts independent-cascade
simulations. Each record captures the adopters observed after ``t_steps``
rounds and, for every horizon, how many more nodes adopt in the following
rounds. Labels are scaled to log2(growth + 1).
"""

import dataclasses
import json
import math
import os

from .errors import GenerationError
from .graphs import GlobalGraph
from .rng import derive_rng

__all__ = [
    "SyntheticConfig",
    "CascadeRecord",
    "generate_global",
    "simulate_ic",
    "make_dataset",
    "scale_label",
    "downsample_zero_growth",
    "split_dataset",
    "write_records",
    "read_records",
]


@dataclasses.dataclass(frozen=True)
class SyntheticConfig:
    n_nodes: int = 2000
    attachment_degree: int = 3
    activation_base: float = 0.15
    t_steps: int = 2
    horizon_steps: tuple[int, ...] = (2,)
    n_cascades: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.n_nodes < self.attachment_degree + 1:
            raise ValueError("n_nodes must exceed attachment_degree")
        if not (0.0 < self.activation_base < 1.0):
            raise ValueError("activation_base must lie in (0, 1)")
        if self.t_steps < 1:
            raise ValueError("t_steps must be at least 1")
        if not self.horizon_steps or any(h < 1 for h in self.horizon_steps):
            raise ValueError("horizon_steps must all be at least 1")
        object.__setattr__(self, "horizon_steps", tuple(self.horizon_steps))


@dataclasses.dataclass
class CascadeRecord:
    """One labeled training example.

    ``adopters`` is ordered by adoption, with the roots as its prefix.
    ``growth`` maps horizon -> raw adopter increment, ``scaled`` maps
    horizon -> log2(increment + 1).
    """

    cascade_id: str
    roots: list[int]
    adopters: list[int]
    growth: dict[int, int]
    scaled: dict[int, float]

    def primary_horizon(self) -> int:
        return next(iter(self.growth))


def scale_label(growth: int) -> float:
    """log2(growth + 1); the regression target."""
    if growth < 0:
        raise ValueError("growth cannot be negative")
    return math.log2(growth + 1)


def generate_global(cfg: SyntheticConfig) -> GlobalGraph:
    """Directed preferential-attachment graph.

    Nodes arrive one at a time; each new node draws ``attachment_degree``
    distinct out-edges to existing nodes with probability proportional to
    in-degree + 1. Edge weights are uniform on {1..5}.
    """
    rng = derive_rng(cfg.seed, "global-graph")
    n, m = cfg.n_nodes, cfg.attachment_degree
    g = GlobalGraph(n)
    in_deg = [0] * n
    for new in range(m, n):
        weights = [in_deg[v] + 1.0 for v in range(new)]
        targets = []
        for _ in range(m):
            total = sum(weights)
            r = rng.random() * total
            acc = 0.0
            pick = new - 1
            for v in range(new):
                acc += weights[v]
                if r < acc:
                    pick = v
                    break
            targets.append(pick)
            weights[pick] = 0.0  # without replacement
        for t in targets:
            g._add_edge(new, t, float(rng.integers(1, 6)))
            in_deg[t] += 1
    return g


def _simulate_rounds(g: GlobalGraph, roots, rounds: int, activation_base: float, rng):
    """Synchronous independent-cascade rounds.

    Each newly adopted node gets one chance to activate each out-neighbor u
    with probability min(1, activation_base * weight). Returns the ordered
    adopter list and the cumulative adopter count after every round
    (index 0 = roots only); counts are padded if diffusion halts early.
    """
    root_list = sorted(set(roots))
    if not root_list:
        raise ValueError("roots must be non-empty")
    adopted = set(root_list)
    order = list(root_list)
    sizes = [len(order)]
    current = root_list
    for _ in range(rounds):
        fresh: list[int] = []
        for v in current:
            for u, w in g.out_edges(v):
                if u in adopted:
                    continue
                if rng.random() < min(1.0, activation_base * w):
                    adopted.add(u)
                    fresh.append(u)
        order.extend(fresh)
        sizes.append(len(order))
        current = fresh
        if not current:
            break
    while len(sizes) < rounds + 1:
        sizes.append(sizes[-1])
    return order, sizes


def simulate_ic(g: GlobalGraph, roots, steps: int, activation_base: float, seed: int) -> list[int]:
    """Return the ordered adopter list after ``steps`` synchronous rounds."""
    rng = derive_rng(seed, "ic")
    order, _ = _simulate_rounds(g, roots, steps, activation_base, rng)
    return order


def make_dataset(g: GlobalGraph, cfg: SyntheticConfig) -> list[CascadeRecord]:
    """Simulate ``n_cascades`` independent cascades and label their growth.

    Each cascade draws 1-2 uniform roots, runs ``t_steps`` rounds to obtain
    the observed adopters, then continues to the largest horizon to measure
    growth. Cascades that never spread (fewer than 2 adopters) are dropped.
    """
    horizons = sorted(cfg.horizon_steps)
    total_rounds = cfg.t_steps + horizons[-1]
    records = []
    for i in range(cfg.n_cascades):
        rng = derive_rng(cfg.seed, "cascade", i)
        n_roots = int(rng.integers(1, 3))
        roots = sorted(int(v) for v in rng.choice(g.n_nodes, size=n_roots, replace=False))
        order, sizes = _simulate_rounds(g, roots, total_rounds, cfg.activation_base, rng)
        size_at_t = sizes[cfg.t_steps]
        if size_at_t < 2:
            continue
        growth = {h: sizes[cfg.t_steps + h] - size_at_t for h in horizons}
        scaled = {h: scale_label(d) for h, d in growth.items()}
        records.append(
            CascadeRecord(
                cascade_id=f"c{i:06d}",
                roots=roots,
                adopters=order[:size_at_t],
                growth=growth,
                scaled=scaled,
            )
        )
    if not records:
        raise GenerationError("zero usable cascades after filtering")
    return records


def downsample_zero_growth(records, fraction: float = 0.5, seed: int = 0, horizon: int | None = None):
    """Drop a fraction of the records with zero growth at ``horizon``.

    Keeps ceil((1 - fraction) * Z) of the Z zero-growth records, chosen at
    random; every record with positive growth is retained. Relative order is
    preserved.
    """
    if not (0.0 <= fraction <= 1.0):
        raise ValueError("fraction must lie in [0, 1]")
    records = list(records)
    if not records:
        return []
    h = horizon if horizon is not None else records[0].primary_horizon()
    zero_idx = [i for i, r in enumerate(records) if r.growth[h] == 0]
    keep_count = math.ceil((1.0 - fraction) * len(zero_idx))
    rng = derive_rng(seed, "downsample")
    kept = set()
    if zero_idx and keep_count:
        chosen = rng.choice(len(zero_idx), size=keep_count, replace=False)
        kept = {zero_idx[int(j)] for j in chosen}
    return [
        r
        for i, r in enumerate(records)
        if r.growth[h] != 0 or i in kept
    ]


def split_dataset(records, ratios=(0.8, 0.1, 0.1), seed: int = 0):
    """Random disjoint train/val/test split with the given ratios."""
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise ValueError("ratios must be three non-negative numbers")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")
    records = list(records)
    n = len(records)
    rng = derive_rng(seed, "split")
    perm = rng.permutation(n)
    b1 = int(math.floor(ratios[0] * n + 1e-9))
    b2 = b1 + int(math.floor(ratios[1] * n + 1e-9))
    train = [records[int(i)] for i in perm[:b1]]
    val = [records[int(i)] for i in perm[b1:b2]]
    test = [records[int(i)] for i in perm[b2:]]
    return train, val, test


def _record_to_json(r: CascadeRecord) -> dict:
    return {
        "id": r.cascade_id,
        "roots": r.roots,
        "adopters": r.adopters,
        "growth": {str(h): d for h, d in r.growth.items()},
        "y": {str(h): y for h, y in r.scaled.items()},
    }


def _record_from_json(obj: dict) -> CascadeRecord:
    growth = {int(h): int(d) for h, d in obj["growth"].items()}
    scaled = {int(h): float(y) for h, y in obj["y"].items()}
    return CascadeRecord(
        cascade_id=str(obj["id"]),
        roots=[int(v) for v in obj["roots"]],
        adopters=[int(v) for v in obj["adopters"]],
        growth=growth,
        scaled=scaled,
    )


def write_records(records, path: str | os.PathLike) -> None:
    """One JSON object per line, keys: id, roots, adopters, growth, y."""
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(_record_to_json(r), sort_keys=True) + "\n")


def read_records(path: str | os.PathLike) -> list[CascadeRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(_record_from_json(json.loads(line)))
    return records
