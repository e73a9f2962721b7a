"""Weighted directed graph storage: the global network, induced cascade
subgraphs, and frontier graphs.

Node ids are dense non-negative integers below ``n_nodes``. Graphs are
immutable once built and safe to read concurrently.
"""

import io
import os

from .errors import GraphParseError

__all__ = [
    "GlobalGraph",
    "CascadeGraph",
    "FrontierGraph",
    "load_global_graph",
    "save_global_graph",
    "load_node_names",
    "induce_cascade",
    "frontier",
    "degree",
]


class GlobalGraph:
    """The static weighted directed social network.

    Adjacency is stored per source node as (dst, weight) pairs in insertion
    order, plus a reverse index of in-neighbors for frontier queries.
    """

    def __init__(self, n_nodes: int):
        if n_nodes <= 0:
            raise ValueError("graph needs at least one node")
        self.n_nodes = n_nodes
        self._out: list[list[tuple[int, float]]] = [[] for _ in range(n_nodes)]
        self._in: list[list[int]] = [[] for _ in range(n_nodes)]
        self.n_edges = 0

    def _add_edge(self, src: int, dst: int, weight: float) -> None:
        if not (0 <= src < self.n_nodes and 0 <= dst < self.n_nodes):
            raise ValueError(f"edge ({src},{dst}) outside [0,{self.n_nodes})")
        if src == dst:
            raise ValueError(f"self-loop at node {src}")
        if weight <= 0:
            raise ValueError(f"edge ({src},{dst}) has non-positive weight {weight}")
        self._out[src].append((dst, float(weight)))
        self._in[dst].append(src)
        self.n_edges += 1

    @classmethod
    def from_edges(cls, n_nodes: int, edges) -> "GlobalGraph":
        """Build a graph from (src, dst, weight) triples; duplicates are an error."""
        g = cls(n_nodes)
        seen: list[set[int]] = [set() for _ in range(n_nodes)]
        for src, dst, weight in edges:
            if dst in seen[src]:
                raise ValueError(f"duplicate edge ({src},{dst})")
            seen[src].add(dst)
            g._add_edge(src, dst, weight)
        return g

    def out_edges(self, v: int) -> list[tuple[int, float]]:
        self._check_node(v)
        return self._out[v]

    def in_neighbors(self, v: int) -> list[int]:
        self._check_node(v)
        return self._in[v]

    def out_degree(self, v: int) -> int:
        self._check_node(v)
        return len(self._out[v])

    def in_degree(self, v: int) -> int:
        self._check_node(v)
        return len(self._in[v])

    def _check_node(self, v: int) -> None:
        if not (0 <= v < self.n_nodes):
            raise ValueError(f"node {v} not in graph of {self.n_nodes} nodes")

    def edges(self):
        """Iterate all (src, dst, weight) triples."""
        for src, adj in enumerate(self._out):
            for dst, w in adj:
                yield src, dst, w


class CascadeGraph:
    """Adopter subgraph of a cascade: the global edges among its adopters.

    ``roots`` are the adopters that originated the cascade. Node iteration
    order is ascending by id so downstream sampling is deterministic.
    """

    def __init__(self, nodes, edges, roots):
        node_set = set(nodes)
        root_tuple = tuple(sorted(set(roots)))
        if not node_set:
            raise ValueError("cascade must contain at least one node")
        if not root_tuple or not set(root_tuple) <= node_set:
            raise ValueError("roots must be a non-empty subset of cascade nodes")
        self.nodes = frozenset(node_set)
        self.node_list = sorted(node_set)
        self.roots = root_tuple
        self._out: dict[int, list[tuple[int, float]]] = {v: [] for v in self.node_list}
        self._in_degree: dict[int, int] = {v: 0 for v in self.node_list}
        self.n_edges = 0
        for src, dst, w in edges:
            if src not in node_set or dst not in node_set:
                raise ValueError(f"edge ({src},{dst}) not within cascade nodes")
            self._out[src].append((dst, float(w)))
            self._in_degree[dst] += 1
            self.n_edges += 1
        for adj in self._out.values():
            adj.sort(key=lambda e: e[0])

    @property
    def n_nodes(self) -> int:
        return len(self.node_list)

    def out_edges(self, v: int) -> list[tuple[int, float]]:
        self._check_node(v)
        return self._out[v]

    def out_degree(self, v: int) -> int:
        self._check_node(v)
        return len(self._out[v])

    def in_degree(self, v: int) -> int:
        self._check_node(v)
        return self._in_degree[v]

    def _check_node(self, v: int) -> None:
        if v not in self._out:
            raise ValueError(f"node {v} not in cascade")

    def edges(self):
        for src in self.node_list:
            for dst, w in self._out[src]:
                yield src, dst, w


class FrontierGraph:
    """Non-adopter neighbors of a cascade, with the edges induced among them."""

    def __init__(self, nodes, edges):
        self.nodes = frozenset(nodes)
        self.node_list = sorted(self.nodes)
        self.edge_list = list(edges)
        self.n_edges = len(self.edge_list)

    @property
    def n_nodes(self) -> int:
        return len(self.node_list)


def load_global_graph(path: str | os.PathLike) -> GlobalGraph:
    """Parse a TSV edge file (``src<TAB>dst<TAB>weight`` per line) in one pass.

    An optional first line ``# nodes=<N>`` pins the node count; otherwise it
    is ``max id + 1``. Malformed lines and duplicate (src, dst) pairs raise
    GraphParseError naming the offending line.
    """
    pinned_n = None
    triples: list[tuple[int, int, float]] = []
    max_id = -1
    seen: dict[int, set[int]] = {}
    with io.open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                if lineno == 1 and "nodes=" in line:
                    try:
                        pinned_n = int(line.split("nodes=", 1)[1].strip())
                    except ValueError:
                        raise GraphParseError(f"line {lineno}: bad node-count header {line!r}")
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise GraphParseError(f"line {lineno}: expected 3 columns, got {len(parts)}")
            try:
                src, dst = int(parts[0]), int(parts[1])
                weight = float(parts[2])
            except ValueError:
                raise GraphParseError(f"line {lineno}: non-numeric field in {line!r}")
            if src < 0 or dst < 0:
                raise GraphParseError(f"line {lineno}: negative node id")
            if src == dst:
                raise GraphParseError(f"line {lineno}: self-loop at node {src}")
            if weight <= 0:
                raise GraphParseError(f"line {lineno}: weight must be positive, got {weight}")
            if dst in seen.setdefault(src, set()):
                raise GraphParseError(f"line {lineno}: duplicate edge ({src},{dst})")
            seen[src].add(dst)
            triples.append((src, dst, weight))
            max_id = max(max_id, src, dst)
    n_nodes = pinned_n if pinned_n is not None else max_id + 1
    if n_nodes <= 0:
        raise GraphParseError("file defines no nodes")
    if max_id >= n_nodes:
        raise GraphParseError(f"node id {max_id} exceeds pinned count {n_nodes}")
    g = GlobalGraph(n_nodes)
    for src, dst, weight in triples:
        g._add_edge(src, dst, weight)
    return g


def save_global_graph(g: GlobalGraph, path: str | os.PathLike) -> None:
    """Write the TSV edge format, with a header pinning the node count."""
    with io.open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# nodes={g.n_nodes}\n")
        for src, dst, w in g.edges():
            fh.write(f"{src}\t{dst}\t{w:g}\n")


def load_node_names(path: str | os.PathLike) -> dict[int, str]:
    """Optional ``id<TAB>label`` map attaching external names to node ids."""
    names: dict[int, str] = {}
    with io.open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise GraphParseError(f"line {lineno}: expected id<TAB>label")
            try:
                node = int(parts[0])
            except ValueError:
                raise GraphParseError(f"line {lineno}: non-integer id {parts[0]!r}")
            if node < 0:
                raise GraphParseError(f"line {lineno}: negative node id")
            if node in names:
                raise GraphParseError(f"line {lineno}: duplicate id {node}")
            names[node] = parts[1]
    return names


def induce_cascade(g: GlobalGraph, adopters, roots) -> CascadeGraph:
    """Subgraph on ``adopters``: exactly the global edges with both ends inside."""
    adopter_set = set(adopters)
    if not adopter_set:
        raise ValueError("adopters must be non-empty")
    root_set = set(roots)
    if not root_set or not root_set <= adopter_set:
        raise ValueError("roots must be a non-empty subset of adopters")
    for v in adopter_set:
        if not (0 <= v < g.n_nodes):
            raise ValueError(f"adopter {v} not in global graph")
    edges = []
    for v in sorted(adopter_set):
        for u, w in g.out_edges(v):
            if u in adopter_set:
                edges.append((v, u, w))
    return CascadeGraph(adopter_set, edges, root_set)


def frontier(g: GlobalGraph, c: CascadeGraph) -> FrontierGraph:
    """Neighbors (in either direction) of cascade nodes that are not adopters,
    with the global edges induced among those neighbors."""
    neighbor_set: set[int] = set()
    for v in c.node_list:
        neighbor_set.update(u for u, _ in g.out_edges(v))
        neighbor_set.update(g.in_neighbors(v))
    neighbor_set -= c.nodes
    edges = []
    for v in sorted(neighbor_set):
        for u, w in g.out_edges(v):
            if u in neighbor_set:
                edges.append((v, u, w))
    return FrontierGraph(neighbor_set, edges)


def degree(graph, v: int, direction: str = "out") -> int:
    """Number of edges incident to ``v`` in the given direction."""
    if direction == "out":
        return graph.out_degree(v)
    if direction == "in":
        return graph.in_degree(v)
    raise ValueError(f"direction must be 'out' or 'in', got {direction!r}")
