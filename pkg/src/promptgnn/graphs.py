"""Graph containers, TU-format ingestion, hop subgraphs, few-shot sampling.

Graphs are immutable after construction: edges are stored once per undirected
pair in canonical (u < v) lexicographic order, features are float64 matrices,
labels are contiguous ints remapped from whatever the source files used.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import IngestionError, IntegrityError, SamplingError

NODE_LEVEL = "node"
GRAPH_LEVEL = "graph"


def canonical_edges(edges, num_nodes: int) -> np.ndarray:
    """Dedupe/sort an edge iterable into a canonical (m, 2) int64 array."""
    arr = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges,
                     dtype=np.int64).reshape(-1, 2)
    if arr.size == 0:
        return arr.reshape(0, 2)
    lo = np.minimum(arr[:, 0], arr[:, 1])
    hi = np.maximum(arr[:, 0], arr[:, 1])
    arr = np.unique(np.stack([lo, hi], axis=1), axis=0)
    if np.any(arr[:, 0] == arr[:, 1]):
        raise IntegrityError("self-loop in edge list")
    if np.any(arr < 0) or np.any(arr >= num_nodes):
        raise IntegrityError("edge endpoint out of node range")
    return arr


@dataclass(frozen=True, eq=False)
class Graph:
    """An undirected graph with float64 node features and optional labels."""

    num_nodes: int
    edges: np.ndarray                       # (m, 2) canonical
    features: np.ndarray                    # (num_nodes, d)
    node_labels: Optional[np.ndarray] = None
    graph_label: Optional[int] = None

    def __post_init__(self):
        if self.num_nodes < 0:
            raise IntegrityError("negative node count")
        object.__setattr__(self, "edges", canonical_edges(self.edges, self.num_nodes))
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] != self.num_nodes:
            raise IntegrityError(
                f"feature matrix has {feats.shape} rows for {self.num_nodes} nodes")
        object.__setattr__(self, "features", feats)
        if self.node_labels is not None:
            labels = np.asarray(self.node_labels, dtype=np.int64)
            if labels.shape != (self.num_nodes,):
                raise IntegrityError("node label count does not match node count")
            object.__setattr__(self, "node_labels", labels)

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @cached_property
    def neighbors(self) -> tuple[np.ndarray, ...]:
        """Sorted neighbor array per node."""
        adj: list[list[int]] = [[] for _ in range(self.num_nodes)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        return tuple(np.array(sorted(ns), dtype=np.int64) for ns in adj)

    def has_edge(self, u: int, v: int) -> bool:
        a, b = (u, v) if u < v else (v, u)
        rows = self.edges
        i = np.searchsorted(rows[:, 0], a, side="left")
        while i < rows.shape[0] and rows[i, 0] == a:
            if rows[i, 1] == b:
                return True
            i += 1
        return False

    def same_structure(self, other: "Graph") -> bool:
        return (self.num_nodes == other.num_nodes
                and np.array_equal(self.edges, other.edges)
                and np.array_equal(self.features, other.features)
                and ((self.node_labels is None) == (other.node_labels is None))
                and (self.node_labels is None
                     or np.array_equal(self.node_labels, other.node_labels))
                and self.graph_label == other.graph_label)


@dataclass(frozen=True, eq=False)
class GraphCollection:
    graphs: tuple[Graph, ...]
    feature_dim: int
    node_class_count: Optional[int]
    graph_class_count: Optional[int]
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "graphs", tuple(self.graphs))
        for g in self.graphs:
            if g.feature_dim != self.feature_dim:
                raise IntegrityError(
                    f"graph feature width {g.feature_dim} != collection "
                    f"width {self.feature_dim}")

    def __len__(self) -> int:
        return len(self.graphs)

    def same_structure(self, other: "GraphCollection") -> bool:
        return (len(self) == len(other)
                and self.feature_dim == other.feature_dim
                and self.node_class_count == other.node_class_count
                and self.graph_class_count == other.graph_class_count
                and all(a.same_structure(b)
                        for a, b in zip(self.graphs, other.graphs)))


@dataclass(frozen=True, eq=False)
class Subgraph:
    """A node-induced subgraph of a parent graph (node ids are the parent's)."""

    parent: Graph
    nodes: np.ndarray
    edges: np.ndarray

    def __post_init__(self):
        nodes = np.unique(np.asarray(self.nodes, dtype=np.int64))
        if nodes.size == 0:
            raise IntegrityError("subgraph must contain at least one node")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", np.asarray(self.edges, dtype=np.int64).reshape(-1, 2))


def induced_subgraph(g: Graph, nodes) -> Subgraph:
    """Subgraph of ``g`` on the given node set with every edge inside it."""
    node_arr = np.unique(np.asarray(nodes, dtype=np.int64))
    if node_arr.size and (node_arr.min() < 0 or node_arr.max() >= g.num_nodes):
        raise IndexError("subgraph node out of range")
    mask = np.isin(g.edges[:, 0], node_arr) & np.isin(g.edges[:, 1], node_arr)
    return Subgraph(parent=g, nodes=node_arr, edges=g.edges[mask])


def contextual_subgraph(g: Graph, v: int, delta: int = 1) -> Subgraph:
    """All nodes within ``delta`` hops of ``v`` plus the edges among them."""
    if not 0 <= v < g.num_nodes:
        raise IndexError(f"node {v} out of range for graph with {g.num_nodes} nodes")
    if delta < 0:
        raise IndexError("delta must be non-negative")
    visited = {int(v)}
    frontier = [int(v)]
    for _ in range(delta):
        nxt = []
        for u in frontier:
            for w in g.neighbors[u]:
                w = int(w)
                if w not in visited:
                    visited.add(w)
                    nxt.append(w)
        if not nxt:
            break
        frontier = nxt
    return induced_subgraph(g, sorted(visited))


def whole_graph_subgraph(g: Graph) -> Subgraph:
    """The maximum subgraph of a graph: the graph itself."""
    return Subgraph(parent=g, nodes=np.arange(g.num_nodes), edges=g.edges)


# ---------------------------------------------------------------------------
# TU-format ingestion
# ---------------------------------------------------------------------------

def _read_lines(path: Path) -> list[str]:
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise IngestionError(f"missing mandatory file: {path.name}")
    return [ln.strip() for ln in text.splitlines() if ln.strip()]


def _read_int_column(path: Path) -> list[int]:
    out = []
    for i, ln in enumerate(_read_lines(path), start=1):
        try:
            out.append(int(float(ln)))
        except ValueError:
            raise IntegrityError(f"{path.name} line {i}: not an integer: {ln!r}")
    return out


def _remap(labels: Sequence[int]) -> tuple[np.ndarray, int]:
    """Remap arbitrary integer labels to 0..C-1 preserving numeric order."""
    distinct = sorted(set(labels))
    lut = {old: new for new, old in enumerate(distinct)}
    return np.array([lut[x] for x in labels], dtype=np.int64), len(distinct)


def parse_tu_dataset(directory, name: str) -> GraphCollection:
    """Load a TU-format dataset (plain-text, 1-based indices) from disk.

    Mandatory files: ``<NAME>_A.txt``, ``<NAME>_graph_indicator.txt``,
    ``<NAME>_graph_labels.txt``. Node features come from
    ``<NAME>_node_attributes.txt`` when present, else a one-hot of
    ``<NAME>_node_labels.txt``, else the constant feature 1.0.
    """
    root = Path(directory)
    indicator = _read_int_column(root / f"{name}_graph_indicator.txt")
    num_nodes_total = len(indicator)
    graph_ids = sorted(set(indicator))
    graph_index = {gid: i for i, gid in enumerate(graph_ids)}
    num_graphs = len(graph_ids)

    graph_labels_raw = _read_int_column(root / f"{name}_graph_labels.txt")
    if len(graph_labels_raw) != num_graphs:
        raise IntegrityError(
            f"{name}_graph_labels.txt line {min(len(graph_labels_raw), num_graphs) + 1}: "
            f"{len(graph_labels_raw)} labels for {num_graphs} graphs")
    graph_labels, graph_class_count = _remap(graph_labels_raw)

    # edges, converted to 0-based
    edge_lines = _read_lines(root / f"{name}_A.txt")
    edges_by_graph: list[list[tuple[int, int]]] = [[] for _ in range(num_graphs)]
    node_of = np.array(indicator, dtype=np.int64)
    for i, ln in enumerate(edge_lines, start=1):
        parts = ln.replace(",", " ").split()
        if len(parts) != 2:
            raise IntegrityError(f"{name}_A.txt line {i}: expected two indices, got {ln!r}")
        u, v = int(parts[0]) - 1, int(parts[1]) - 1
        if not (0 <= u < num_nodes_total and 0 <= v < num_nodes_total):
            raise IntegrityError(f"{name}_A.txt line {i}: node index out of range")
        if node_of[u] != node_of[v]:
            raise IntegrityError(f"{name}_A.txt line {i}: edge crosses graphs")
        if u == v:
            raise IntegrityError(f"{name}_A.txt line {i}: self-loop")
        edges_by_graph[graph_index[int(node_of[u])]].append((u, v))

    # optional node labels
    node_labels = None
    node_class_count = None
    labels_path = root / f"{name}_node_labels.txt"
    if labels_path.exists():
        raw = _read_int_column(labels_path)
        if len(raw) != num_nodes_total:
            raise IntegrityError(
                f"{name}_node_labels.txt line {min(len(raw), num_nodes_total) + 1}: "
                f"{len(raw)} labels for {num_nodes_total} nodes")
        node_labels, node_class_count = _remap(raw)

    # features: attributes > one-hot labels > constant 1.0
    attr_path = root / f"{name}_node_attributes.txt"
    if attr_path.exists():
        rows = []
        width = None
        for i, ln in enumerate(_read_lines(attr_path), start=1):
            vals = [float(x) for x in ln.replace(",", " ").split()]
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise IntegrityError(
                    f"{name}_node_attributes.txt line {i}: expected {width} values, "
                    f"got {len(vals)}")
            rows.append(vals)
        if len(rows) != num_nodes_total:
            raise IntegrityError(
                f"{name}_node_attributes.txt line {min(len(rows), num_nodes_total) + 1}: "
                f"{len(rows)} rows for {num_nodes_total} nodes")
        features = np.array(rows, dtype=np.float64)
    elif node_labels is not None:
        features = np.zeros((num_nodes_total, node_class_count))
        features[np.arange(num_nodes_total), node_labels] = 1.0
    else:
        features = np.ones((num_nodes_total, 1))

    # split nodes per graph, preserving global order
    graphs = []
    for pos, gid in enumerate(graph_ids):
        members = np.flatnonzero(node_of == gid)
        local = {int(gn): i for i, gn in enumerate(members)}
        local_edges = [(local[u], local[v]) for u, v in edges_by_graph[pos]]
        graphs.append(Graph(
            num_nodes=members.size,
            edges=np.array(local_edges, dtype=np.int64).reshape(-1, 2),
            features=features[members],
            node_labels=None if node_labels is None else node_labels[members],
            graph_label=int(graph_labels[pos]),
        ))

    return GraphCollection(
        graphs=tuple(graphs),
        feature_dim=features.shape[1],
        node_class_count=node_class_count,
        graph_class_count=graph_class_count,
        name=name,
    )


# ---------------------------------------------------------------------------
# few-shot task sampling
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FewShotTask:
    """A k-shot episode: exactly k support pairs per class plus queries.

    Node-level instance ids are ``(graph_index, node_index)`` tuples; graph
    level instances are graph indices into the collection.
    """

    level: str
    classes: tuple[int, ...]
    k: int
    support: tuple[tuple[object, int], ...]
    query: tuple[tuple[object, int], ...]

    def __post_init__(self):
        if self.level not in (NODE_LEVEL, GRAPH_LEVEL):
            raise SamplingError(f"unknown task level {self.level!r}")
        per_class = {c: 0 for c in self.classes}
        for _, y in self.support:
            per_class[y] += 1
        if any(n != self.k for n in per_class.values()):
            raise SamplingError(f"support is not exactly {self.k}-shot: {per_class}")
        support_ids = {x for x, _ in self.support}
        if support_ids & {x for x, _ in self.query}:
            raise SamplingError("support and query overlap")


def _labeled_instances(c: GraphCollection, level: str) -> list[tuple[object, int]]:
    if level == NODE_LEVEL:
        out = []
        for gi, g in enumerate(c.graphs):
            if g.node_labels is None:
                continue
            for v in range(g.num_nodes):
                out.append(((gi, v), int(g.node_labels[v])))
        return out
    if level == GRAPH_LEVEL:
        return [(gi, int(g.graph_label)) for gi, g in enumerate(c.graphs)
                if g.graph_label is not None]
    raise SamplingError(f"unknown task level {level!r}")


def sample_kshot_task(c: GraphCollection, level: str, k: int,
                      query_per_class: int = 10, rng_seed: int = 0) -> FewShotTask:
    """Sample a balanced k-shot task, uniformly without replacement per class.

    Queries are capped by per-class availability; a class must have at least
    k + 1 labeled instances (k support plus one query candidate).
    """
    if k < 1:
        raise SamplingError("k must be >= 1")
    if query_per_class < 1:
        raise SamplingError("query_per_class must be >= 1")
    instances = _labeled_instances(c, level)
    by_class: dict[int, list] = {}
    for x, y in instances:
        by_class.setdefault(y, []).append(x)
    classes = tuple(sorted(by_class))
    if not classes:
        raise SamplingError(f"no labeled instances at {level} level")

    rng = np.random.Generator(np.random.PCG64(rng_seed))
    support: list[tuple[object, int]] = []
    query: list[tuple[object, int]] = []
    for cls in classes:
        pool = by_class[cls]
        if len(pool) < k + 1:
            raise SamplingError(
                f"class {cls} has {len(pool)} instances at {level} level; "
                f"need at least {k + 1}")
        order = rng.permutation(len(pool))
        picks = [pool[i] for i in order]
        support.extend((x, cls) for x in picks[:k])
        query.extend((x, cls) for x in picks[k:k + query_per_class])
    return FewShotTask(level=level, classes=classes, k=k,
                       support=tuple(support), query=tuple(query))
