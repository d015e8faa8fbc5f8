"""Synthetic labeled graph collections and a TU-format writer.

The generator plants class structure on purpose: node labels drive both the
features (noisy one-hot) and the wiring (label homophily), and the graph class
skews the node-label mixture and edge density. That gives pipelines something
learnable at desk scale, and the writer emits the same plain-text TU layout
the parser ingests, so end-to-end runs can start from files on disk.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .graphs import Graph, GraphCollection


def make_demo_collection(num_graphs: int = 24, seed: int = 0,
                         num_node_classes: int = 3, num_graph_classes: int = 2,
                         min_nodes: int = 8, max_nodes: int = 14,
                         noise: float = 0.1) -> GraphCollection:
    rng = np.random.Generator(np.random.PCG64(seed))
    graphs = []
    for gi in range(num_graphs):
        y = gi % num_graph_classes
        n = int(rng.integers(min_nodes, max_nodes + 1))
        # graph class tilts the node-label mixture toward label y mod classes
        mix = np.full(num_node_classes, 1.0)
        mix[y % num_node_classes] += 2.0
        mix /= mix.sum()
        labels = rng.choice(num_node_classes, size=n, p=mix)
        feats = np.zeros((n, num_node_classes))
        feats[np.arange(n), labels] = 1.0
        feats += noise * rng.standard_normal((n, num_node_classes))

        p_in = 0.55 if y % 2 == 0 else 0.35
        p_out = 0.08 if y % 2 == 0 else 0.20
        edges = []
        for i in range(n):
            for j in range(i + 1, n):
                p = p_in if labels[i] == labels[j] else p_out
                if rng.random() < p:
                    edges.append((i, j))
        if not edges:  # keep every graph usable for link sampling
            order = rng.permutation(n)
            edges = [(int(order[i]), int(order[i + 1])) for i in range(n - 1)]
        graphs.append(Graph(num_nodes=n, edges=np.array(edges), features=feats,
                            node_labels=labels, graph_label=y))
    return GraphCollection(graphs=tuple(graphs), feature_dim=num_node_classes,
                           node_class_count=num_node_classes,
                           graph_class_count=num_graph_classes, name="demo")


def write_tu_dataset(collection: GraphCollection, directory, name: str) -> Path:
    """Write a collection as TU-format text files (1-based, edges both ways)."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)

    indicator_lines = []
    edge_lines = []
    label_lines = []
    attr_lines = []
    graph_label_lines = []
    offset = 0
    for gi, g in enumerate(collection.graphs, start=1):
        indicator_lines.extend([str(gi)] * g.num_nodes)
        for u, v in g.edges:
            a, b = offset + int(u) + 1, offset + int(v) + 1
            edge_lines.append(f"{a}, {b}")
            edge_lines.append(f"{b}, {a}")
        if g.node_labels is not None:
            label_lines.extend(str(int(x)) for x in g.node_labels)
        attr_lines.extend(
            ", ".join(repr(float(x)) for x in row) for row in g.features)
        # offset graph labels by +1 to exercise remapping on read-back
        graph_label_lines.append(str(int(g.graph_label) + 1))
        offset += g.num_nodes

    (root / f"{name}_A.txt").write_text("\n".join(edge_lines) + "\n")
    (root / f"{name}_graph_indicator.txt").write_text("\n".join(indicator_lines) + "\n")
    (root / f"{name}_graph_labels.txt").write_text("\n".join(graph_label_lines) + "\n")
    if label_lines:
        (root / f"{name}_node_labels.txt").write_text("\n".join(label_lines) + "\n")
    (root / f"{name}_node_attributes.txt").write_text("\n".join(attr_lines) + "\n")
    return root
