import os
from pathlib import Path

import numpy as np
import pytest

from promptgnn.graphs import Graph, GraphCollection

REPO_ROOT = Path(__file__).resolve().parents[1]


def tu_dataset_dir(name: str):
    """Locate a real TU dataset directory, or None when not present.

    Search order: $TU_DATA_DIR/<name>, <repo>/data/<name>. Datasets are not
    bundled; place the extracted TU files there to enable the dataset-bound
    acceptance tests.
    """
    candidates = []
    env = os.environ.get("TU_DATA_DIR")
    if env:
        candidates.append(Path(env) / name)
    candidates.append(REPO_ROOT / "data" / name)
    for c in candidates:
        if (c / f"{name}_A.txt").exists():
            return c
    return None


def require_tu_dataset(name: str) -> Path:
    d = tu_dataset_dir(name)
    if d is None:
        pytest.skip(
            f"{name} TU files not found (set TU_DATA_DIR or place them under "
            f"data/{name}/); criterion runs unchanged once the data is present")
    return d


@pytest.fixture
def triangle_graph():
    return Graph(num_nodes=3, edges=np.array([[0, 1], [1, 2], [0, 2]]),
                 features=np.eye(3))


@pytest.fixture
def path5_graph():
    return Graph(num_nodes=5,
                 edges=np.array([[0, 1], [1, 2], [2, 3], [3, 4]]),
                 features=np.ones((5, 2)))


@pytest.fixture
def two_graph_fixture():
    """Handcrafted 2-graph collection: a triangle and a single edge."""
    g0 = Graph(num_nodes=3, edges=np.array([[0, 1], [1, 2], [0, 2]]),
               features=np.ones((3, 1)), node_labels=np.array([0, 1, 0]),
               graph_label=0)
    g1 = Graph(num_nodes=2, edges=np.array([[0, 1]]),
               features=np.ones((2, 1)), node_labels=np.array([1, 0]),
               graph_label=1)
    return GraphCollection(graphs=(g0, g1), feature_dim=1,
                           node_class_count=2, graph_class_count=2,
                           name="fixture")
