import numpy as np
import pytest

from repeatmix.tgraph import TemporalGraph


def graph_from_stream(src, dst, ts, node_dim=0, edge_dim=0, labels=None, rng=None,
                      n_nodes=None):
    if n_nodes is None:
        n_nodes = int(max(src.max(), dst.max())) + 1 if len(src) else 1
    if labels is None:
        labels = np.zeros(len(src))
    node_features = np.zeros((n_nodes, node_dim))
    edge_features = np.zeros((len(src), edge_dim))
    if rng is not None:
        if node_dim:
            node_features = rng.normal(size=(n_nodes, node_dim))
        if edge_dim:
            edge_features = rng.normal(size=(len(src), edge_dim))
    return TemporalGraph(
        np.asarray(src, dtype=np.int64),
        np.asarray(dst, dtype=np.int64),
        np.asarray(ts, dtype=np.float64),
        labels,
        n_nodes,
        node_features,
        edge_features,
    )


@pytest.fixture
def toy_graph():
    # node 0 interacts with 1, 2, 3, 1, 4 at t = 1..5
    src = np.array([0, 0, 0, 0, 0])
    dst = np.array([1, 2, 3, 1, 4])
    ts = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
    return graph_from_stream(src, dst, ts)


def interactions_of(g):
    return [
        (int(g.src[i]), int(g.dst[i]), float(g.t[i]), i)
        for i in range(g.interaction_count)
    ]
