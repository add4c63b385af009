"""End-to-end gradient checks: BCE loss through head, fusion, gate, branches."""

import numpy as np
import pytest

from conftest import graph_from_stream
from oracles import finite_difference_grads, max_relative_error

from repeatmix.encoding import TimeEncoderConfig
from repeatmix.harness import bce_from_logits
from repeatmix.model import EdgeModel, ModelConfig
from repeatmix.sampling import SamplerConfig


def repeat_rich_graph(seed=0, n_nodes=8, n_edges=60):
    """Dense repeat structure so both samplers produce real (non-fallback) rows."""
    rng = np.random.default_rng(seed)
    pairs = [(0, 1), (1, 2), (0, 2), (2, 3), (1, 3), (3, 4)]
    src = np.empty(n_edges, dtype=np.int64)
    dst = np.empty(n_edges, dtype=np.int64)
    for i in range(n_edges):
        s, d = pairs[int(rng.integers(len(pairs)))]
        if rng.random() < 0.5:
            s, d = d, s
        src[i], dst[i] = s, d
    ts = np.sort(rng.uniform(0, 100, size=n_edges))
    return graph_from_stream(src, dst, ts, node_dim=2, edge_dim=2, rng=rng,
                             n_nodes=n_nodes)


def build(use_second=True, fusion="adaptive", separate=False, k=3):
    return EdgeModel(
        node_dim=2,
        edge_dim=2,
        sampler_cfg=SamplerConfig(k=k, w=3, r=4, m=3),
        time_cfg=TimeEncoderConfig(dim=8),
        model_cfg=ModelConfig(
            use_second_order=use_second,
            fusion=fusion,
            seg_dim=4,
            separate_encoding=separate,
        ),
        width=8,
        layers=2,
    )


def batch_queries(g):
    t_end = float(g.t.max())
    src = np.array([0, 1, 2, 3])
    dst = np.array([1, 2, 4, 0])
    ts = np.array([t_end + 1.0, t_end + 2.0, t_end + 1.5, t_end + 3.0])
    targets = np.array([1.0, 0.0, 1.0, 0.0])
    return src, dst, ts, targets


def check_model(model, seed=0, tol=1e-4):
    g = repeat_rich_graph(seed)
    params = model.init_params(np.random.default_rng(seed + 100))
    src, dst, ts, targets = batch_queries(g)
    samples = model.sample_queries(g, src, dst, ts)

    def loss():
        state = model.forward_batch(g, src, dst, ts, params, samples=samples)
        return bce_from_logits(state["logits"], targets)[0]

    state = model.forward_batch(g, src, dst, ts, params, samples=samples)
    _, dlogits = bce_from_logits(state["logits"], targets)
    params.zero_grads()
    model.backward_batch(state, dlogits, params)
    numeric = finite_difference_grads(loss, params, h=1e-5)
    worst = {}
    for name, p in params.items():
        worst[name] = max_relative_error(p.grad, numeric[name])
    failed = {n: e for n, e in worst.items() if e >= tol}
    assert not failed, f"gradient mismatches: {failed}"
    return worst


def test_full_model_adaptive_fusion():
    errors = check_model(build(use_second=True, fusion="adaptive"))
    assert max(errors.values()) < 1e-4


def test_first_order_only():
    check_model(build(use_second=False))


def test_summation_fusion():
    check_model(build(use_second=True, fusion="summation"))


def test_concatenation_fusion():
    check_model(build(use_second=True, fusion="concatenation"))


def test_separate_encoding():
    check_model(build(use_second=False, separate=True))


def test_segment_embeddings_receive_gradient():
    model = build(use_second=True)
    g = repeat_rich_graph(3)
    params = model.init_params(np.random.default_rng(4))
    src, dst, ts, targets = batch_queries(g)
    state = model.forward_batch(g, src, dst, ts, params)
    _, dlogits = bce_from_logits(state["logits"], targets)
    params.zero_grads()
    model.backward_batch(state, dlogits, params)
    assert params["seg.a"].grad.any()
    assert params["seg.b"].grad.any()
