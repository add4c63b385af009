import math

import numpy as np
import pytest

from conftest import graph_from_stream
from oracles import random_stream

import repeatmix.sampling as sampling_mod
from repeatmix.encoding import TimeEncoderConfig
from repeatmix.mixer import ParamStore, mixer_forward
from repeatmix.model import (
    EdgeModel,
    ModelConfig,
    edge_representation,
    first_order_repr,
    fusion_softmax,
    fusion_weights,
    pcc,
    pcc_rows,
    predict_link,
    second_order_repr,
)
from repeatmix.sampling import SamplerConfig


def small_model(use_second=True, k=3, nss="repeat", **kw):
    return EdgeModel(
        node_dim=0,
        edge_dim=0,
        sampler_cfg=SamplerConfig(k=k, w=3, r=4, m=3),
        time_cfg=TimeEncoderConfig(dim=8),
        model_cfg=ModelConfig(use_second_order=use_second, nss=nss, seg_dim=4, **kw),
        width=8,
        layers=2,
    )


@pytest.fixture
def stream_graph():
    rng = np.random.default_rng(77)
    src, dst, ts = random_stream(rng, max_nodes=12, max_edges=90)
    return graph_from_stream(src, dst, ts)


class TestPcc:
    def test_perfect_correlation(self):
        assert pcc([1, 2, 3], [2, 4, 6]) == 1.0

    def test_perfect_anticorrelation(self):
        assert pcc([1, 2, 3], [3, 2, 1]) == -1.0

    def test_half(self):
        assert pcc([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5, abs=1e-12)

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            a = rng.normal(size=6)
            b = rng.normal(size=6)
            assert pcc(a, b) == pcc(b, a)

    def test_positive_affine_invariance(self):
        rng = np.random.default_rng(2)
        a = rng.normal(size=8)
        b = rng.normal(size=8)
        base = pcc(a, b)
        for c, d in ((2.0, 5.0), (0.3, -7.0), (1e4, 0.0)):
            assert pcc(a, c * b + d) == pytest.approx(base, abs=1e-10)

    def test_degenerate_zero(self):
        assert pcc([1.0, 1.0, 1.0], [1, 2, 3]) == 0.0
        assert pcc([0.0, 0.0], [0.0, 0.0]) == 0.0

    def test_errors(self):
        with pytest.raises(ValueError):
            pcc([1, 2], [1, 2, 3])
        with pytest.raises(ValueError):
            pcc([1], [1])

    def test_range(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            v = pcc(rng.normal(size=5), rng.normal(size=5))
            assert -1.0 <= v <= 1.0

    def test_rows_matches_scalar(self):
        rng = np.random.default_rng(4)
        a = rng.normal(size=(10, 6))
        b = rng.normal(size=(10, 6))
        b[3] = 7.0  # degenerate row
        rows = pcc_rows(a, b)
        for i in range(10):
            assert rows[i] == pytest.approx(pcc(a[i], b[i]), abs=1e-12)


class TestFusionWeights:
    def test_equal_scores_half(self):
        z = np.zeros(3)
        w_f, w_h, a_f, a_h = fusion_weights(z, z, z, z)
        assert (w_f, w_h) == (0.5, 0.5)
        assert a_f == a_h == 0.0

    def test_one_zero_softmax(self):
        # alpha_f = 1 (identical first-order intervals), alpha_h = 0 (degenerate)
        du1 = np.array([1.0, 2.0, 3.0])
        dv1 = np.array([2.0, 4.0, 6.0])
        const = np.array([5.0, 5.0, 5.0])
        w_f, w_h, a_f, a_h = fusion_weights(du1, dv1, const, const)
        assert a_f == 1.0
        # concatenations are correlated here unless both halves are constant
        if a_h == 0.0:
            assert w_f == pytest.approx(math.e / (math.e + 1), abs=1e-5)

    def test_closed_form_values(self):
        w_f, w_h = fusion_softmax(1.0, 0.0)
        assert w_f == pytest.approx(0.73106, abs=1e-5)
        assert w_h == pytest.approx(0.26894, abs=1e-5)
        assert w_f + w_h == 1.0

    def test_all_zero_intervals(self):
        z = np.zeros(4)
        w_f, w_h, a_f, a_h = fusion_weights(z, z, z, z)
        assert (a_f, a_h) == (0.0, 0.0)
        assert (w_f, w_h) == (0.5, 0.5)


class TestFirstOrder:
    def test_empty_samples_zero_repr(self):
        # isolated nodes: empty samples everywhere; fresh init has zero biases
        g = graph_from_stream(np.array([0]), np.array([1]), np.array([1.0]), n_nodes=4)
        model = small_model(use_second=False)
        params = model.init_params(np.random.default_rng(0))
        z_f, _ = first_order_repr(g, 2, 3, 0.5, params, model)
        assert not z_f.any()

    def test_deterministic(self, stream_graph):
        model = small_model(use_second=False)
        params = model.init_params(np.random.default_rng(1))
        t = float(stream_graph.t.max() + 1)
        a, _ = first_order_repr(stream_graph, 0, 1, t, params, model)
        b, _ = first_order_repr(stream_graph, 0, 1, t, params, model)
        assert a.tobytes() == b.tobytes()

    def test_k1_equals_first_output_row(self, stream_graph):
        model = small_model(use_second=False, k=1)
        params = model.init_params(np.random.default_rng(2))
        t = float(stream_graph.t.max() + 1)
        state = model.forward_batch(
            stream_graph, np.array([0]), np.array([1]), np.array([t]), params
        )
        tape = state["first"][1]
        h, _ = mixer_forward(tape["x"], tape["mask"], params, model.mixer_cfg)
        assert np.allclose(state["z_f"][0], h[0, 0, :], atol=1e-14)


class TestSecondOrder:
    def test_gate_zero(self):
        assert float(1 / (1 + np.exp(0.0)) * np.tanh(0.0)) == 0.0

    def test_gate_scalar_arithmetic(self):
        # sigmoid(0.3) * tanh(-1.2), and saturation toward 1 for large inputs
        sig = 1 / (1 + math.exp(-0.3))
        assert sig * math.tanh(-1.2) == pytest.approx(-0.478887, abs=1e-5)
        big = 1 / (1 + math.exp(-50.0)) * math.tanh(50.0)
        assert big == pytest.approx(1.0, abs=1e-12)

    def test_gate_scalar_example(self, stream_graph):
        model = small_model()
        params = model.init_params(np.random.default_rng(3))
        t = float(stream_graph.t.max() + 1)
        state = model.forward_batch(
            stream_graph, np.array([0]), np.array([1]), np.array([t]), params
        )
        _, _, sig_u, tanh_v = state["second"]
        assert np.allclose(state["z_h"], sig_u * tanh_v, atol=1e-15)

    def test_z_h_in_open_unit_interval(self, stream_graph):
        model = small_model()
        params = model.init_params(np.random.default_rng(4))
        t = float(stream_graph.t.max() + 1)
        n = stream_graph.node_count
        for u in range(min(4, n - 1)):
            state = model.forward_batch(
                stream_graph, np.array([u]), np.array([(u + 1) % n]),
                np.array([t]), params,
            )
            assert np.all(np.abs(state["z_h"]) < 1.0)

    def test_requires_second_order_config(self, stream_graph):
        model = small_model(use_second=False)
        params = model.init_params(np.random.default_rng(5))
        with pytest.raises(ValueError):
            second_order_repr(stream_graph, 0, 1, 99.0, params, model)


class TestEdgeRepresentation:
    def test_convexity_and_identity(self, stream_graph):
        model = small_model()
        params = model.init_params(np.random.default_rng(6))
        t = float(stream_graph.t.max() + 1)
        rep, _ = edge_representation(stream_graph, 0, 1, t, params, model)
        assert rep.w_f + rep.w_h == pytest.approx(1.0, abs=1e-12)
        assert 0.0 < rep.w_f < 1.0
        assert np.allclose(rep.z_e, rep.w_f * rep.z_f + rep.w_h * rep.z_h, atol=1e-12)
        lo = np.minimum(rep.z_f, rep.z_h)
        hi = np.maximum(rep.z_f, rep.z_h)
        assert np.all(rep.z_e >= lo - 1e-12) and np.all(rep.z_e <= hi + 1e-12)

    def test_first_order_mode(self, stream_graph):
        model = small_model(use_second=False)
        params = model.init_params(np.random.default_rng(7))
        t = float(stream_graph.t.max() + 1)
        rep, _ = edge_representation(stream_graph, 0, 1, t, params, model)
        assert rep.w_f == 1.0 and rep.w_h == 0.0
        assert np.array_equal(rep.z_e, rep.z_f)
        assert rep.z_h is None

    def test_weighted_combination_example(self):
        w_f = 0.73106
        z_f = np.array([1.0, 0.0])
        z_h = np.array([0.0, 1.0])
        z_e = w_f * z_f + (1 - w_f) * z_h
        assert np.allclose(z_e, [0.73106, 0.26894], atol=1e-12)

    def test_summation_and_concatenation(self, stream_graph):
        t = float(stream_graph.t.max() + 1)
        msum = small_model(fusion="summation")
        params = msum.init_params(np.random.default_rng(8))
        state = msum.forward_batch(
            stream_graph, np.array([0]), np.array([1]), np.array([t]), params
        )
        assert np.allclose(state["z_e"], state["z_f"] + state["z_h"], atol=1e-14)

        mcat = small_model(fusion="concatenation")
        assert mcat.head_in == 2 * mcat.mixer_cfg.width
        params = mcat.init_params(np.random.default_rng(9))
        state = mcat.forward_batch(
            stream_graph, np.array([0]), np.array([1]), np.array([t]), params
        )
        assert np.array_equal(state["z_e"], np.concatenate([state["z_f"], state["z_h"]], axis=1))


class TestPredictLink:
    def test_zero_weights_give_half(self):
        ps = ParamStore()
        ps.add("head.w1", np.zeros((4, 8)))
        ps.add("head.b1", np.zeros(8))
        ps.add("head.w2", np.zeros((8, 1)))
        ps.add("head.b2", np.zeros(1))
        assert predict_link(np.zeros(4), ps) == 0.5

    def test_saturation(self):
        ps = ParamStore()
        ps.add("head.w1", np.eye(1))
        ps.add("head.b1", np.zeros(1))
        ps.add("head.w2", np.ones((1, 1)))
        ps.add("head.b2", np.array([10.0]))
        assert predict_link(np.zeros(1), ps) > 0.9999

    def test_width_mismatch(self):
        ps = ParamStore()
        ps.add("head.w1", np.zeros((4, 8)))
        ps.add("head.b1", np.zeros(8))
        ps.add("head.w2", np.zeros((8, 1)))
        ps.add("head.b2", np.zeros(1))
        with pytest.raises(ValueError, match="width"):
            predict_link(np.zeros(5), ps)


class TestConfigRules:
    def test_sep_e_needs_first_order(self):
        with pytest.raises(ValueError):
            ModelConfig(use_second_order=True, separate_encoding=True)

    def test_second_order_needs_repeat(self):
        with pytest.raises(ValueError):
            ModelConfig(use_second_order=True, nss="recent")
        ModelConfig(use_second_order=False, nss="recent")  # fine

    def test_unknown_fusion(self):
        with pytest.raises(ValueError):
            ModelConfig(fusion="mean")


def test_no_second_order_sampling_when_disabled(stream_graph, monkeypatch):
    calls = {"n": 0}
    original = sampling_mod.sample_repeat_second

    def counting(*args, **kwargs):
        calls["n"] += 1
        return original(*args, **kwargs)

    monkeypatch.setattr(sampling_mod, "sample_repeat_second", counting)
    t = float(stream_graph.t.max() + 1)

    model_f = small_model(use_second=False)
    params = model_f.init_params(np.random.default_rng(10))
    model_f.forward_batch(stream_graph, np.array([0]), np.array([1]), np.array([t]), params)
    assert calls["n"] == 0

    model_full = small_model()
    params = model_full.init_params(np.random.default_rng(11))
    model_full.forward_batch(stream_graph, np.array([0]), np.array([1]), np.array([t]), params)
    assert calls["n"] == 2  # one per endpoint


def test_separate_encoding_mode(stream_graph):
    model = small_model(use_second=False, separate_encoding=True)
    assert model.mixer_cfg.tokens == model.sampler_cfg.k
    params = model.init_params(np.random.default_rng(12))
    t = float(stream_graph.t.max() + 1)
    state = model.forward_batch(
        stream_graph, np.array([0]), np.array([1]), np.array([t]), params
    )
    kind, tape_u, tape_v = state["first"]
    assert kind == "separate"
    hu, _ = mixer_forward(tape_u["x"], tape_u["mask"], params, model.mixer_cfg)
    hv, _ = mixer_forward(tape_v["x"], tape_v["mask"], params, model.mixer_cfg)
    k = model.sampler_cfg.k
    expected = 0.5 * (hu[:, :k].mean(axis=1) + hv[:, :k].mean(axis=1))
    assert np.allclose(state["z_f"], expected, atol=1e-14)


def test_ablation_flags_change_width(stream_graph):
    base = small_model(use_second=False)
    no_se = small_model(use_second=False, no_segment_embedding=True)
    assert no_se.in_dim == base.in_dim - 4
    no_te = small_model(use_second=False, no_time_encoding=True)
    params = no_te.init_params(np.random.default_rng(13))
    t = float(stream_graph.t.max() + 1)
    state = no_te.forward_batch(
        stream_graph, np.array([0]), np.array([1]), np.array([t]), params
    )
    x = state["first"][1]["x"]
    # time block zeroed: columns [d_n+d_e, d_n+d_e+dim) == [0, 8)
    assert not x[:, :, 0:8].any()
    assert x.any()  # segment block still carries signal
