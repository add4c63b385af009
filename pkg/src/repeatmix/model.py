"""Edge representation model: first/second-order branches, fusion, head.

The first-order branch encodes the concatenated (source ; destination)
sequences with the mixer and mean-pools the source block. The second-order
branch runs one mixer pass per endpoint over [own second-order ; counterpart
first-order] and fuses the two pooled vectors with a sigmoid/tanh gate. The
two branch vectors are combined by correlation-weighted adaptive fusion:
softmax over the Pearson correlations of the endpoints' interval sequences.
Fusion weights depend only on timestamps and are constants to the gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import sampling
from .encoding import TimeEncoderConfig, assemble_batch
from .mixer import (
    MixerConfig,
    ParamStore,
    _gelu_with_grad,
    gelu,
    init_params,
    mixer_backward,
    mixer_forward,
)
from .sampling import NeighborSample, SamplerConfig, interval_sequence
from .tgraph import TemporalGraph

FUSIONS = ("adaptive", "summation", "concatenation")
MODEL_NSS = ("repeat", "recent", "uniform", "time_aware")


@dataclass(frozen=True)
class ModelConfig:
    """Model-level switches: branch usage, fusion rule, NSS, ablations."""

    use_second_order: bool = True
    fusion: str = "adaptive"
    nss: str = "repeat"
    seg_dim: int = 32
    no_time_encoding: bool = False
    no_segment_embedding: bool = False
    separate_encoding: bool = False

    def __post_init__(self):
        if self.fusion not in FUSIONS:
            raise ValueError(f"unknown fusion {self.fusion!r}")
        if self.nss not in MODEL_NSS:
            raise ValueError(f"unknown neighbor sampling strategy {self.nss!r}")
        if self.separate_encoding and self.use_second_order:
            raise ValueError("separate encoding is a first-order-only mode")
        if self.use_second_order and self.nss != "repeat":
            raise ValueError("second-order branch requires the repeat-aware strategy")
        if self.seg_dim < 0:
            raise ValueError("seg_dim must be >= 0")


@dataclass
class EdgeRepresentation:
    """Fused edge vector plus its parts and fusion weights."""

    z_e: np.ndarray
    z_f: np.ndarray
    z_h: Optional[np.ndarray]
    w_f: float
    w_h: float


def pcc(t1: np.ndarray, t2: np.ndarray) -> float:
    """Pearson correlation (N-1 covariance over sample stds); 0 when degenerate."""
    t1 = np.asarray(t1, dtype=np.float64)
    t2 = np.asarray(t2, dtype=np.float64)
    if t1.ndim != 1 or t2.ndim != 1 or len(t1) != len(t2):
        raise ValueError("inputs must be equal-length vectors")
    n = len(t1)
    if n < 2:
        raise ValueError("need at least two records")
    a = t1 - t1.mean()
    b = t2 - t2.mean()
    sa = math.sqrt(float(a @ a) / (n - 1))
    sb = math.sqrt(float(b @ b) / (n - 1))
    if sa < 1e-12 or sb < 1e-12:
        return 0.0
    val = (float(a @ b) / (n - 1)) / (sa * sb)
    return min(1.0, max(-1.0, val))


def pcc_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise pcc over (B, N) arrays with the same degenerate rule."""
    n = a.shape[1]
    ac = a - a.mean(axis=1, keepdims=True)
    bc = b - b.mean(axis=1, keepdims=True)
    sa = np.sqrt((ac * ac).sum(axis=1) / (n - 1))
    sb = np.sqrt((bc * bc).sum(axis=1) / (n - 1))
    cov = (ac * bc).sum(axis=1) / (n - 1)
    denom = sa * sb
    ok = (sa >= 1e-12) & (sb >= 1e-12)
    out = np.zeros(len(a), dtype=np.float64)
    out[ok] = cov[ok] / denom[ok]
    return np.clip(out, -1.0, 1.0)


def fusion_softmax(alpha_f: float, alpha_h: float) -> tuple[float, float]:
    """Two-way softmax over the correlation scores: e^a_f / (e^a_f + e^a_h)."""
    w_f = 1.0 / (1.0 + math.exp(alpha_h - alpha_f))
    return w_f, 1.0 - w_f


def fusion_weights(
    du1: np.ndarray, dv1: np.ndarray, du2: np.ndarray, dv2: np.ndarray
) -> tuple[float, float, float, float]:
    """Softmax-normalized correlation scores (w_f, w_h, alpha_f, alpha_h).

    alpha_f correlates the endpoints' first-order interval sequences; alpha_h
    correlates [u first-order | v second-order] against [v first-order |
    u second-order].
    """
    a_f = pcc(du1, dv1)
    a_h = pcc(np.concatenate([du1, dv2]), np.concatenate([dv1, du2]))
    w_f, w_h = fusion_softmax(a_f, a_h)
    return w_f, w_h, a_f, a_h


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class EdgeModel:
    """Configuration bundle plus batched forward/backward over edge queries."""

    def __init__(
        self,
        node_dim: int,
        edge_dim: int,
        sampler_cfg: SamplerConfig,
        time_cfg: TimeEncoderConfig = TimeEncoderConfig(),
        model_cfg: ModelConfig = ModelConfig(),
        width: int = 172,
        layers: int = 2,
        token_ratio: float = 0.4,
        channel_ratio: float = 4.0,
    ):
        self.sampler_cfg = sampler_cfg
        self.time_cfg = time_cfg
        self.model_cfg = model_cfg
        self.seg_dim = 0 if model_cfg.no_segment_embedding else model_cfg.seg_dim
        self.in_dim = node_dim + edge_dim + time_cfg.dim + self.seg_dim
        k = sampler_cfg.k
        tokens = k if model_cfg.separate_encoding else 2 * k
        self.mixer_cfg = MixerConfig(
            tokens=tokens,
            in_dim=self.in_dim,
            width=width,
            layers=layers,
            token_ratio=token_ratio,
            channel_ratio=channel_ratio,
        )
        self.head_in = 2 * width if model_cfg.fusion == "concatenation" else width

    # -- parameters --------------------------------------------------------

    def init_params(self, rng: np.random.Generator) -> ParamStore:
        return init_params(self.mixer_cfg, self.seg_dim, self.head_in, rng)

    def _seg(self, params: ParamStore, name: str) -> Optional[np.ndarray]:
        return params[name].value if self.seg_dim else None

    # -- sampling ----------------------------------------------------------

    def sample_queries(
        self,
        g: TemporalGraph,
        src: np.ndarray,
        dst: np.ndarray,
        ts: np.ndarray,
        rng: Optional[np.random.Generator] = None,
        max_eidx: int = sampling.NO_CAP,
    ) -> dict:
        """Draw the per-query neighbor samples for a batch of (u, v, t)."""
        cfg = self.sampler_cfg
        nss = self.model_cfg.nss
        u1, v1, u2, v2 = [], [], [], []
        for u, v, t in zip(src, dst, ts):
            u, v, t = int(u), int(v), float(t)
            if nss == "repeat":
                u1.append(sampling.sample_repeat_first(g, u, v, t, cfg, max_eidx))
                v1.append(sampling.sample_repeat_first(g, v, u, t, cfg, max_eidx))
                if self.model_cfg.use_second_order:
                    u2.append(sampling.sample_repeat_second(g, u, v, t, cfg, max_eidx))
                    v2.append(sampling.sample_repeat_second(g, v, u, t, cfg, max_eidx))
            else:
                u1.append(sampling.sample_strategy(g, nss, u, v, t, cfg, rng, max_eidx))
                v1.append(sampling.sample_strategy(g, nss, v, u, t, cfg, rng, max_eidx))
        out = {"u1": u1, "v1": v1}
        if u2:
            out["u2"] = u2
            out["v2"] = v2
        return out

    def _intervals(self, samples: list[NeighborSample], ts: np.ndarray) -> np.ndarray:
        k = self.sampler_cfg.k
        return np.stack(
            [interval_sequence(s, float(t), k) for s, t in zip(samples, ts)]
        )

    # -- forward / backward -------------------------------------------------

    def forward_batch(
        self,
        g: TemporalGraph,
        src: np.ndarray,
        dst: np.ndarray,
        ts: np.ndarray,
        params: ParamStore,
        rng: Optional[np.random.Generator] = None,
        with_tape: bool = True,
        samples: Optional[dict] = None,
        max_eidx: int = sampling.NO_CAP,
    ) -> dict:
        """Score a batch of queries; returns logits, probabilities and the tape."""
        cfg = self.model_cfg
        k = self.sampler_cfg.k
        ts = np.asarray(ts, dtype=np.float64)
        if samples is None:
            samples = self.sample_queries(g, src, dst, ts, rng, max_eidx)
        seg_a = self._seg(params, "seg.a")
        seg_b = self._seg(params, "seg.b")

        def build(sample_list, seg_vec):
            return assemble_batch(
                g, sample_list, ts, seg_vec, self.time_cfg, k, cfg.no_time_encoding
            )

        state: dict = {"samples": samples, "k": k, "ts": ts}

        xu, mu = build(samples["u1"], seg_a)
        xv, mv = build(samples["v1"], seg_b)
        if cfg.separate_encoding:
            hu, tape_su = mixer_forward(xu, mu, params, self.mixer_cfg)
            hv, tape_sv = mixer_forward(xv, mv, params, self.mixer_cfg)
            z_f = 0.5 * (hu[:, :k, :].mean(axis=1) + hv[:, :k, :].mean(axis=1))
            state["first"] = ("separate", tape_su, tape_sv)
        else:
            x1 = np.concatenate([xu, xv], axis=1)
            m1 = np.concatenate([mu, mv], axis=1)
            h1, tape1 = mixer_forward(x1, m1, params, self.mixer_cfg)
            z_f = h1[:, :k, :].mean(axis=1)
            state["first"] = ("joint", tape1)

        z_h = None
        if cfg.use_second_order:
            xu2, mu2 = build(samples["u2"], seg_a)
            xv2, mv2 = build(samples["v2"], seg_a)
            xb1, mb1 = build(samples["v1"], seg_b)
            xa1, ma1 = build(samples["u1"], seg_b)
            hu2, tape_u = mixer_forward(
                np.concatenate([xu2, xb1], axis=1),
                np.concatenate([mu2, mb1], axis=1),
                params,
                self.mixer_cfg,
            )
            hv2, tape_v = mixer_forward(
                np.concatenate([xv2, xa1], axis=1),
                np.concatenate([mv2, ma1], axis=1),
                params,
                self.mixer_cfg,
            )
            hu_hat = hu2[:, :k, :].mean(axis=1)
            hv_hat = hv2[:, :k, :].mean(axis=1)
            sig_u = _sigmoid(hu_hat)
            tanh_v = np.tanh(hv_hat)
            z_h = sig_u * tanh_v
            state["second"] = (tape_u, tape_v, sig_u, tanh_v)

            du1 = self._intervals(samples["u1"], ts)
            dv1 = self._intervals(samples["v1"], ts)
            du2 = self._intervals(samples["u2"], ts)
            dv2 = self._intervals(samples["v2"], ts)
            a_f = pcc_rows(du1, dv1)
            a_h = pcc_rows(
                np.concatenate([du1, dv2], axis=1), np.concatenate([dv1, du2], axis=1)
            )
            w_f = 1.0 / (1.0 + np.exp(a_h - a_f))
            w_h = 1.0 - w_f
            state["alpha"] = (a_f, a_h)
        else:
            w_f = np.ones(len(z_f))
            w_h = np.zeros(len(z_f))

        if not cfg.use_second_order:
            z_e = z_f
        elif cfg.fusion == "adaptive":
            z_e = w_f[:, None] * z_f + w_h[:, None] * z_h
        elif cfg.fusion == "summation":
            z_e = z_f + z_h
        else:
            z_e = np.concatenate([z_f, z_h], axis=1)

        pre = z_e @ params["head.w1"].value + params["head.b1"].value
        act = gelu(pre)
        logits = (act @ params["head.w2"].value + params["head.b2"].value)[:, 0]

        state.update(
            z_f=z_f, z_h=z_h, z_e=z_e, w_f=w_f, w_h=w_h,
            head_pre=pre, logits=logits, probs=_sigmoid(logits),
        )
        if not with_tape:
            state.pop("first")
            state.pop("second", None)
            state.pop("head_pre")
        return state

    def backward_batch(self, state: dict, dlogits: np.ndarray, params: ParamStore) -> None:
        """Accumulate parameter gradients from d(loss)/d(logits)."""
        cfg = self.model_cfg
        k = state["k"]
        width = self.mixer_cfg.width

        # head
        pre = state["head_pre"]
        act, dact = _gelu_with_grad(pre)
        dl = dlogits[:, None]
        params["head.w2"].grad += act.T @ dl
        params["head.b2"].grad += dl.sum(axis=0)
        dpre = (dl @ params["head.w2"].value.T) * dact
        params["head.w1"].grad += state["z_e"].T @ dpre
        params["head.b1"].grad += dpre.sum(axis=0)
        dz_e = dpre @ params["head.w1"].value.T

        # fusion (weights are constants to the gradient)
        if not cfg.use_second_order:
            dz_f, dz_h = dz_e, None
        elif cfg.fusion == "adaptive":
            dz_f = state["w_f"][:, None] * dz_e
            dz_h = state["w_h"][:, None] * dz_e
        elif cfg.fusion == "summation":
            dz_f, dz_h = dz_e, dz_e
        else:
            dz_f, dz_h = dz_e[:, :width], dz_e[:, width:]

        if dz_h is not None:
            tape_u, tape_v, sig_u, tanh_v = state["second"]
            dhu = dz_h * tanh_v * sig_u * (1.0 - sig_u)
            dhv = dz_h * sig_u * (1.0 - tanh_v * tanh_v)
            self._pool_backward(tape_u, dhu, params, k)
            self._pool_backward(tape_v, dhv, params, k)

        if state["first"][0] == "separate":
            _, tape_su, tape_sv = state["first"]
            self._pool_backward(tape_su, 0.5 * dz_f, params, k)
            self._pool_backward(tape_sv, 0.5 * dz_f, params, k, seg_half=False)
        else:
            self._pool_backward(state["first"][1], dz_f, params, k)

    def _pool_backward(
        self, tape: dict, dpool: np.ndarray, params: ParamStore, k: int,
        seg_half: bool = True,
    ) -> None:
        """Mean-pool (first k rows) backward, mixer backward, segment grads.

        Inputs rows [0, k) carry segment A and rows [k, 2k) segment B in joint
        passes; a separate-encoding pass holds a single segment (A when
        seg_half is True, else B).
        """
        b, tokens = tape["mask"].shape
        dh = np.zeros((b, tokens, self.mixer_cfg.width), dtype=np.float64)
        dh[:, :k, :] = dpool[:, None, :] / k
        dx = mixer_backward(tape, dh, params)
        if self.seg_dim:
            seg_slice = slice(self.in_dim - self.seg_dim, self.in_dim)
            if tokens == 2 * k:
                params["seg.a"].grad += dx[:, :k, seg_slice].sum(axis=(0, 1))
                params["seg.b"].grad += dx[:, k:, seg_slice].sum(axis=(0, 1))
            else:
                name = "seg.a" if seg_half else "seg.b"
                params[name].grad += dx[:, :, seg_slice].sum(axis=(0, 1))


# -- single-query operations (thin wrappers over the batch path) --------------


def first_order_repr(
    g: TemporalGraph, u: int, v: int, t: float, params: ParamStore, model: EdgeModel
) -> tuple[np.ndarray, dict]:
    """First-order edge vector: encode both sequences jointly, pool u's block."""
    state = model.forward_batch(
        g, np.array([u]), np.array([v]), np.array([t]), params
    )
    return state["z_f"][0], state


def second_order_repr(
    g: TemporalGraph, u: int, v: int, t: float, params: ParamStore, model: EdgeModel
) -> tuple[np.ndarray, dict]:
    """Gated second-order edge vector sigma(Hu) * tanh(Hv)."""
    if not model.model_cfg.use_second_order:
        raise ValueError("model configured without the second-order branch")
    state = model.forward_batch(
        g, np.array([u]), np.array([v]), np.array([t]), params
    )
    return state["z_h"][0], state


def edge_representation(
    g: TemporalGraph, u: int, v: int, t: float, params: ParamStore, model: EdgeModel
) -> tuple[EdgeRepresentation, dict]:
    state = model.forward_batch(
        g, np.array([u]), np.array([v]), np.array([t]), params
    )
    z_h = None if state["z_h"] is None else state["z_h"][0]
    rep = EdgeRepresentation(
        z_e=state["z_e"][0],
        z_f=state["z_f"][0],
        z_h=z_h,
        w_f=float(state["w_f"][0]),
        w_h=float(state["w_h"][0]),
    )
    return rep, state


def predict_link(z_e: np.ndarray, params: ParamStore) -> float:
    """Two-layer perceptron head followed by the logistic function."""
    z = np.asarray(z_e, dtype=np.float64)
    if z.shape != (params["head.w1"].value.shape[0],):
        raise ValueError(
            f"representation width {z.shape} does not match head input "
            f"{params['head.w1'].value.shape[0]}"
        )
    pre = z @ params["head.w1"].value + params["head.b1"].value
    logit = float((gelu(pre) @ params["head.w2"].value + params["head.b2"].value)[0])
    return float(_sigmoid(np.array([logit]))[0])
