"""Dense numerical core: mixer encoder, exact backward pass, Adam.

Everything runs in float64. The encoder stacks L blocks; each block first
mixes along the token axis (an FFN applied to every channel column after a
LayerNorm whose statistics run over tokens), then along the channel axis (an
FFN applied to every token row after a LayerNorm over channels), with residual
connections around both FFNs. Padded rows are re-zeroed after the input
projection and after every sub-block, and the backward pass mirrors each of
those zeroings exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

LN_EPS = 1e-5
_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

try:  # fused single-pass kernels from the compiled extension
    from ._speedups import gelu_cdf_inplace, gelu_vjp_inplace
except ImportError:
    gelu_cdf_inplace = None
    gelu_vjp_inplace = None


@dataclass(frozen=True)
class MixerConfig:
    """Shapes of the encoder: L blocks over a tokens x width grid."""

    tokens: int
    in_dim: int
    width: int = 172
    layers: int = 2
    token_ratio: float = 0.4
    channel_ratio: float = 4.0

    @property
    def token_hidden(self) -> int:
        return max(1, int(round(self.token_ratio * self.width)))

    @property
    def channel_hidden(self) -> int:
        return max(1, int(round(self.channel_ratio * self.width)))


class Parameter:
    """A named tensor with matching gradient and Adam moment buffers."""

    __slots__ = ("value", "grad", "m", "v")

    def __init__(self, value: np.ndarray):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.m = np.zeros_like(self.value)
        self.v = np.zeros_like(self.value)


class ParamStore(dict):
    """Ordered name -> Parameter mapping."""

    def add(self, name: str, value: np.ndarray) -> Parameter:
        if name in self:
            raise ValueError(f"duplicate parameter {name}")
        p = Parameter(value)
        self[name] = p
        return p

    def zero_grads(self) -> None:
        for p in self.values():
            p.grad[...] = 0.0

    def values_snapshot(self) -> dict[str, np.ndarray]:
        return {name: p.value.copy() for name, p in self.items()}

    def load_values(self, snapshot: dict[str, np.ndarray]) -> None:
        if set(snapshot) != set(self):
            raise ValueError("parameter name sets differ")
        for name, val in snapshot.items():
            if self[name].value.shape != val.shape:
                raise ValueError(f"shape mismatch for {name}")
            self[name].value[...] = val


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = math.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(
    cfg: MixerConfig, seg_dim: int, head_in: int, rng: np.random.Generator
) -> ParamStore:
    """Weights ~ uniform(+-sqrt(1/fan_in)), biases zero, LayerNorm scale 1 shift 0."""
    ps = ParamStore()
    t, f, c = cfg.tokens, cfg.in_dim, cfg.width
    th, ch = cfg.token_hidden, cfg.channel_hidden
    ps.add("w_e", _uniform(rng, (f, c), f))
    for i in range(cfg.layers):
        ps.add(f"l{i}.ln_t.g", np.ones(t))
        ps.add(f"l{i}.ln_t.b", np.zeros(t))
        ps.add(f"l{i}.tok.w1", _uniform(rng, (t, th), t))
        ps.add(f"l{i}.tok.b1", np.zeros(th))
        ps.add(f"l{i}.tok.w2", _uniform(rng, (th, t), th))
        ps.add(f"l{i}.tok.b2", np.zeros(t))
        ps.add(f"l{i}.ln_c.g", np.ones(c))
        ps.add(f"l{i}.ln_c.b", np.zeros(c))
        ps.add(f"l{i}.ch.w1", _uniform(rng, (c, ch), c))
        ps.add(f"l{i}.ch.b1", np.zeros(ch))
        ps.add(f"l{i}.ch.w2", _uniform(rng, (ch, c), ch))
        ps.add(f"l{i}.ch.b2", np.zeros(c))
    if seg_dim:
        ps.add("seg.a", _uniform(rng, (seg_dim,), seg_dim))
        ps.add("seg.b", _uniform(rng, (seg_dim,), seg_dim))
    ps.add("head.w1", _uniform(rng, (head_in, c), head_in))
    ps.add("head.b1", np.zeros(c))
    ps.add("head.w2", _uniform(rng, (c, 1), c))
    ps.add("head.b2", np.zeros(1))
    return ps


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact x * Phi(x) with the erf-based normal CDF (not the tanh form)."""
    return x * (0.5 * (1.0 + erf(x * _INV_SQRT2)))


def _gelu_with_grad(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    phi_cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return x * phi_cdf, phi_cdf + x * pdf


def _gelu_fwd(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(activation, CDF) in one pass; the CDF is kept for the backward pass."""
    if gelu_cdf_inplace is not None:
        act = np.empty_like(x)
        cdf = np.empty_like(x)
        gelu_cdf_inplace(x.reshape(-1), act.reshape(-1), cdf.reshape(-1))
        return act, cdf
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    return x * cdf, cdf


def _gelu_bwd(x: np.ndarray, cdf: np.ndarray, dout: np.ndarray) -> np.ndarray:
    """dout * gelu'(x) using the stored CDF (one exp pass)."""
    if gelu_vjp_inplace is not None:
        dx = np.empty_like(x)
        gelu_vjp_inplace(x.reshape(-1), cdf.reshape(-1), dout.reshape(-1), dx.reshape(-1))
        return dx
    return dout * (cdf + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x))


def _zero_masked(a: np.ndarray, mask: np.ndarray) -> None:
    a[~mask] = 0.0


def mixer_forward(
    x: np.ndarray, mask: np.ndarray, params: ParamStore, cfg: MixerConfig,
    check_finite: bool = False,
) -> tuple[np.ndarray, dict]:
    """Run the encoder over a batch; x is (B, tokens, in_dim), mask (B, tokens).

    Returns the (B, tokens, width) output and the tape of intermediates the
    backward pass needs. A 2-D x is treated as a single-item batch.
    """
    squeeze = x.ndim == 2
    if squeeze:
        x = x[None]
        mask = mask[None]
    b, t, f = x.shape
    if t != cfg.tokens or f != cfg.in_dim:
        raise ValueError(f"input {x.shape[1:]} incompatible with config ({cfg.tokens}, {cfg.in_dim})")
    if mask.shape != (b, t):
        raise ValueError("mask shape mismatch")

    h = x @ params["w_e"].value
    _zero_masked(h, mask)
    layers = []
    for i in range(cfg.layers):
        g_t = params[f"l{i}.ln_t.g"].value
        b_t = params[f"l{i}.ln_t.b"].value
        w1t = params[f"l{i}.tok.w1"].value
        b1t = params[f"l{i}.tok.b1"].value
        w2t = params[f"l{i}.tok.w2"].value
        b2t = params[f"l{i}.tok.b2"].value
        g_c = params[f"l{i}.ln_c.g"].value
        b_c = params[f"l{i}.ln_c.b"].value
        w1c = params[f"l{i}.ch.w1"].value
        b1c = params[f"l{i}.ch.b1"].value
        w2c = params[f"l{i}.ch.w2"].value
        b2c = params[f"l{i}.ch.b2"].value

        # token mixing: statistics down each channel column, FFN along tokens
        mu = h.mean(axis=1, keepdims=True)
        istd_t = 1.0 / np.sqrt(h.var(axis=1, keepdims=True) + LN_EPS)
        xhat_t = (h - mu) * istd_t
        y = g_t[None, :, None] * xhat_t + b_t[None, :, None]
        u = y.transpose(0, 2, 1)  # (B, width, tokens)
        p1 = u @ w1t + b1t
        a1, cdf_p = _gelu_fwd(p1)
        o = h + (a1 @ w2t + b2t).transpose(0, 2, 1)
        _zero_masked(o, mask)

        # channel mixing: statistics along each token row, FFN over channels
        mu_c = o.mean(axis=2, keepdims=True)
        istd_c = 1.0 / np.sqrt(o.var(axis=2, keepdims=True) + LN_EPS)
        xhat_c = (o - mu_c) * istd_c
        z = g_c * xhat_c + b_c
        q1 = z @ w1c + b1c
        b1a, cdf_q = _gelu_fwd(q1)
        hn = o + b1a @ w2c + b2c
        _zero_masked(hn, mask)

        layers.append(
            {"xhat_t": xhat_t, "istd_t": istd_t, "u": u, "p1": p1, "a1": a1,
             "cdf_p": cdf_p, "xhat_c": xhat_c, "istd_c": istd_c, "q1": q1,
             "b1a": b1a, "cdf_q": cdf_q}
        )
        h = hn

    if check_finite and not np.all(np.isfinite(h)):
        raise FloatingPointError("non-finite values in mixer output")
    tape = {"x": x, "mask": mask, "layers": layers, "cfg": cfg, "squeeze": squeeze}
    return (h[0] if squeeze else h), tape


def mixer_backward(tape: dict, d_out: np.ndarray, params: ParamStore) -> np.ndarray:
    """Exact reverse pass; accumulates into param.grad and returns dInput."""
    cfg: MixerConfig = tape["cfg"]
    mask = tape["mask"]
    if tape["squeeze"]:
        d_out = d_out[None]
    if d_out.shape[1:] != (cfg.tokens, cfg.width):
        raise ValueError("cotangent shape mismatch")

    dh = d_out.copy()
    _zero_masked(dh, mask)
    for i in reversed(range(cfg.layers)):
        lt = tape["layers"][i]
        g_t = params[f"l{i}.ln_t.g"]
        b_t = params[f"l{i}.ln_t.b"]
        w1t = params[f"l{i}.tok.w1"]
        b1t = params[f"l{i}.tok.b1"]
        w2t = params[f"l{i}.tok.w2"]
        b2t = params[f"l{i}.tok.b2"]
        g_c = params[f"l{i}.ln_c.g"]
        b_c = params[f"l{i}.ln_c.b"]
        w1c = params[f"l{i}.ch.w1"]
        b1c = params[f"l{i}.ch.b1"]
        w2c = params[f"l{i}.ch.w2"]
        b2c = params[f"l{i}.ch.b2"]

        # channel sub-block
        xhat_c, istd_c, q1 = lt["xhat_c"], lt["istd_c"], lt["q1"]
        dq2 = dh
        w2c.grad += np.tensordot(lt["b1a"], dq2, axes=([0, 1], [0, 1]))
        b2c.grad += dq2.sum(axis=(0, 1))
        dq1 = _gelu_bwd(q1, lt["cdf_q"], dq2 @ w2c.value.T)
        z = g_c.value * xhat_c + b_c.value
        w1c.grad += np.tensordot(z, dq1, axes=([0, 1], [0, 1]))
        b1c.grad += dq1.sum(axis=(0, 1))
        dz = dq1 @ w1c.value.T
        g_c.grad += (dz * xhat_c).sum(axis=(0, 1))
        b_c.grad += dz.sum(axis=(0, 1))
        dxhat = dz * g_c.value
        do = dh + istd_c * (
            dxhat
            - dxhat.mean(axis=2, keepdims=True)
            - xhat_c * (dxhat * xhat_c).mean(axis=2, keepdims=True)
        )
        _zero_masked(do, mask)

        # token sub-block
        xhat_t, istd_t, u, p1 = lt["xhat_t"], lt["istd_t"], lt["u"], lt["p1"]
        dp2 = do.transpose(0, 2, 1)
        w2t.grad += np.tensordot(lt["a1"], dp2, axes=([0, 1], [0, 1]))
        b2t.grad += dp2.sum(axis=(0, 1))
        dp1 = _gelu_bwd(p1, lt["cdf_p"], np.ascontiguousarray(dp2 @ w2t.value.T))
        w1t.grad += np.tensordot(u, dp1, axes=([0, 1], [0, 1]))
        b1t.grad += dp1.sum(axis=(0, 1))
        dy = (dp1 @ w1t.value.T).transpose(0, 2, 1)
        g_t.grad += (dy * xhat_t).sum(axis=(0, 2))
        b_t.grad += dy.sum(axis=(0, 2))
        dxhat_t = dy * g_t.value[None, :, None]
        dh = do + istd_t * (
            dxhat_t
            - dxhat_t.mean(axis=1, keepdims=True)
            - xhat_t * (dxhat_t * xhat_t).mean(axis=1, keepdims=True)
        )
        _zero_masked(dh, mask)

    x = tape["x"]
    w_e = params["w_e"]
    w_e.grad += np.tensordot(x, dh, axes=([0, 1], [0, 1]))
    dx = dh @ w_e.value.T
    return dx[0] if tape["squeeze"] else dx


def adam_step(
    params: ParamStore,
    lr: float = 1e-4,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    t: int = 1,
) -> None:
    """Bias-corrected Adam update per tensor; gradient buffers are zeroed after.

    Single-writer phase: no forward/backward may run concurrently with the
    update (readers and the writer strictly alternate).
    """
    if t < 1:
        raise ValueError("adam step count starts at 1")
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, p in params.items():
        g = p.grad
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for tensor {name!r}")
        p.m *= beta1
        p.m += (1.0 - beta1) * g
        p.v *= beta2
        p.v += (1.0 - beta2) * g * g
        p.value -= lr * (p.m / c1) / (np.sqrt(p.v / c2) + eps)
        g[...] = 0.0
