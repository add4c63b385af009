"""Sequence encoding: node features | edge features | time encoding | segment.

Turns a NeighborSample into the K x (d_N + d_E + d_T + d_S) input matrix the
mixer consumes, zero-padded with a validity mask. The time encoder is a fixed
(non-trainable) cosine map with geometric frequencies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .sampling import NeighborSample
from .tgraph import TemporalGraph


@dataclass(frozen=True)
class TimeEncoderConfig:
    """Cosine time-interval encoder; frequency i is alpha^(-i/beta), i from 0."""

    dim: int = 100
    alpha: float | None = None
    beta: float | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("time encoding dim must be >= 1")

    @cached_property
    def frequencies(self) -> np.ndarray:
        a = math.sqrt(self.dim) if self.alpha is None else self.alpha
        b = math.sqrt(self.dim) if self.beta is None else self.beta
        if a <= 0 or b <= 0:
            raise ValueError("alpha and beta must be positive")
        return a ** (-np.arange(self.dim, dtype=np.float64) / b)

    @cached_property
    def scale(self) -> float:
        return math.sqrt(1.0 / self.dim)


def time_encode(dt: float, cfg: TimeEncoderConfig) -> np.ndarray:
    """Encode one non-negative interval; every entry lies in +-sqrt(1/dim)."""
    if dt < 0:
        raise ValueError("time interval must be non-negative")
    return cfg.scale * np.cos(cfg.frequencies * dt)


def time_encode_many(dts: np.ndarray, cfg: TimeEncoderConfig) -> np.ndarray:
    """Vectorized encoder: (n,) intervals -> (n, dim) matrix."""
    dts = np.asarray(dts, dtype=np.float64)
    if dts.size and dts.min() < 0:
        raise ValueError("time intervals must be non-negative")
    return cfg.scale * np.cos(dts[:, None] * cfg.frequencies[None, :])


@dataclass
class EncodedSequence:
    """K x width matrix plus validity mask; padded rows are all-zero."""

    matrix: np.ndarray
    mask: np.ndarray
    segment: str


def assemble(
    g: TemporalGraph,
    s: NeighborSample,
    t: float,
    segment: str,
    seg_vec: np.ndarray | None,
    time_cfg: TimeEncoderConfig,
    k: int,
    zero_time_encoding: bool = False,
) -> EncodedSequence:
    """Encode a sample's entries into rows, zero-padded to k with a mask.

    Row r = node_features[id] | edge_features[eidx] | time_encode(t - t_r) |
    segment vector. seg_vec=None drops the segment block (its width becomes
    zero); zero_time_encoding keeps the time block but zeroes it.
    """
    n = len(s)
    if n > k:
        raise ValueError(f"sample length {n} exceeds k={k}")
    d_n = g.node_features.shape[1]
    d_e = g.edge_features.shape[1]
    d_s = 0 if seg_vec is None else len(seg_vec)
    width = d_n + d_e + time_cfg.dim + d_s
    matrix = np.zeros((k, width), dtype=np.float64)
    mask = np.zeros(k, dtype=bool)
    if n:
        mask[:n] = True
        if d_n:
            matrix[:n, :d_n] = g.node_features[s.ids]
        if d_e:
            matrix[:n, d_n : d_n + d_e] = g.edge_features[s.eidx]
        if not zero_time_encoding:
            matrix[:n, d_n + d_e : d_n + d_e + time_cfg.dim] = time_encode_many(
                t - s.times, time_cfg
            )
        if d_s:
            matrix[:n, d_n + d_e + time_cfg.dim :] = seg_vec
    return EncodedSequence(matrix=matrix, mask=mask, segment=segment)


def assemble_batch(
    g: TemporalGraph,
    samples: list[NeighborSample],
    ts: np.ndarray,
    seg_vec: np.ndarray | None,
    time_cfg: TimeEncoderConfig,
    k: int,
    zero_time_encoding: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Assemble many samples at once: (B, k, width) matrix plus (B, k) mask.

    Row semantics match :func:`assemble`; the gather and the cosine encoding
    run once over the whole batch.
    """
    b = len(samples)
    d_n = g.node_features.shape[1]
    d_e = g.edge_features.shape[1]
    d_s = 0 if seg_vec is None else len(seg_vec)
    width = d_n + d_e + time_cfg.dim + d_s
    x = np.zeros((b, k, width), dtype=np.float64)
    mask = np.zeros((b, k), dtype=bool)
    counts = np.array([len(s) for s in samples], dtype=np.int64)
    if counts.max(initial=0) > k:
        raise ValueError("sample longer than k")
    total = int(counts.sum())
    if total == 0:
        return x, mask
    rows = np.concatenate(
        [i * k + np.arange(c, dtype=np.int64) for i, c in enumerate(counts)]
    )
    ids = np.concatenate([s.ids for s in samples])
    eidx = np.concatenate([s.eidx for s in samples])
    dts = np.concatenate([ts[i] - s.times for i, s in enumerate(samples)])
    flat = x.reshape(b * k, width)
    mask.reshape(b * k)[rows] = True
    if d_n:
        flat[rows, :d_n] = g.node_features[ids]
    if d_e:
        flat[rows, d_n : d_n + d_e] = g.edge_features[eidx]
    if not zero_time_encoding:
        flat[rows, d_n + d_e : d_n + d_e + time_cfg.dim] = time_encode_many(dts, time_cfg)
    if d_s:
        flat[rows, d_n + d_e + time_cfg.dim :] = seg_vec
    return x, mask


def concat_pair(a: EncodedSequence, b: EncodedSequence) -> tuple[np.ndarray, np.ndarray]:
    """Vertical stack (a's rows first) of two equal-width encoded sequences."""
    if a.matrix.shape[1] != b.matrix.shape[1]:
        raise ValueError(
            f"width mismatch: {a.matrix.shape[1]} vs {b.matrix.shape[1]}"
        )
    return (
        np.concatenate([a.matrix, b.matrix], axis=0),
        np.concatenate([a.mask, b.mask], axis=0),
    )
