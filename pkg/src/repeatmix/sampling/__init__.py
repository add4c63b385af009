"""Neighbor sampling strategies over a TemporalGraph.

Four strategies: the recent tail, uniform, a per-slot recent/uniform mixture,
and the repeat-aware samplers (first and second order) that harvest window
predecessors around past occurrences of the query counterpart. All strategies
are pure given (graph, query, config, rng state).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..tgraph import TemporalGraph
from . import kernels
from ._kernels_py import NO_CAP

STRATEGIES = ("recent", "uniform", "time_aware", "repeat_first", "repeat_second")


@dataclass(frozen=True)
class SamplerConfig:
    """Sequence length and repeat-aware search budgets.

    k: sequence length; w: slide window; r: occurrence budget (most recent
    occurrences searched per counterpart); m: second-order repeat-aware node
    budget; alpha: recent/uniform mixing weight for the time-aware strategy.
    """

    k: int
    w: int = 5
    r: int = 10
    m: int = 10
    alpha: float = 0.2

    def __post_init__(self):
        if self.k < 1 or self.w < 1 or self.r < 1 or self.m < 1:
            raise ValueError("k, w, r, m must all be >= 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")


@dataclass
class NeighborSample:
    """Chronologically ordered neighbor entries drawn for one (node, t) query."""

    query_node: int
    query_time: float
    strategy: str
    ids: np.ndarray
    times: np.ndarray
    eidx: np.ndarray
    fell_back: bool = False

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def entries(self) -> list[tuple[int, float, int]]:
        return [
            (int(i), float(t), int(e)) for i, t, e in zip(self.ids, self.times, self.eidx)
        ]


def _wrap(g: TemporalGraph, n: int, t: float, strategy: str, idx: np.ndarray,
          fell_back: bool = False) -> NeighborSample:
    return NeighborSample(
        query_node=n,
        query_time=t,
        strategy=strategy,
        ids=g.hist_nbr[idx],
        times=g.hist_time[idx],
        eidx=g.hist_eidx[idx],
        fell_back=fell_back,
    )


def _args(g: TemporalGraph):
    return g.hist_offsets, g.hist_nbr, g.hist_time, g.hist_eidx


def sample_recent(g: TemporalGraph, n: int, t: float, k: int,
                  max_eidx: int = NO_CAP) -> NeighborSample:
    """The last min(k, H) entries of n's history before t."""
    g._check_node(n)
    idx = kernels.active.recent_indices(*_args(g), n, t, k, max_eidx)
    return _wrap(g, n, t, "recent", idx)


def _cut(g: TemporalGraph, n: int, t: float, max_eidx: int) -> tuple[int, int]:
    lo, hi = g.history_slice(n)
    cut = lo + int(np.searchsorted(g.hist_time[lo:hi], t, side="left"))
    if max_eidx < NO_CAP:
        cut = min(cut, lo + int(np.searchsorted(g.hist_eidx[lo:hi], max_eidx, side="left")))
    return lo, cut


def sample_uniform(g: TemporalGraph, n: int, t: float, k: int,
                   rng: np.random.Generator, max_eidx: int = NO_CAP) -> NeighborSample:
    """k entries uniformly without replacement, returned chronologically."""
    g._check_node(n)
    lo, cut = _cut(g, n, t, max_eidx)
    size = cut - lo
    take = min(k, size)
    sel = rng.choice(size, size=take, replace=False) + lo
    sel.sort()
    return _wrap(g, n, t, "uniform", sel.astype(np.int64))


def sample_time_aware(g: TemporalGraph, n: int, t: float, k: int, alpha: float,
                      rng: np.random.Generator, max_eidx: int = NO_CAP) -> NeighborSample:
    """Per-slot Bernoulli(alpha) mix of most-recent and uniform picks.

    Picks are without replacement over the history, so the sample repeats an
    entry only when the history itself does. alpha=0 reduces to the recent
    tail, alpha=1 to uniform sampling.
    """
    g._check_node(n)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    lo, cut = _cut(g, n, t, max_eidx)
    remaining = list(range(lo, cut))
    take = min(k, len(remaining))
    chosen = []
    for _ in range(take):
        if rng.random() < alpha:
            chosen.append(remaining.pop(int(rng.integers(len(remaining)))))
        else:
            chosen.append(remaining.pop())
    chosen.sort()
    return _wrap(g, n, t, "time_aware", np.array(chosen, dtype=np.int64))


def sample_repeat_first(g: TemporalGraph, u: int, v: int, t: float,
                        cfg: SamplerConfig, max_eidx: int = NO_CAP) -> NeighborSample:
    """First-order repeat-aware sample for u against counterpart v.

    Harvests the w-1 history entries preceding each of the most recent r
    occurrences of v in u's history (strictly before t), chronologically
    ordered and truncated to the most recent k; falls back to the recent tail
    when nothing is collected.
    """
    g._check_node(u)
    g._check_node(v)
    idx, fell_back = kernels.active.first_order_indices(
        *_args(g), u, v, t, cfg.k, cfg.w, cfg.r, max_eidx
    )
    return _wrap(g, u, t, "repeat_first", idx, fell_back)


def sample_repeat_second(g: TemporalGraph, u: int, v: int, t: float,
                         cfg: SamplerConfig, max_eidx: int = NO_CAP) -> NeighborSample:
    """Second-order repeat-aware sample for u against counterpart v.

    Applies the occurrence-window rule inside the history of every distinct
    counterpart m of u's first-order sequence, against each of the most recent
    m-budget distinct counterparts of v's first-order sequence.
    """
    g._check_node(u)
    g._check_node(v)
    idx, fell_back = kernels.active.second_order_indices(
        *_args(g), u, v, t, cfg.k, cfg.w, cfg.r, cfg.m, max_eidx
    )
    return _wrap(g, u, t, "repeat_second", idx, fell_back)


def sample_strategy(g: TemporalGraph, strategy: str, u: int, v: int, t: float,
                    cfg: SamplerConfig,
                    rng: Optional[np.random.Generator] = None,
                    max_eidx: int = NO_CAP) -> NeighborSample:
    """Dispatch by strategy name; v is only consulted by the repeat strategies."""
    if strategy == "recent":
        return sample_recent(g, u, t, cfg.k, max_eidx)
    if strategy == "uniform":
        return sample_uniform(g, u, t, cfg.k, rng, max_eidx)
    if strategy == "time_aware":
        return sample_time_aware(g, u, t, cfg.k, cfg.alpha, rng, max_eidx)
    if strategy == "repeat_first":
        return sample_repeat_first(g, u, v, t, cfg, max_eidx)
    if strategy == "repeat_second":
        return sample_repeat_second(g, u, v, t, cfg, max_eidx)
    raise ValueError(f"unknown sampling strategy {strategy!r}")


def interval_sequence(s: NeighborSample, t: float, k: int) -> np.ndarray:
    """Time gaps (t - entry time) per entry, zero-padded to length k."""
    if len(s.times) and float(s.times.max()) >= t:
        raise ValueError("sample contains entries at or after the query time")
    if len(s.times) > k:
        raise ValueError(f"sample longer than k={k}")
    out = np.zeros(k, dtype=np.float64)
    out[: len(s.times)] = t - s.times
    return out
