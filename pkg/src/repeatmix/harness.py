"""Training loop, negative sampling strategies, ranking metrics, protocols.

Training walks the train range chronologically in fixed batches, pairs every
positive with one random-destination negative, minimizes mean binary
cross-entropy with Adam, and keeps the parameters that score the best
validation AP under random negatives. Evaluation scores the test range against
strategy-matched negatives (random / historical / inductive-only pairs).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .mixer import ParamStore, adam_step
from .model import EdgeModel, pcc
from .sampling import SamplerConfig, interval_sequence, sample_recent, sample_repeat_first
from .tgraph import SplitView, TemporalGraph


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    patience: int = 20
    batch_size: int = 200
    lr: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.patience > self.epochs:
            raise ValueError("patience must not exceed epochs")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class MetricsReport:
    ap: float
    auc: float
    loss_history: list[float] = field(default_factory=list)
    val_ap_history: list[float] = field(default_factory=list)
    best_epoch: int = 0
    seconds: float = 0.0
    negative_fallbacks: int = 0


# -- ranking metrics -----------------------------------------------------------


def _check_labels(labels: np.ndarray) -> tuple[int, int]:
    pos = int((labels == 1).sum())
    neg = int((labels == 0).sum())
    if pos + neg != len(labels):
        raise ValueError("labels must be 0/1")
    if pos == 0 or neg == 0:
        raise ValueError("need at least one positive and one negative")
    return pos, neg


def average_precision(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mean precision at each positive's rank, descending score, stable ties."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos, _ = _check_labels(labels)
    order = np.argsort(-scores, kind="stable")
    hits = (labels[order] == 1).astype(np.float64)
    ranks = np.arange(1, len(scores) + 1, dtype=np.float64)
    precision_at = np.cumsum(hits) / ranks
    return float(precision_at[hits == 1].sum() / pos)


def auc_roc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mann-Whitney form: P(random positive outranks random negative), ties 0.5."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos, neg = _check_labels(labels)
    order = np.argsort(scores, kind="stable")
    sorted_scores = scores[order]
    ranks = np.empty(len(scores), dtype=np.float64)
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # average rank, 1-based
        i = j + 1
    rank_sum = float(ranks[labels == 1].sum())
    return (rank_sum - pos * (pos + 1) / 2.0) / (pos * neg)


# -- negative sampling ----------------------------------------------------------


class NegativeContext:
    """Split-scoped candidate pools for the rnd/hist/ind strategies.

    span="train" restricts the rnd destination support to destinations seen in
    the train range (used while training); span="full" uses every destination.
    """

    def __init__(self, g: TemporalGraph, split: SplitView, span: str = "full"):
        self.g = g
        self.split = split
        if span == "train":
            self.dst_support = np.unique(g.dst[: split.train_end])
        elif span == "full":
            self.dst_support = np.unique(g.dst)
        else:
            raise ValueError(f"unknown span {span!r}")
        # per-source destination events, chronological (for hist candidates)
        order = np.argsort(g.src, kind="stable")
        bounds = np.searchsorted(g.src[order], np.unique(g.src))
        groups = np.split(order, bounds[1:])
        self._src_events: dict[int, tuple[np.ndarray, np.ndarray]] = {
            int(g.src[idx[0]]): (g.t[idx], g.dst[idx]) for idx in groups if len(idx)
        }
        train_end = split.train_end
        train_pairs = set(zip(g.src[:train_end].tolist(), g.dst[:train_end].tolist()))
        eval_pairs = set(zip(g.src[train_end:].tolist(), g.dst[train_end:].tolist()))
        only: dict[int, list[int]] = {}
        for u, v in eval_pairs - train_pairs:
            only.setdefault(u, []).append(v)
        self._eval_only: dict[int, np.ndarray] = {
            u: np.array(sorted(vs), dtype=np.int64) for u, vs in only.items()
        }

    def historical_candidates(self, u: int, t: float) -> np.ndarray:
        events = self._src_events.get(u)
        if events is None:
            return np.empty(0, dtype=np.int64)
        times, dsts = events
        before = dsts[times < t]
        at_t = set(dsts[times == t].tolist())
        cands = np.unique(before)
        if at_t:
            cands = cands[~np.isin(cands, np.array(sorted(at_t), dtype=np.int64))]
        return cands

    def inductive_candidates(self, u: int) -> np.ndarray:
        return self._eval_only.get(u, np.empty(0, dtype=np.int64))


def negative_sample(
    strategy: str,
    src: np.ndarray,
    dst: np.ndarray,
    ts: np.ndarray,
    ctx: NegativeContext,
    rng: np.random.Generator,
    stats: Optional[dict] = None,
) -> np.ndarray:
    """One negative destination per positive (same source, same timestamp).

    rnd draws uniformly over destination nodes; hist from pairs the source
    touched strictly before t; ind from pairs seen only in the evaluation
    span. hist/ind fall back to rnd when no candidate exists (counted in
    stats["fallbacks"] when a dict is passed). The true destination is never
    returned (resampled on collision) unless it is the only candidate.
    """
    if strategy not in ("rnd", "hist", "ind"):
        raise ValueError(f"unknown negative sampling strategy {strategy!r}")
    support = ctx.dst_support
    out = np.empty(len(src), dtype=np.int64)
    fallbacks = 0
    for i, (u, v, t) in enumerate(zip(src, dst, ts)):
        u, v = int(u), int(v)
        cands = None
        if strategy == "hist":
            cands = ctx.historical_candidates(u, float(t))
        elif strategy == "ind":
            cands = ctx.inductive_candidates(u)
        if cands is not None:
            cands = cands[cands != v]
            if len(cands) == 0:
                cands = None  # rnd fallback
                fallbacks += 1
        if cands is None:
            cands = support
        pick = int(cands[rng.integers(len(cands))])
        while pick == v and len(cands) > 1:
            pick = int(cands[rng.integers(len(cands))])
        out[i] = pick
    if stats is not None:
        stats["fallbacks"] = fallbacks
        stats["queries"] = len(src)
    return out


# -- loss -----------------------------------------------------------------------


def bce_from_logits(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy and its gradient w.r.t. the logits."""
    # log(1 + e^l) - y*l, computed stably
    loss = np.logaddexp(0.0, logits) - targets * logits
    probs = np.empty_like(logits)
    pos = logits >= 0
    probs[pos] = 1.0 / (1.0 + np.exp(-logits[pos]))
    ex = np.exp(logits[~pos])
    probs[~pos] = ex / (1.0 + ex)
    return float(loss.mean()), (probs - targets) / len(logits)


# -- train / evaluate -------------------------------------------------------------


def _score_range(
    g: TemporalGraph,
    model: EdgeModel,
    params: ParamStore,
    src: np.ndarray,
    dst: np.ndarray,
    neg_dst: np.ndarray,
    ts: np.ndarray,
    batch_size: int,
    rng: Optional[np.random.Generator],
) -> tuple[np.ndarray, np.ndarray]:
    """Scores then labels for positives and their paired negatives."""
    scores = []
    labels = []
    for lo in range(0, len(src), batch_size):
        hi = min(lo + batch_size, len(src))
        bsrc = np.concatenate([src[lo:hi], src[lo:hi]])
        bdst = np.concatenate([dst[lo:hi], neg_dst[lo:hi]])
        bts = np.concatenate([ts[lo:hi], ts[lo:hi]])
        state = model.forward_batch(
            g, bsrc, bdst, bts, params, rng, with_tape=False
        )
        n = hi - lo
        scores.append(state["probs"])
        labels.append(np.concatenate([np.ones(n), np.zeros(n)]))
    return np.concatenate(scores), np.concatenate(labels)


def evaluate(
    g: TemporalGraph,
    split: SplitView,
    params: ParamStore,
    model: EdgeModel,
    strategy: str = "rnd",
    inductive: bool = False,
    seed: int = 0,
    batch_size: int = 200,
) -> MetricsReport:
    """AP/AUC over the test range with strategy-matched negatives."""
    lo, hi = split.test
    src, dst, ts = g.src[lo:hi], g.dst[lo:hi], g.t[lo:hi]
    if inductive:
        new = np.array(sorted(split.new_nodes), dtype=np.int64)
        touch = np.isin(src, new) | np.isin(dst, new)
        if not touch.any():
            raise ValueError("inductive evaluation requested but no new nodes in test range")
        src, dst, ts = src[touch], dst[touch], ts[touch]
    ctx = NegativeContext(g, split, span="full")
    rng = np.random.default_rng(seed)
    stats: dict = {}
    neg = negative_sample(strategy, src, dst, ts, ctx, rng, stats)
    t0 = time.perf_counter()
    scores, labels = _score_range(
        g, model, params, src, dst, neg, ts, batch_size, np.random.default_rng(seed + 1)
    )
    report = MetricsReport(
        ap=average_precision(scores, labels),
        auc=auc_roc(scores, labels),
        seconds=time.perf_counter() - t0,
    )
    report.negative_fallbacks = stats.get("fallbacks", 0)
    return report


def train(
    g: TemporalGraph,
    split: SplitView,
    model: EdgeModel,
    cfg: TrainConfig,
    on_epoch: Optional[Callable[[dict], None]] = None,
) -> tuple[ParamStore, MetricsReport]:
    """Chronological mini-batch training with early stopping on validation AP.

    Returns the best-validation parameters and the training report. on_epoch
    receives one record per epoch: {epoch, loss, val_ap, seconds}.
    """
    rng = np.random.default_rng(cfg.seed)
    params = model.init_params(rng)
    ctx = NegativeContext(g, split, span="train")

    tr_lo, tr_hi = split.train
    src, dst, ts = g.src[tr_lo:tr_hi], g.dst[tr_lo:tr_hi], g.t[tr_lo:tr_hi]

    # fixed validation task: one rnd negative per val positive, drawn once
    val_lo, val_hi = split.val
    vsrc, vdst, vts = g.src[val_lo:val_hi], g.dst[val_lo:val_hi], g.t[val_lo:val_hi]
    val_rng = np.random.default_rng(cfg.seed + 1)
    vneg = negative_sample("rnd", vsrc, vdst, vts, ctx, val_rng)

    best_snapshot = params.values_snapshot()
    best_val = -np.inf
    best_auc = 0.0
    best_epoch = 0
    bad_epochs = 0
    report = MetricsReport(ap=0.0, auc=0.0)
    step = 0
    t_start = time.perf_counter()
    for epoch in range(1, cfg.epochs + 1):
        t_epoch = time.perf_counter()
        epoch_losses = []
        for lo in range(0, len(src), cfg.batch_size):
            hi = min(lo + cfg.batch_size, len(src))
            neg = negative_sample("rnd", src[lo:hi], dst[lo:hi], ts[lo:hi], ctx, rng)
            bsrc = np.concatenate([src[lo:hi], src[lo:hi]])
            bdst = np.concatenate([dst[lo:hi], neg])
            bts = np.concatenate([ts[lo:hi], ts[lo:hi]])
            targets = np.concatenate([np.ones(hi - lo), np.zeros(hi - lo)])
            # hide the current batch (and everything after) from the samplers
            state = model.forward_batch(
                g, bsrc, bdst, bts, params, rng, max_eidx=tr_lo + lo
            )
            loss, dlogits = bce_from_logits(state["logits"], targets)
            if not np.isfinite(loss):
                raise FloatingPointError(
                    f"non-finite loss at epoch {epoch}, batch starting {lo}"
                )
            model.backward_batch(state, dlogits, params)
            step += 1
            adam_step(params, lr=cfg.lr, t=step)
            epoch_losses.append(loss)

        vscores, vlabels = _score_range(
            g, model, params, vsrc, vdst, vneg, vts, cfg.batch_size,
            np.random.default_rng(cfg.seed + 2),
        )
        val_ap = average_precision(vscores, vlabels)
        val_auc = auc_roc(vscores, vlabels)
        mean_loss = float(np.mean(epoch_losses))
        report.loss_history.append(mean_loss)
        report.val_ap_history.append(val_ap)
        if on_epoch is not None:
            on_epoch(
                {
                    "epoch": epoch,
                    "loss": mean_loss,
                    "val_ap": val_ap,
                    "val_auc": val_auc,
                    "seconds": time.perf_counter() - t_epoch,
                }
            )
        if val_ap > best_val:
            best_val = val_ap
            best_auc = val_auc
            best_epoch = epoch
            best_snapshot = params.values_snapshot()
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= cfg.patience:
                break

    params.load_values(best_snapshot)
    report.ap = best_val
    report.auc = best_auc
    report.best_epoch = best_epoch
    report.seconds = time.perf_counter() - t_start
    return params, report


# -- correlation pre-experiment ----------------------------------------------------


def pcc_preexperiment(
    g: TemporalGraph,
    split: SplitView,
    cfg: SamplerConfig,
    seed: int = 0,
    limit: Optional[int] = None,
) -> dict[str, float]:
    """Mean endpoint-interval correlation for test positives and rnd negatives.

    For each test edge (and one random negative sharing its source and time),
    both endpoints are sampled under the recent strategy and under the
    repeat-aware strategy; the Pearson correlation of the two interval
    sequences is averaged per (strategy, class).
    """
    lo, hi = split.test
    src, dst, ts = g.src[lo:hi], g.dst[lo:hi], g.t[lo:hi]
    if limit is not None and len(src) > limit:
        src, dst, ts = src[:limit], dst[:limit], ts[:limit]
    ctx = NegativeContext(g, split, span="full")
    rng = np.random.default_rng(seed)
    neg = negative_sample("rnd", src, dst, ts, ctx, rng)

    sums = {
        "recent_pos": 0.0, "recent_neg": 0.0,
        "repeat_pos": 0.0, "repeat_neg": 0.0,
    }
    n = len(src)
    for u, v, v_neg, t in zip(src, dst, neg, ts):
        u, v, v_neg, t = int(u), int(v), int(v_neg), float(t)
        for name, b in (("pos", v), ("neg", v_neg)):
            ru = interval_sequence(sample_recent(g, u, t, cfg.k), t, cfg.k)
            rb = interval_sequence(sample_recent(g, b, t, cfg.k), t, cfg.k)
            sums[f"recent_{name}"] += pcc(ru, rb)
            pu = interval_sequence(sample_repeat_first(g, u, b, t, cfg), t, cfg.k)
            pb = interval_sequence(sample_repeat_first(g, b, u, t, cfg), t, cfg.k)
            sums[f"repeat_{name}"] += pcc(pu, pb)
    means = {key: val / n for key, val in sums.items()}
    means["recent_gap"] = means["recent_pos"] - means["recent_neg"]
    means["repeat_gap"] = means["repeat_pos"] - means["repeat_neg"]
    return means
