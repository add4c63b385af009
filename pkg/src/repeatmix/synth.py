"""Deterministic synthetic interaction streams.

``conversation_stream`` produces a message-network-like stream with heavy
repeat behavior: initiations pick partners with a bias toward recent ones, and
every event can trigger replies and follow-ups, so pairs interact in bursts
with their own rhythm. Used by the benchmark CLI and as the stand-in corpus
for the dataset-scale tests when the real data is not on disk.
"""

from __future__ import annotations

import heapq

import numpy as np

from .tgraph import TemporalGraph


def conversation_stream(
    n_nodes: int = 1899,
    n_events: int = 59835,
    horizon: float = 196 * 86400.0,
    seed: int = 0,
    repeat_bias: float = 0.52,
    reply_prob: float = 0.36,
    followup_prob: float = 0.14,
    memory: int = 32,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Generate (src, dst, t) arrays sorted by time.

    Activity is heterogeneous (zipf-ish weights); an initiation picks its
    destination from the source's recent partners with probability
    repeat_bias, otherwise by global activity. Each event schedules a reply
    (dst -> src, minutes scale) with reply_prob and a follow-up (same
    direction, hours-to-days scale) with followup_prob.
    """
    rng = np.random.default_rng(seed)
    weights = (np.arange(1, n_nodes + 1, dtype=np.float64)) ** -0.8
    rng.shuffle(weights)
    weights /= weights.sum()

    rate = 0.55 * n_events / horizon  # initiations; the rest come from bursts
    recent_partners: list[list[int]] = [[] for _ in range(n_nodes)]
    heap: list[tuple[float, int, int, int]] = []  # (time, tiebreak, src, dst)
    events: list[tuple[float, int, int]] = []
    t_init = 0.0
    tiebreak = 0

    def record(t: float, a: int, b: int) -> None:
        nonlocal tiebreak
        events.append((t, a, b))
        mem = recent_partners[a]
        mem.append(b)
        if len(mem) > memory:
            mem.pop(0)
        mem_b = recent_partners[b]
        mem_b.append(a)
        if len(mem_b) > memory:
            mem_b.pop(0)
        if rng.random() < reply_prob:
            delay = float(rng.lognormal(mean=5.0, sigma=1.0))  # ~minutes
            heapq.heappush(heap, (t + delay, tiebreak, b, a))
            tiebreak += 1
        if rng.random() < followup_prob:
            delay = float(rng.lognormal(mean=10.5, sigma=1.2))  # ~hours-days
            heapq.heappush(heap, (t + delay, tiebreak, a, b))
            tiebreak += 1

    while len(events) < n_events:
        t_init += rng.exponential(1.0 / rate)
        while heap and heap[0][0] <= t_init and len(events) < n_events:
            t, _, a, b = heapq.heappop(heap)
            record(t, a, b)
        if len(events) >= n_events:
            break
        u = int(rng.choice(n_nodes, p=weights))
        mem = recent_partners[u]
        if mem and rng.random() < repeat_bias:
            v = int(mem[int(rng.integers(len(mem)))])
        else:
            v = int(rng.choice(n_nodes, p=weights))
            while v == u:
                v = int(rng.choice(n_nodes, p=weights))
        record(t_init, u, v)

    events.sort(key=lambda e: e[0])
    src = np.array([e[1] for e in events], dtype=np.int64)
    dst = np.array([e[2] for e in events], dtype=np.int64)
    ts = np.array([e[0] for e in events], dtype=np.float64)
    ts -= ts[0]  # start at zero; spacing is what matters
    return src, dst, ts


def stream_to_graph(
    src: np.ndarray,
    dst: np.ndarray,
    ts: np.ndarray,
    node_dim: int = 0,
    edge_dim: int = 0,
) -> TemporalGraph:
    """Wrap raw arrays in a TemporalGraph with zero features."""
    n_nodes = int(max(src.max(), dst.max())) + 1
    return TemporalGraph(
        src,
        dst,
        ts,
        np.zeros(len(src)),
        n_nodes,
        np.zeros((n_nodes, node_dim)),
        np.zeros((len(src), edge_dim)),
    )


def write_stream_csv(path, src: np.ndarray, dst: np.ndarray, ts: np.ndarray) -> None:
    """Write a `src,dst,timestamp,label` CSV (label 0)."""
    with open(path, "w") as fh:
        for u, v, t in zip(src, dst, ts):
            fh.write(f"{int(u)},{int(v)},{float(t)!r},0\n")


def repeat_chain(n_nodes: int = 20, rounds: int = 50, gap: float = 1.0
                 ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Round-robin chain: every adjacent pair interacts once per round.

    Histories grow linearly with rounds and consist almost entirely of
    repeats, which makes sampler cost scaling easy to measure.
    """
    src, dst, ts = [], [], []
    t = 0.0
    for _ in range(rounds):
        for i in range(n_nodes - 1):
            src.append(i)
            dst.append(i + 1)
            t += gap
            ts.append(t)
    return (
        np.array(src, dtype=np.int64),
        np.array(dst, dtype=np.int64),
        np.array(ts, dtype=np.float64),
    )
