"""Immutable chronological storage for timestamped interaction graphs.

A :class:`TemporalGraph` keeps the interaction list in columnar form plus a
CSR-style per-node history index (both endpoints of every interaction record
the event), which is what the samplers scan. Instances are immutable after
construction, so any number of readers may share one.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterable, Sequence

import numpy as np

CACHE_MAGIC = b"RMXG"
CACHE_VERSION = 1


class IngestError(ValueError):
    """Malformed input data; message carries the offending line number."""


class UnknownNodeError(IndexError):
    """Node id outside [0, node_count)."""


@dataclass(frozen=True)
class Interaction:
    """One timestamped event; ``edge_index`` is its global chronological rank."""

    src: int
    dst: int
    t: float
    edge_index: int
    label: float = 0.0


@dataclass(frozen=True)
class IngestConfig:
    has_header: bool = False
    bipartite: bool = False
    node_dim: int = 172
    edge_dim: int = 172


@dataclass(frozen=True)
class SplitView:
    """Contiguous chronological train/val/test ranges over edge indices."""

    train: tuple[int, int]
    val: tuple[int, int]
    test: tuple[int, int]
    new_nodes: frozenset[int]

    @property
    def train_end(self) -> int:
        return self.train[1]


class TemporalGraph:
    """Chronological edge store with per-node time-sorted histories.

    Histories are undirected: an interaction (u, v, t) appears in both u's and
    v's history, each entry being (counterpart, t, edge_index) sorted by
    (t, edge_index). Since global chronology is non-decreasing in edge_index,
    per-node histories are automatically sorted when built in edge order.
    """

    def __init__(
        self,
        src: np.ndarray,
        dst: np.ndarray,
        t: np.ndarray,
        labels: np.ndarray,
        node_count: int,
        node_features: np.ndarray,
        edge_features: np.ndarray,
        bipartite: bool = False,
    ):
        n_edges = len(src)
        if not (len(dst) == len(t) == len(labels) == n_edges):
            raise ValueError("column length mismatch")
        if np.any(np.diff(t) < 0):
            raise ValueError("timestamps must be non-decreasing in edge order")
        self.src = np.ascontiguousarray(src, dtype=np.int64)
        self.dst = np.ascontiguousarray(dst, dtype=np.int64)
        self.t = np.ascontiguousarray(t, dtype=np.float64)
        self.labels = np.ascontiguousarray(labels, dtype=np.float64)
        self.node_count = int(node_count)
        self.node_features = np.ascontiguousarray(node_features, dtype=np.float64)
        self.edge_features = np.ascontiguousarray(edge_features, dtype=np.float64)
        self.bipartite = bool(bipartite)
        if self.node_features.shape[0] != self.node_count:
            raise ValueError("node feature row count != node_count")
        if self.edge_features.shape[0] != n_edges:
            raise ValueError("edge feature row count != interaction count")
        self._build_histories()
        for arr in (self.src, self.dst, self.t, self.labels, self.node_features,
                    self.edge_features, self.hist_offsets, self.hist_nbr,
                    self.hist_time, self.hist_eidx):
            arr.flags.writeable = False

    # -- construction ------------------------------------------------------

    def _build_histories(self) -> None:
        n, e = self.node_count, len(self.src)
        degree = np.zeros(n, dtype=np.int64)
        np.add.at(degree, self.src, 1)
        np.add.at(degree, self.dst, 1)
        offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(degree, out=offsets[1:])
        # each event lands in both endpoints' histories (twice for self-loops);
        # per-node order follows edge order, which is chronological
        owners = np.concatenate([self.src, self.dst])
        counterparts = np.concatenate([self.dst, self.src])
        eidx2 = np.concatenate([np.arange(e), np.arange(e)]).astype(np.int64)
        order = np.lexsort((eidx2, owners))
        self.hist_offsets = offsets
        self.hist_nbr = np.ascontiguousarray(counterparts[order])
        self.hist_time = np.ascontiguousarray(self.t[eidx2[order]])
        self.hist_eidx = np.ascontiguousarray(eidx2[order])

    # -- queries -----------------------------------------------------------

    @property
    def interaction_count(self) -> int:
        return len(self.src)

    def interactions(self) -> Iterable[Interaction]:
        for i in range(len(self.src)):
            yield Interaction(
                int(self.src[i]), int(self.dst[i]), float(self.t[i]), i, float(self.labels[i])
            )

    def _check_node(self, n: int) -> None:
        if not 0 <= n < self.node_count:
            raise UnknownNodeError(f"node id {n} outside [0, {self.node_count})")

    def history_slice(self, n: int) -> tuple[int, int]:
        self._check_node(n)
        return int(self.hist_offsets[n]), int(self.hist_offsets[n + 1])

    def history_before(self, n: int, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Entries of n's history strictly before t: (counterparts, times, edge indices).

        Binary search over the sorted per-node history; O(log H + result).
        """
        lo, hi = self.history_slice(n)
        cut = lo + int(np.searchsorted(self.hist_time[lo:hi], t, side="left"))
        return self.hist_nbr[lo:cut], self.hist_time[lo:cut], self.hist_eidx[lo:cut]

    def occurrence_positions(self, n: int, counterpart: int, t: float) -> np.ndarray:
        """Positions of `counterpart` in n's history restricted to events before t."""
        nbrs, _, _ = self.history_before(n, t)
        return np.nonzero(nbrs == counterpart)[0].astype(np.int64)

    def first_appearance(self) -> np.ndarray:
        """Edge index of each node's first event (interaction_count if never seen)."""
        first = np.full(self.node_count, self.interaction_count, dtype=np.int64)
        np.minimum.at(first, self.src, np.arange(len(self.src)))
        np.minimum.at(first, self.dst, np.arange(len(self.dst)))
        return first


def chronological_split(
    g: TemporalGraph, ratios: Sequence[float] = (0.70, 0.15, 0.15)
) -> SplitView:
    """Partition edge indices into contiguous chronological train/val/test ranges.

    Boundary rounding goes toward train: val and test get floor(ratio * n)
    edges each. Nodes first appearing at or after the train boundary form the
    new-node set used by inductive evaluation.
    """
    n = g.interaction_count
    if n < 10:
        raise ValueError("need at least 10 interactions to split")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must sum to 1, got {sum(ratios)!r}")
    n_val = int(ratios[1] * n)
    n_test = int(ratios[2] * n)
    n_train = n - n_val - n_test
    first = g.first_appearance()
    new_nodes = frozenset(int(x) for x in np.nonzero(first >= n_train)[0] if first[x] < n)
    return SplitView(
        train=(0, n_train),
        val=(n_train, n_train + n_val),
        test=(n_train + n_val, n),
        new_nodes=new_nodes,
    )


# -- ingestion ---------------------------------------------------------------


def _parse_rows(stream: io.TextIOBase, has_header: bool):
    reader = csv.reader(stream)
    rows = []
    arity = None
    for lineno, row in enumerate(reader, start=1):
        if lineno == 1 and has_header:
            continue
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) < 4:
            raise IngestError(f"line {lineno}: expected src,dst,timestamp,label[,features]")
        try:
            src = int(row[0])
            dst = int(row[1])
            ts = float(row[2])
            label = float(row[3])
            feats = [float(x) for x in row[4:]]
        except ValueError as exc:
            raise IngestError(f"line {lineno}: {exc}") from exc
        if ts < 0:
            raise IngestError(f"line {lineno}: negative timestamp {ts}")
        if arity is None:
            arity = len(feats)
        elif len(feats) != arity:
            raise IngestError(
                f"line {lineno}: inconsistent feature arity {len(feats)} (expected {arity})"
            )
        rows.append((src, dst, ts, label, feats))
    return rows


def ingest_csv(
    source: str | Path | BinaryIO | io.TextIOBase,
    config: IngestConfig = IngestConfig(),
    node_feature_source: str | Path | io.TextIOBase | None = None,
) -> TemporalGraph:
    """Build a TemporalGraph from `src,dst,timestamp,label[,f_1,...,f_k]` rows.

    Node ids are remapped to a dense [0, node_count) range; bipartite inputs
    offset destination ids by the source-id count. Rows are stably sorted by
    timestamp. Feature columns become edge features zero-padded/truncated to
    the configured width; node features are zero unless a node-feature file is
    supplied.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", newline="") as fh:
            rows = _parse_rows(fh, config.has_header)
    elif isinstance(source, io.TextIOBase):
        rows = _parse_rows(source, config.has_header)
    else:
        rows = _parse_rows(io.TextIOWrapper(source, encoding="utf-8"), config.has_header)
    if not rows:
        raise IngestError("no interactions in input")

    raw_src = np.array([r[0] for r in rows], dtype=np.int64)
    raw_dst = np.array([r[1] for r in rows], dtype=np.int64)
    ts = np.array([r[2] for r in rows], dtype=np.float64)
    labels = np.array([r[3] for r in rows], dtype=np.float64)
    order = np.argsort(ts, kind="stable")
    raw_src, raw_dst, ts, labels = raw_src[order], raw_dst[order], ts[order], labels[order]

    if config.bipartite:
        src_ids = np.unique(raw_src)
        dst_ids = np.unique(raw_dst)
        src_map = {int(x): i for i, x in enumerate(src_ids)}
        dst_map = {int(x): len(src_ids) + i for i, x in enumerate(dst_ids)}
        src = np.array([src_map[int(x)] for x in raw_src], dtype=np.int64)
        dst = np.array([dst_map[int(x)] for x in raw_dst], dtype=np.int64)
        node_count = len(src_ids) + len(dst_ids)
    else:
        all_ids = np.unique(np.concatenate([raw_src, raw_dst]))
        id_map = {int(x): i for i, x in enumerate(all_ids)}
        src = np.array([id_map[int(x)] for x in raw_src], dtype=np.int64)
        dst = np.array([id_map[int(x)] for x in raw_dst], dtype=np.int64)
        node_count = len(all_ids)

    edge_features = np.zeros((len(rows), config.edge_dim), dtype=np.float64)
    k = min(len(rows[0][4]), config.edge_dim)
    if k:
        feats = np.array([r[4] for r in rows], dtype=np.float64)[order]
        edge_features[:, :k] = feats[:, :k]

    node_features = np.zeros((node_count, config.node_dim), dtype=np.float64)
    if node_feature_source is not None:
        _fill_node_features(node_features, node_feature_source)

    return TemporalGraph(
        src, dst, ts, labels, node_count, node_features, edge_features, config.bipartite
    )


def _fill_node_features(out: np.ndarray, source: str | Path | io.TextIOBase) -> None:
    if isinstance(source, (str, Path)):
        fh = open(source, "r", newline="")
        close = True
    else:
        fh, close = source, False
    try:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                nid = int(row[0])
                vals = [float(x) for x in row[1:]]
            except ValueError as exc:
                raise IngestError(f"node features line {lineno}: {exc}") from exc
            if not 0 <= nid < out.shape[0]:
                raise IngestError(f"node features line {lineno}: unknown node id {nid}")
            k = min(len(vals), out.shape[1])
            out[nid, :k] = vals[:k]
    finally:
        if close:
            fh.close()


def repeat_ratio(g: TemporalGraph) -> float:
    """Fraction of interactions whose ordered (src, dst) pair occurred before."""
    seen: set[tuple[int, int]] = set()
    repeats = 0
    for i in range(g.interaction_count):
        pair = (int(g.src[i]), int(g.dst[i]))
        if pair in seen:
            repeats += 1
        else:
            seen.add(pair)
    return repeats / g.interaction_count


# -- binary cache -------------------------------------------------------------


def _write_array(fh: BinaryIO, arr: np.ndarray) -> None:
    data = np.ascontiguousarray(arr, dtype="<f8")
    fh.write(data.tobytes())


def save_cache(g: TemporalGraph, path: str | Path) -> None:
    """Write the little-endian RMXG cache: counts then float64 payload arrays."""
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<I", CACHE_VERSION))
        fh.write(
            struct.pack(
                "<QQQQB",
                g.node_count,
                g.interaction_count,
                g.node_features.shape[1],
                g.edge_features.shape[1],
                1 if g.bipartite else 0,
            )
        )
        _write_array(fh, g.src)
        _write_array(fh, g.dst)
        _write_array(fh, g.t)
        _write_array(fh, g.labels)
        _write_array(fh, g.node_features)
        _write_array(fh, g.edge_features)


def load_cache(path: str | Path) -> TemporalGraph:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CACHE_MAGIC:
            raise ValueError(f"not a graph cache (magic {magic!r})")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != CACHE_VERSION:
            raise ValueError(f"unsupported cache version {version}")
        n_nodes, n_edges, d_n, d_e, bip = struct.unpack("<QQQQB", fh.read(33))

        def read(count: int) -> np.ndarray:
            buf = fh.read(8 * count)
            if len(buf) != 8 * count:
                raise ValueError("truncated cache file")
            return np.frombuffer(buf, dtype="<f8").copy()

        src = read(n_edges).astype(np.int64)
        dst = read(n_edges).astype(np.int64)
        ts = read(n_edges)
        labels = read(n_edges)
        node_features = read(n_nodes * d_n).reshape(n_nodes, d_n)
        edge_features = read(n_edges * d_e).reshape(n_edges, d_e)
    return TemporalGraph(src, dst, ts, labels, n_nodes, node_features, edge_features, bool(bip))
