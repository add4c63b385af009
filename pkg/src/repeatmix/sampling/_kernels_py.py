"""Pure-Python sampling kernels (fallback backend).

Each kernel works on the graph's flat history arrays (CSR layout) and returns
global indices into those arrays, already in chronological order and truncated
to the requested length. The compiled backend in ``_speedups.pyx`` implements
the same contracts; ``tests/test_kernel_parity.py`` pins them together.

Chronological order is edge-index order: global timestamps are non-decreasing
in edge index, so sorting by edge index is exactly (t, edge_index) order.

``max_eidx`` caps visibility at a global edge index (exclusive); training uses
it to hide the current batch from the samplers. ``NO_CAP`` disables it.
"""

from __future__ import annotations

import numpy as np

NO_CAP = 1 << 62


def _cut(offsets, time, eidx, n, t, max_eidx):
    """History bounds for node n: (lo, first index at/after t or max_eidx)."""
    lo, hi = int(offsets[n]), int(offsets[n + 1])
    cut = lo + int(np.searchsorted(time[lo:hi], t, side="left"))
    if max_eidx < NO_CAP:
        cut_e = lo + int(np.searchsorted(eidx[lo:hi], max_eidx, side="left"))
        cut = min(cut, cut_e)
    return lo, cut


def recent_indices(offsets, nbr, time, eidx, n, t, k, max_eidx=NO_CAP):
    """Indices of the last min(k, H) history entries of node n before time t."""
    lo, cut = _cut(offsets, time, eidx, n, t, max_eidx)
    start = max(lo, cut - k)
    return np.arange(start, cut, dtype=np.int64)


def _window_collect(offsets, nbr, time, eidx, u, v, t, w, r, max_eidx):
    """Window predecessors around the most recent r occurrences of v in u's history.

    Returns ascending positions (global indices into u's slice), duplicates
    kept when windows overlap, or None when nothing was collected.
    """
    lo, cut = _cut(offsets, time, eidx, u, t, max_eidx)
    occ = []
    i = cut - 1
    while i >= lo and len(occ) < r:
        if nbr[i] == v:
            occ.append(i)
        i -= 1
    if not occ:
        return None
    collected: list[int] = []
    for p in occ:  # newest occurrence first; final order fixed by the sort below
        collected.extend(range(max(lo, p - (w - 1)), p))
    if not collected:
        return None
    collected.sort()
    return np.array(collected, dtype=np.int64)


def first_order_indices(offsets, nbr, time, eidx, u, v, t, k, w, r, max_eidx=NO_CAP):
    """Repeat-aware first-order selection for query node u against counterpart v.

    Returns (indices, fell_back): window predecessors of v-occurrences,
    chronological, truncated to the most recent k; falls back to the recent
    tail when the collected multiset is empty.
    """
    col = _window_collect(offsets, nbr, time, eidx, u, v, t, w, r, max_eidx)
    if col is None:
        return recent_indices(offsets, nbr, time, eidx, u, t, k, max_eidx), True
    if len(col) > k:
        col = col[len(col) - k :]
    return col, False


def second_order_indices(offsets, nbr, time, eidx, u, v, t, k, w, r, m, max_eidx=NO_CAP):
    """Repeat-aware second-order selection for u against v.

    The repeat-aware node set J holds the most recent m distinct counterparts
    of v's first-order sequence; for every distinct counterpart of u's
    first-order sequence the same occurrence-window rule is applied against
    each j in J inside that node's history. Falls back to u's recent tail when
    the union is empty.
    """
    a_idx, _ = first_order_indices(offsets, nbr, time, eidx, u, v, t, k, w, r, max_eidx)
    v_idx, _ = first_order_indices(offsets, nbr, time, eidx, v, u, t, k, w, r, max_eidx)

    j_nodes: list[int] = []
    seen_j: set[int] = set()
    for gi in v_idx[::-1]:
        c = int(nbr[gi])
        if c not in seen_j:
            seen_j.add(c)
            j_nodes.append(c)
            if len(j_nodes) == m:
                break

    m_nodes: list[int] = []
    seen_m: set[int] = set()
    for gi in a_idx:
        c = int(nbr[gi])
        if c not in seen_m:
            seen_m.add(c)
            m_nodes.append(c)

    chunks = []
    for mn in m_nodes:
        for j in j_nodes:
            col = _window_collect(offsets, nbr, time, eidx, mn, j, t, w, r, max_eidx)
            if col is not None:
                chunks.append(col)
    if not chunks:
        return recent_indices(offsets, nbr, time, eidx, u, t, k, max_eidx), True
    allidx = np.concatenate(chunks)
    # entries now span several histories: order by (edge index, counterpart)
    order = np.lexsort((nbr[allidx], eidx[allidx]))
    allidx = allidx[order]
    if len(allidx) > k:
        allidx = allidx[len(allidx) - k :]
    return allidx, False
