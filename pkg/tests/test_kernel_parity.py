"""The compiled and pure-Python kernels must agree entry-for-entry."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import graph_from_stream
from oracles import random_stream

from repeatmix.sampling import kernels
from repeatmix.sampling._kernels_py import NO_CAP

pytestmark = pytest.mark.skipif(
    "cython" not in kernels.available_backends(),
    reason="compiled backend not built",
)


def _arrays(g):
    return g.hist_offsets, g.hist_nbr, g.hist_time, g.hist_eidx


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_backends_agree(seed):
    rng = np.random.default_rng(seed)
    src, dst, ts = random_stream(rng, max_nodes=25, max_edges=250)
    g = graph_from_stream(src, dst, ts)
    py = kernels.get_backend("python")
    cy = kernels.get_backend("cython")
    k = int(rng.integers(1, 17))
    w = int(rng.integers(1, 6))
    r = int(rng.integers(1, 11))
    m = int(rng.integers(1, 6))
    for _ in range(8):
        u = int(rng.integers(g.node_count))
        v = int(rng.integers(g.node_count))
        t = float(rng.uniform(0, ts.max() * 1.1))
        cap = NO_CAP if rng.random() < 0.5 else int(rng.integers(g.interaction_count + 1))
        a = py.recent_indices(*_arrays(g), u, t, k, cap)
        b = cy.recent_indices(*_arrays(g), u, t, k, cap)
        assert np.array_equal(a, b)
        a, fa = py.first_order_indices(*_arrays(g), u, v, t, k, w, r, cap)
        b, fb = cy.first_order_indices(*_arrays(g), u, v, t, k, w, r, cap)
        assert np.array_equal(a, b) and fa == fb
        a, fa = py.second_order_indices(*_arrays(g), u, v, t, k, w, r, m, cap)
        b, fb = cy.second_order_indices(*_arrays(g), u, v, t, k, w, r, m, cap)
        assert np.array_equal(a, b) and fa == fb


def test_backend_selection_env():
    assert kernels.active_name in kernels.available_backends()
    assert set(kernels.available_backends()) == {"python", "cython"}


def test_no_ext_env_forces_python(tmp_path):
    import subprocess
    import sys

    code = (
        "from repeatmix.sampling import kernels; "
        "print(kernels.active_name)"
    )
    out = subprocess.run(
        [sys.executable, "-c", code],
        env={"PATH": "/usr/bin:/bin", "REPEATMIX_NO_EXT": "1"},
        capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "python"
