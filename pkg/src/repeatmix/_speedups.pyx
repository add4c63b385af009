# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled sampling kernels; semantics mirror ``_kernels_py`` exactly."""

import numpy as np

cimport numpy as cnp
from libc.stdlib cimport free, malloc, realloc

cnp.import_array()

ctypedef long long i64

NO_CAP = 1 << 62
cdef i64 _NO_CAP = 1 << 62


cdef struct Buf:
    i64* data
    Py_ssize_t size
    Py_ssize_t cap


cdef inline bint buf_push(Buf* b, i64 x) except 0:
    cdef i64* grown
    if b.size == b.cap:
        b.cap = b.cap * 2 if b.cap else 64
        grown = <i64*>realloc(b.data, b.cap * sizeof(i64))
        if grown == NULL:
            raise MemoryError()
        b.data = grown
    b.data[b.size] = x
    b.size += 1
    return 1


cdef Py_ssize_t _bisect_d(const double[::1] arr, Py_ssize_t lo, Py_ssize_t hi, double key) noexcept:
    # first index in [lo, hi) with arr[index] >= key
    cdef Py_ssize_t a = lo, b = hi, mid
    while a < b:
        mid = (a + b) // 2
        if arr[mid] < key:
            a = mid + 1
        else:
            b = mid
    return a


cdef Py_ssize_t _bisect_i(const i64[::1] arr, Py_ssize_t lo, Py_ssize_t hi, i64 key) noexcept:
    cdef Py_ssize_t a = lo, b = hi, mid
    while a < b:
        mid = (a + b) // 2
        if arr[mid] < key:
            a = mid + 1
        else:
            b = mid
    return a


cdef void _bounds(const i64[::1] offsets, const double[::1] time, const i64[::1] eidx,
                  i64 n, double t, i64 max_eidx, Py_ssize_t* lo_out, Py_ssize_t* cut_out) noexcept:
    cdef Py_ssize_t lo = offsets[n], hi = offsets[n + 1]
    cdef Py_ssize_t cut = _bisect_d(time, lo, hi, t)
    cdef Py_ssize_t cut_e
    if max_eidx < _NO_CAP:
        cut_e = _bisect_i(eidx, lo, hi, max_eidx)
        if cut_e < cut:
            cut = cut_e
    lo_out[0] = lo
    cut_out[0] = cut


cdef void _isort(i64* data, Py_ssize_t n) noexcept:
    cdef Py_ssize_t i, j
    cdef i64 key
    for i in range(1, n):
        key = data[i]
        j = i - 1
        while j >= 0 and data[j] > key:
            data[j + 1] = data[j]
            j -= 1
        data[j + 1] = key


cdef Py_ssize_t _window_collect(const i64[::1] offsets, const i64[::1] nbr,
                                const double[::1] time, const i64[::1] eidx,
                                i64 u, i64 v, double t, i64 w, i64 r, i64 max_eidx,
                                Buf* out) except -1:
    """Append ascending window positions around the last r occurrences of v."""
    cdef Py_ssize_t lo, cut
    _bounds(offsets, time, eidx, u, t, max_eidx, &lo, &cut)
    cdef Py_ssize_t i = cut - 1
    cdef Py_ssize_t found = 0
    cdef Py_ssize_t start = out.size
    cdef Py_ssize_t q, lo_w
    while i >= lo and found < r:
        if nbr[i] == v:
            found += 1
            lo_w = i - (w - 1)
            if lo_w < lo:
                lo_w = lo
            q = lo_w
            while q < i:
                buf_push(out, q)
                q += 1
        i -= 1
    _isort(out.data + start, out.size - start)
    return out.size - start


cdef void _recent_fill(const i64[::1] offsets, const double[::1] time, const i64[::1] eidx,
                       i64 n, double t, i64 k, i64 max_eidx, Buf* out) except *:
    cdef Py_ssize_t lo, cut
    _bounds(offsets, time, eidx, n, t, max_eidx, &lo, &cut)
    cdef Py_ssize_t start = cut - k
    if start < lo:
        start = lo
    cdef Py_ssize_t i
    for i in range(start, cut):
        buf_push(out, i)


cdef bint _first_order_buf(const i64[::1] offsets, const i64[::1] nbr,
                           const double[::1] time, const i64[::1] eidx,
                           i64 u, i64 v, double t, i64 k, i64 w, i64 r, i64 max_eidx,
                           Buf* out) except? -1:
    """Fill with the final first-order selection; True when recent fallback used."""
    cdef Py_ssize_t got = _window_collect(offsets, nbr, time, eidx, u, v, t, w, r, max_eidx, out)
    cdef Py_ssize_t i
    if got == 0:
        _recent_fill(offsets, time, eidx, u, t, k, max_eidx, out)
        return True
    if got > k:  # keep the most recent k (tail of the ascending segment)
        for i in range(k):
            out.data[out.size - got + i] = out.data[out.size - k + i]
        out.size -= got - k
    return False


cdef object _as_array(Buf* b):
    cdef cnp.ndarray[cnp.int64_t, ndim=1] arr = np.empty(b.size, dtype=np.int64)
    cdef Py_ssize_t i
    for i in range(b.size):
        arr[i] = b.data[i]
    return arr


def recent_indices(const i64[::1] offsets, const i64[::1] nbr, const double[::1] time,
                   const i64[::1] eidx, i64 n, double t, i64 k, i64 max_eidx=NO_CAP):
    cdef Py_ssize_t lo, cut
    _bounds(offsets, time, eidx, n, t, max_eidx, &lo, &cut)
    cdef Py_ssize_t start = cut - k
    if start < lo:
        start = lo
    return np.arange(start, cut, dtype=np.int64)


def first_order_indices(const i64[::1] offsets, const i64[::1] nbr, const double[::1] time,
                        const i64[::1] eidx, i64 u, i64 v, double t, i64 k, i64 w, i64 r,
                        i64 max_eidx=NO_CAP):
    cdef Buf buf
    buf.data = NULL
    buf.size = 0
    buf.cap = 0
    try:
        fell_back = _first_order_buf(offsets, nbr, time, eidx, u, v, t, k, w, r, max_eidx, &buf)
        return _as_array(&buf), bool(fell_back)
    finally:
        free(buf.data)


def second_order_indices(const i64[::1] offsets, const i64[::1] nbr, const double[::1] time,
                         const i64[::1] eidx, i64 u, i64 v, double t, i64 k, i64 w, i64 r,
                         i64 m, i64 max_eidx=NO_CAP):
    cdef Buf a_buf, v_buf, col
    cdef Py_ssize_t i, j, n_j, n_m
    cdef i64 c
    cdef bint seen
    a_buf.data = NULL; a_buf.size = 0; a_buf.cap = 0
    v_buf.data = NULL; v_buf.size = 0; v_buf.cap = 0
    col.data = NULL; col.size = 0; col.cap = 0
    cdef i64* j_nodes = NULL
    cdef i64* m_nodes = NULL
    try:
        _first_order_buf(offsets, nbr, time, eidx, u, v, t, k, w, r, max_eidx, &a_buf)
        _first_order_buf(offsets, nbr, time, eidx, v, u, t, k, w, r, max_eidx, &v_buf)

        # J: most recent m distinct counterparts of v's first-order sequence
        j_nodes = <i64*>malloc(m * sizeof(i64)) if m > 0 else NULL
        n_j = 0
        for i in range(v_buf.size - 1, -1, -1):
            c = nbr[v_buf.data[i]]
            seen = False
            for j in range(n_j):
                if j_nodes[j] == c:
                    seen = True
                    break
            if not seen:
                j_nodes[n_j] = c
                n_j += 1
                if n_j == m:
                    break

        # distinct counterparts of u's first-order sequence
        m_nodes = <i64*>malloc(a_buf.size * sizeof(i64)) if a_buf.size > 0 else NULL
        n_m = 0
        for i in range(a_buf.size):
            c = nbr[a_buf.data[i]]
            seen = False
            for j in range(n_m):
                if m_nodes[j] == c:
                    seen = True
                    break
            if not seen:
                m_nodes[n_m] = c
                n_m += 1

        for i in range(n_m):
            for j in range(n_j):
                _window_collect(offsets, nbr, time, eidx, m_nodes[i], j_nodes[j], t, w, r,
                                max_eidx, &col)

        if col.size == 0:
            _recent_fill(offsets, time, eidx, u, t, k, max_eidx, &col)
            return _as_array(&col), True

        allidx = _as_array(&col)
        nbr_np = np.asarray(nbr)
        eidx_np = np.asarray(eidx)
        order = np.lexsort((nbr_np[allidx], eidx_np[allidx]))
        allidx = allidx[order]
        if len(allidx) > k:
            allidx = allidx[len(allidx) - k:]
        return allidx, False
    finally:
        free(a_buf.data)
        free(v_buf.data)
        free(col.data)
        free(j_nodes)
        free(m_nodes)


# -- fused elementwise kernels for the mixer -----------------------------------

from cython.parallel cimport prange
from libc.math cimport erf as c_erf, exp as c_exp

cdef double _INV_SQRT2 = 0.7071067811865476
cdef double _INV_SQRT_2PI = 0.3989422804014327


def gelu_cdf_inplace(double[::1] x, double[::1] act, double[::1] cdf):
    """act = x * Phi(x); cdf = Phi(x). One fused pass, exact erf form."""
    cdef Py_ssize_t i, n = x.shape[0]
    cdef double c
    for i in prange(n, nogil=True, schedule='static'):
        c = 0.5 * (1.0 + c_erf(x[i] * _INV_SQRT2))
        cdf[i] = c
        act[i] = x[i] * c


def gelu_vjp_inplace(double[::1] x, double[::1] cdf, double[::1] dout, double[::1] dx):
    """dx = dout * (Phi(x) + x * pdf(x)), reusing the forward CDF."""
    cdef Py_ssize_t i, n = x.shape[0]
    for i in prange(n, nogil=True, schedule='static'):
        dx[i] = dout[i] * (cdf[i] + x[i] * _INV_SQRT_2PI * c_exp(-0.5 * x[i] * x[i]))
