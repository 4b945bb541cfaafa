# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled counting kernels.

Every function here has a numpy twin in ``_pykernels`` with the same
signature and the same integer results; ``nubesim.kernels`` picks one at
import time.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()

ctypedef cnp.int64_t i64
ctypedef cnp.uint64_t u64


def pair_counts(const double[:, ::1] points, const i64[::1] offsets, double radius):
    """Pairs at distance in (0, radius] inside each sample block."""
    cdef Py_ssize_t n_blocks = offsets.shape[0] - 1
    cdef Py_ssize_t dim = points.shape[1]
    cdef double r2 = radius * radius
    cdef Py_ssize_t b, i, j, a, lo, hi
    cdef double d2, diff
    cdef i64 count
    out = np.zeros(n_blocks, dtype=np.int64)
    cdef i64[::1] res = out
    for b in range(n_blocks):
        lo = offsets[b]
        hi = offsets[b + 1]
        count = 0
        for i in range(lo, hi):
            for j in range(i + 1, hi):
                d2 = 0.0
                for a in range(dim):
                    diff = points[i, a] - points[j, a]
                    d2 += diff * diff
                if d2 > 0.0 and d2 <= r2:
                    count += 1
        res[b] = count
    return out


def neighbor_counts(const double[:, ::1] points, const i64[::1] offsets,
                    const double[:, ::1] queries, double radius):
    """For each block and query point, the number of block points in (0, radius]."""
    cdef Py_ssize_t n_blocks = offsets.shape[0] - 1
    cdef Py_ssize_t n_q = queries.shape[0]
    cdef Py_ssize_t dim = points.shape[1]
    cdef double r2 = radius * radius
    cdef Py_ssize_t b, i, q, a
    cdef double d2, diff
    out = np.zeros((n_blocks, n_q), dtype=np.int64)
    cdef i64[:, ::1] res = out
    for b in range(n_blocks):
        for i in range(offsets[b], offsets[b + 1]):
            for q in range(n_q):
                d2 = 0.0
                for a in range(dim):
                    diff = points[i, a] - queries[q, a]
                    d2 += diff * diff
                if d2 > 0.0 and d2 <= r2:
                    res[b, q] += 1
    return out


cdef i64 _extend(Py_ssize_t pos, Py_ssize_t q, Py_ssize_t n,
                 const cnp.uint8_t[:, ::1] adj, const i64[::1] indptr,
                 const i64[::1] indices, const cnp.uint8_t[:, ::1] pat,
                 const i64[::1] order, const i64[::1] anchor,
                 const i64[::1] fixed, i64[::1] image, cnp.uint8_t[::1] used) nogil:
    cdef Py_ssize_t v, u, t, k, lo, hi, c
    cdef i64 total = 0
    cdef bint ok
    if pos == q:
        return 1
    v = order[pos]
    if fixed[v] >= 0:
        lo = 0
        hi = 1
    elif anchor[pos] >= 0:
        lo = indptr[image[anchor[pos]]]
        hi = indptr[image[anchor[pos]] + 1]
    else:
        lo = 0
        hi = n
    for k in range(lo, hi):
        if fixed[v] >= 0:
            c = fixed[v]
        elif anchor[pos] >= 0:
            c = indices[k]
        else:
            c = k
        if used[c]:
            continue
        ok = True
        for t in range(pos):
            u = order[t]
            if pat[u, v] and not adj[image[u], c]:
                ok = False
                break
        if not ok:
            continue
        used[c] = 1
        image[v] = c
        total += _extend(pos + 1, q, n, adj, indptr, indices, pat, order,
                         anchor, fixed, image, used)
        used[c] = 0
    return total


def count_embeddings(const cnp.uint8_t[:, ::1] adj, const i64[::1] indptr,
                     const i64[::1] indices, const cnp.uint8_t[:, ::1] pattern,
                     const i64[::1] order, const i64[::1] anchor, const i64[::1] fixed):
    """Injective edge-preserving maps of the pattern into the graph.

    ``order`` lists pattern vertices in visiting order, ``anchor[i]`` is an
    earlier pattern vertex adjacent to ``order[i]`` (or -1), and ``fixed[v]``
    pins vertex ``v`` to a graph node (or -1).
    """
    cdef Py_ssize_t n = adj.shape[0]
    cdef Py_ssize_t q = pattern.shape[0]
    image_arr = np.full(q, -1, dtype=np.int64)
    used_arr = np.zeros(max(n, 1), dtype=np.uint8)
    cdef i64[::1] image = image_arr
    cdef cnp.uint8_t[::1] used = used_arr
    cdef i64 total
    with nogil:
        total = _extend(0, q, n, adj, indptr, indices, pattern, order, anchor,
                        fixed, image, used)
    return int(total)


def triangle_counts(const cnp.int8_t[:, ::1] bits, Py_ssize_t n):
    """Triangles in each graph whose edge slots (i<j, lexicographic) are +1."""
    cdef Py_ssize_t n_graphs = bits.shape[0]
    cdef Py_ssize_t g, i, j, k, slot
    cdef i64 count
    cdef u64 common
    out = np.zeros(n_graphs, dtype=np.int64)
    cdef i64[::1] res = out
    if n > 64:
        raise ValueError("bitset triangle kernel supports n <= 64")
    rows_arr = np.zeros(max(n, 1), dtype=np.uint64)
    cdef u64[::1] rows = rows_arr
    for g in range(n_graphs):
        for i in range(n):
            rows[i] = 0
        slot = 0
        for i in range(n):
            for j in range(i + 1, n):
                if bits[g, slot] > 0:
                    rows[i] |= (<u64>1) << j
                    rows[j] |= (<u64>1) << i
                slot += 1
        count = 0
        for i in range(n):
            for j in range(i + 1, n):
                if (rows[i] >> j) & 1:
                    # k > j only, so each triangle is seen once
                    common = rows[i] & rows[j]
                    if j + 1 < 64:
                        common = common >> (j + 1)
                    else:
                        common = 0
                    while common:
                        common &= common - 1
                        count += 1
        res[g] = count
    return out
