# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the two hot kernels.

Mirrors bustree._kernels_py exactly: same contracts, same tie rules, and the
same sequential accumulation order, so outputs are bit-identical.
"""

import numpy as np


BACKEND = "compiled"


cdef inline bint _worse(double sa, int ia, double sb, int ib) nogil:
    # row a ranks strictly below row b: lower score, or same score and larger item
    if sa != sb:
        return sa < sb
    return ia > ib


cdef void _sift_down(long long* heap, double[::1] scores, int[::1] items,
                     Py_ssize_t start, Py_ssize_t size) nogil:
    cdef Py_ssize_t root = start, child
    cdef long long tmp
    while 2 * root + 1 < size:
        child = 2 * root + 1
        if child + 1 < size and _worse(scores[heap[child + 1]], items[heap[child + 1]],
                                       scores[heap[child]], items[heap[child]]):
            child += 1
        if _worse(scores[heap[child]], items[heap[child]],
                  scores[heap[root]], items[heap[root]]):
            tmp = heap[root]
            heap[root] = heap[child]
            heap[child] = tmp
            root = child
        else:
            return


def select_topk(long long[::1] group_offsets, int[::1] items, double[::1] scores,
                long long k):
    """Per-group top-k rows by (score desc, item asc); see the python backend."""
    cdef Py_ssize_t n_groups = group_offsets.shape[0] - 1
    cdef Py_ssize_t n_rows = <Py_ssize_t> group_offsets[n_groups]

    out_offsets_arr = np.zeros(n_groups + 1, dtype=np.int64)
    cdef long long[::1] out_offsets = out_offsets_arr
    if n_rows == 0 or k <= 0:
        return out_offsets_arr, np.empty(0, dtype=np.int64)

    cdef Py_ssize_t g, lo, hi, size, taken, total = 0
    for g in range(n_groups):
        size = <Py_ssize_t> (group_offsets[g + 1] - group_offsets[g])
        taken = size if size < k else <Py_ssize_t> k
        total += taken
        out_offsets[g + 1] = total

    row_indices_arr = np.empty(total, dtype=np.int64)
    cdef long long[::1] row_indices = row_indices_arr

    heap_arr = np.empty(<Py_ssize_t> k, dtype=np.int64)
    cdef long long[::1] heap_mv = heap_arr
    cdef long long* heap = &heap_mv[0]

    cdef Py_ssize_t r, h, out_base
    cdef long long tmp
    with nogil:
        for g in range(n_groups):
            lo = <Py_ssize_t> group_offsets[g]
            hi = <Py_ssize_t> group_offsets[g + 1]
            size = hi - lo
            if size == 0:
                continue
            taken = size if size < k else <Py_ssize_t> k
            # min-heap of kept rows, root = current worst
            for h in range(taken):
                heap[h] = lo + h
            for h in range((taken - 2) // 2, -1, -1):
                _sift_down(heap, scores, items, h, taken)
            for r in range(lo + taken, hi):
                if _worse(scores[heap[0]], items[heap[0]], scores[r], items[r]):
                    heap[0] = r
                    _sift_down(heap, scores, items, 0, taken)
            # drain worst-first, writing ranks back to front
            out_base = <Py_ssize_t> out_offsets[g]
            for h in range(taken - 1, -1, -1):
                row_indices[out_base + h] = heap[0]
                heap[0] = heap[h]
                _sift_down(heap, scores, items, 0, h)
    return out_offsets_arr, row_indices_arr


def dcg_scatter(long long[::1] pred_keys, double[::1] pred_disc,
                long long[::1] q_keys, double[::1] q_weights,
                int[::1] q_user, long long n_users):
    """Per-user sum of weight*disc over query rows matching a predicted key."""
    out_arr = np.zeros(n_users if n_users > 0 else 0, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t n_pred = pred_keys.shape[0]
    cdef Py_ssize_t n_q = q_keys.shape[0]
    if n_pred == 0 or n_q == 0:
        return out_arr

    cdef Py_ssize_t r, lo, hi, mid
    cdef long long key
    with nogil:
        for r in range(n_q):
            key = q_keys[r]
            lo = 0
            hi = n_pred
            while lo < hi:
                mid = (lo + hi) // 2
                if pred_keys[mid] < key:
                    lo = mid + 1
                else:
                    hi = mid
            if lo < n_pred and pred_keys[lo] == key:
                out[q_user[r]] += q_weights[r] * pred_disc[lo]
    return out_arr
