# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled front-propagation sweeps.

Mirrors ``_fallback.py`` operation for operation so both backends produce
bit-identical fields. Heap entries are ordered by (key, vertex) to make the
freeze order total.
"""
import numpy as np

from libc.math cimport sqrt, INFINITY
from libc.stdlib cimport malloc, realloc, free

ctypedef signed char state_t

cdef enum:
    FAR = 0
    NARROW = 1
    FROZEN = 2


cdef struct Heap:
    double* keys
    int* nodes
    Py_ssize_t size
    Py_ssize_t cap


cdef inline bint _lt(double k1, int n1, double k2, int n2) noexcept nogil:
    return k1 < k2 or (k1 == k2 and n1 < n2)


cdef int _heap_init(Heap* h, Py_ssize_t cap) noexcept nogil:
    h.keys = <double*> malloc(cap * sizeof(double))
    h.nodes = <int*> malloc(cap * sizeof(int))
    h.size = 0
    h.cap = cap
    return 0 if (h.keys != NULL and h.nodes != NULL) else -1


cdef void _heap_free(Heap* h) noexcept nogil:
    free(h.keys)
    free(h.nodes)


cdef int _heap_push(Heap* h, double key, int node) noexcept nogil:
    cdef Py_ssize_t i, parent
    cdef double* nk
    cdef int* nn
    if h.size == h.cap:
        nk = <double*> realloc(h.keys, 2 * h.cap * sizeof(double))
        if nk == NULL:
            return -1
        h.keys = nk
        nn = <int*> realloc(h.nodes, 2 * h.cap * sizeof(int))
        if nn == NULL:
            return -1
        h.nodes = nn
        h.cap *= 2
    i = h.size
    h.size += 1
    while i > 0:
        parent = (i - 1) >> 1
        if _lt(key, node, h.keys[parent], h.nodes[parent]):
            h.keys[i] = h.keys[parent]
            h.nodes[i] = h.nodes[parent]
            i = parent
        else:
            break
    h.keys[i] = key
    h.nodes[i] = node
    return 0


cdef void _heap_pop(Heap* h, double* key, int* node) noexcept nogil:
    cdef Py_ssize_t i = 0, child
    cdef double lk
    cdef int ln
    key[0] = h.keys[0]
    node[0] = h.nodes[0]
    h.size -= 1
    if h.size == 0:
        return
    lk = h.keys[h.size]
    ln = h.nodes[h.size]
    while True:
        child = 2 * i + 1
        if child >= h.size:
            break
        if child + 1 < h.size and _lt(h.keys[child + 1], h.nodes[child + 1],
                                      h.keys[child], h.nodes[child]):
            child += 1
        if _lt(h.keys[child], h.nodes[child], lk, ln):
            h.keys[i] = h.keys[child]
            h.nodes[i] = h.nodes[child]
            i = child
        else:
            break
    h.keys[i] = lk
    h.nodes[i] = ln


cdef inline double _edge(const double[:, ::1] V, int p, int q) noexcept nogil:
    cdef double dx = V[p, 0] - V[q, 0]
    cdef double dy = V[p, 1] - V[q, 1]
    cdef double dz = V[p, 2] - V[q, 2]
    return sqrt(dx * dx + dy * dy + dz * dz)


cdef bint _tri_update(const double[:, ::1] V, int c, int a, int b,
                      double ua, double ub, double* out, int* pred) noexcept nogil:
    # Planar wavefront through frozen a, b reaching c at unit speed.
    cdef double e1x = V[a, 0] - V[c, 0]
    cdef double e1y = V[a, 1] - V[c, 1]
    cdef double e1z = V[a, 2] - V[c, 2]
    cdef double e2x = V[b, 0] - V[c, 0]
    cdef double e2y = V[b, 1] - V[c, 1]
    cdef double e2z = V[b, 2] - V[c, 2]
    cdef double g00 = e1x * e1x + e1y * e1y + e1z * e1z
    cdef double g11 = e2x * e2x + e2y * e2y + e2z * e2z
    cdef double g01 = e1x * e2x + e1y * e2y + e1z * e2z
    cdef double det = g00 * g11 - g01 * g01
    cdef double delta, qa, qb, qc, disc, tau, w0, w1
    if det <= 1e-12 * g00 * g11:
        return False
    delta = ub - ua
    qa = g00 + g11 - 2.0 * g01
    qb = (g00 - g01) * delta
    qc = g00 * delta * delta - det
    disc = qb * qb - qa * qc
    if disc < 0.0:
        return False
    tau = (qb + sqrt(disc)) / qa
    if tau < 0.0 or tau < delta:
        return False
    w0 = g11 * tau - g01 * (tau - delta)
    w1 = g00 * (tau - delta) - g01 * tau
    if w0 < 0.0 or w1 < 0.0:
        return False
    out[0] = ua + tau
    pred[0] = a if w0 >= w1 else b
    return True


cdef int _fmm_core(const double[:, ::1] V, const int[:, ::1] F,
                   const int[::1] vf_ptr, const int[::1] vf_idx,
                   const int[::1] seeds, const double[::1] seed_vals,
                   double[::1] dist, state_t[::1] state, int[::1] pred,
                   state_t[::1] fixed) noexcept nogil:
    cdef Heap h
    cdef double key, t, tri
    cdef int a, f, k, j, x, y, p, tp
    cdef int[3] tv
    if _heap_init(&h, 4 * dist.shape[0] + 16) != 0:
        return -1
    for k in range(seeds.shape[0]):
        x = seeds[k]
        dist[x] = seed_vals[k]
        pred[x] = seeds[0] if k > 0 else -1
        state[x] = NARROW
        fixed[x] = 1
        _heap_push(&h, seed_vals[k], x)
    while h.size > 0:
        _heap_pop(&h, &key, &a)
        if state[a] == FROZEN or key != dist[a]:
            continue
        state[a] = FROZEN
        for k in range(vf_ptr[a], vf_ptr[a + 1]):
            f = vf_idx[k]
            tv[0] = F[f, 0]
            tv[1] = F[f, 1]
            tv[2] = F[f, 2]
            for j in range(3):
                x = tv[j]
                if x == a or state[x] == FROZEN or fixed[x]:
                    continue
                y = tv[0] + tv[1] + tv[2] - a - x
                t = dist[a] + _edge(V, a, x)
                p = a
                if state[y] == FROZEN:
                    if _tri_update(V, x, a, y, dist[a], dist[y], &tri, &tp):
                        if tri < t:
                            t = tri
                            p = tp
                if t < dist[x]:
                    dist[x] = t
                    pred[x] = p
                    state[x] = NARROW
                    if _heap_push(&h, t, x) != 0:
                        _heap_free(&h)
                        return -1
    _heap_free(&h)
    return 0


cdef int _dijkstra_core(const int[::1] nb_ptr, const int[::1] nb_idx,
                        const double[::1] nb_w, int source,
                        double[::1] dist, state_t[::1] state, int[::1] pred) noexcept nogil:
    cdef Heap h
    cdef double key, t
    cdef int a, k, x
    if _heap_init(&h, 4 * dist.shape[0] + 16) != 0:
        return -1
    dist[source] = 0.0
    state[source] = NARROW
    _heap_push(&h, 0.0, source)
    while h.size > 0:
        _heap_pop(&h, &key, &a)
        if state[a] == FROZEN or key != dist[a]:
            continue
        state[a] = FROZEN
        for k in range(nb_ptr[a], nb_ptr[a + 1]):
            x = nb_idx[k]
            if state[x] == FROZEN:
                continue
            t = dist[a] + nb_w[k]
            if t < dist[x]:
                dist[x] = t
                pred[x] = a
                state[x] = NARROW
                if _heap_push(&h, t, x) != 0:
                    _heap_free(&h)
                    return -1
    _heap_free(&h)
    return 0


def _alloc(Py_ssize_t n):
    return (np.full(n, np.inf), np.zeros(n, dtype=np.int8),
            np.full(n, -1, dtype=np.int32))


def fmm(const double[:, ::1] vertices, const int[:, ::1] faces,
        const int[::1] vf_ptr, const int[::1] vf_idx,
        const int[::1] seeds, const double[::1] seed_vals):
    """Unit-speed fast marching; ``seeds[0]`` is the source.

    Seeded vertices keep their given values. Returns (dist, state, pred).
    """
    dist, state, pred = _alloc(vertices.shape[0])
    fixed_arr = np.zeros(vertices.shape[0], dtype=np.int8)
    cdef double[::1] d = dist
    cdef state_t[::1] s = state
    cdef int[::1] p = pred
    cdef state_t[::1] fx = fixed_arr
    cdef int rc
    with nogil:
        rc = _fmm_core(vertices, faces, vf_ptr, vf_idx, seeds, seed_vals, d, s, p, fx)
    if rc != 0:
        raise MemoryError("heap allocation failed")
    return dist, state, pred


def dijkstra(const int[::1] nb_ptr, const int[::1] nb_idx,
             const double[::1] nb_w, int source):
    """Edge-graph shortest paths from ``source``; returns (dist, state, pred)."""
    dist, state, pred = _alloc(nb_ptr.shape[0] - 1)
    cdef double[::1] d = dist
    cdef state_t[::1] s = state
    cdef int[::1] p = pred
    cdef int rc
    with nogil:
        rc = _dijkstra_core(nb_ptr, nb_idx, nb_w, source, d, s, p)
    if rc != 0:
        raise MemoryError("heap allocation failed")
    return dist, state, pred
