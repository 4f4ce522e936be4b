"""Pure-Python sweeps, used when the compiled extension is unavailable.

Operation order matches ``_kernels.pyx`` exactly; keep them in sync.
"""
import heapq
import math

import numpy as np

FAR, NARROW, FROZEN = 0, 1, 2


def _edge(V, p, q):
    dx = V[p][0] - V[q][0]
    dy = V[p][1] - V[q][1]
    dz = V[p][2] - V[q][2]
    return math.sqrt(dx * dx + dy * dy + dz * dz)


def _tri_update(V, c, a, b, ua, ub):
    vc, va, vb = V[c], V[a], V[b]
    e1x, e1y, e1z = va[0] - vc[0], va[1] - vc[1], va[2] - vc[2]
    e2x, e2y, e2z = vb[0] - vc[0], vb[1] - vc[1], vb[2] - vc[2]
    g00 = e1x * e1x + e1y * e1y + e1z * e1z
    g11 = e2x * e2x + e2y * e2y + e2z * e2z
    g01 = e1x * e2x + e1y * e2y + e1z * e2z
    det = g00 * g11 - g01 * g01
    if det <= 1e-12 * g00 * g11:
        return None
    delta = ub - ua
    qa = g00 + g11 - 2.0 * g01
    qb = (g00 - g01) * delta
    qc = g00 * delta * delta - det
    disc = qb * qb - qa * qc
    if disc < 0.0:
        return None
    tau = (qb + math.sqrt(disc)) / qa
    if tau < 0.0 or tau < delta:
        return None
    w0 = g11 * tau - g01 * (tau - delta)
    w1 = g00 * (tau - delta) - g01 * tau
    if w0 < 0.0 or w1 < 0.0:
        return None
    return ua + tau, (a if w0 >= w1 else b)


def fmm(vertices, faces, vf_ptr, vf_idx, seeds, seed_vals):
    n = len(vertices)
    V = vertices.tolist()
    F = faces.tolist()
    ptr = vf_ptr.tolist()
    idx = vf_idx.tolist()
    dist = [math.inf] * n
    state = [FAR] * n
    pred = [-1] * n
    fixed = [False] * n
    heap = []
    seeds = seeds.tolist()
    for k, (x, val) in enumerate(zip(seeds, seed_vals.tolist())):
        dist[x] = val
        pred[x] = seeds[0] if k > 0 else -1
        state[x] = NARROW
        fixed[x] = True
        heapq.heappush(heap, (val, x))
    while heap:
        key, a = heapq.heappop(heap)
        if state[a] == FROZEN or key != dist[a]:
            continue
        state[a] = FROZEN
        da = dist[a]
        for k in range(ptr[a], ptr[a + 1]):
            tv = F[idx[k]]
            for x in tv:
                if x == a or state[x] == FROZEN or fixed[x]:
                    continue
                y = tv[0] + tv[1] + tv[2] - a - x
                t = da + _edge(V, a, x)
                p = a
                if state[y] == FROZEN:
                    res = _tri_update(V, x, a, y, da, dist[y])
                    if res is not None and res[0] < t:
                        t, p = res
                if t < dist[x]:
                    dist[x] = t
                    pred[x] = p
                    state[x] = NARROW
                    heapq.heappush(heap, (t, x))
    return (np.array(dist, dtype=np.float64), np.array(state, dtype=np.int8),
            np.array(pred, dtype=np.int32))


def dijkstra(nb_ptr, nb_idx, nb_w, source):
    n = len(nb_ptr) - 1
    ptr = nb_ptr.tolist()
    idx = nb_idx.tolist()
    w = nb_w.tolist()
    dist = [math.inf] * n
    state = [FAR] * n
    pred = [-1] * n
    dist[source] = 0.0
    state[source] = NARROW
    heap = [(0.0, source)]
    while heap:
        key, a = heapq.heappop(heap)
        if state[a] == FROZEN or key != dist[a]:
            continue
        state[a] = FROZEN
        for k in range(ptr[a], ptr[a + 1]):
            x = idx[k]
            if state[x] == FROZEN:
                continue
            t = dist[a] + w[k]
            if t < dist[x]:
                dist[x] = t
                pred[x] = a
                state[x] = NARROW
                heapq.heappush(heap, (t, x))
    return (np.array(dist, dtype=np.float64), np.array(state, dtype=np.int8),
            np.array(pred, dtype=np.int32))
