"""Compiled loop kernels. Signatures mirror :mod:`rectflow.kernels._numpy`."""

import numpy as np
from numba import njit


@njit(cache=True)
def mixture_velocity(z, means, inv_var, coef, drift, const):
    n, d = z.shape
    m = means.shape[0]
    out = np.zeros((n, d))
    logw = np.empty(m)
    for i in range(n):
        top = -np.inf
        for k in range(m):
            acc = const[k]
            for c in range(d):
                diff = z[i, c] - means[k, c]
                acc -= 0.5 * diff * diff * inv_var[k, c]
            logw[k] = acc
            if acc > top:
                top = acc
        total = 0.0
        for k in range(m):
            logw[k] = np.exp(logw[k] - top)
            total += logw[k]
        for k in range(m):
            w = logw[k] / total
            for c in range(d):
                out[i, c] += w * (drift[k, c] + coef[k, c] * (z[i, c] - means[k, c]))
    return out


@njit(cache=True)
def _kth_smallest(vals, scratch, k):
    # Hoare quickselect with a median-of-three pivot on a scratch copy
    n = vals.shape[0]
    for j in range(n):
        scratch[j] = vals[j]
    lo, hi = 0, n - 1
    while hi > lo:
        mid = (lo + hi) >> 1
        a, b, c = scratch[lo], scratch[mid], scratch[hi]
        if a > b:
            a, b = b, a
        if b > c:
            b = c
            if a > b:
                b = a
        pivot = b
        i, j = lo, hi
        while i <= j:
            while scratch[i] < pivot:
                i += 1
            while scratch[j] > pivot:
                j -= 1
            if i <= j:
                tmp = scratch[i]
                scratch[i] = scratch[j]
                scratch[j] = tmp
                i += 1
                j -= 1
        if k <= j:
            hi = j
        elif k >= i:
            lo = i
        else:
            break
    return scratch[k]


@njit(cache=True)
def _select_knn(dist, m, scratch, out):
    """Fill ``out`` with the m smallest entries' indices; ties at the cutoff go to lower indices."""
    n = dist.shape[0]
    if m == n:
        for j in range(n):
            out[j] = j
        return
    kth = _kth_smallest(dist, scratch, m - 1)
    below = 0
    for j in range(n):
        if dist[j] < kth:
            below += 1
    need_eq = m - below
    pos = 0
    for j in range(n):
        if dist[j] < kth:
            out[pos] = j
            pos += 1
        elif dist[j] == kth and need_eq > 0:
            out[pos] = j
            pos += 1
            need_eq -= 1


@njit(cache=True)
def knn_average(z, xt, values, m, h):
    n, d = z.shape
    npairs = xt.shape[0]
    k = values.shape[1]
    out = np.zeros((n, k))
    dist = np.empty(npairs)
    scratch = np.empty(npairs)
    idx = np.empty(m, dtype=np.int64)
    w = np.empty(m)
    inv2h2 = 0.5 / (h * h)
    for i in range(n):
        for j in range(npairs):
            acc = 0.0
            for c in range(d):
                diff = z[i, c] - xt[j, c]
                acc += diff * diff
            dist[j] = acc
        _select_knn(dist, m, scratch, idx)
        nearest = np.inf
        for q in range(m):
            if dist[idx[q]] < nearest:
                nearest = dist[idx[q]]
        total = 0.0
        for q in range(m):
            w[q] = np.exp(-(dist[idx[q]] - nearest) * inv2h2)
            total += w[q]
        for q in range(m):
            j = idx[q]
            wq = w[q] / total
            for c in range(k):
                out[i, c] += wq * values[j, c]
    return out


@njit(cache=True)
def knn_indices(points, query, m):
    n, d = points.shape
    dist = np.empty(n)
    for j in range(n):
        acc = 0.0
        for c in range(d):
            diff = query[c] - points[j, c]
            acc += diff * diff
        dist[j] = acc
    idx = np.empty(m, dtype=np.int64)
    _select_knn(dist, m, np.empty(n), idx)
    # order by (distance, index) for a canonical listing
    keys = np.empty(m)
    for q in range(m):
        keys[q] = dist[idx[q]]
    order = np.argsort(keys, kind="mergesort")
    return idx[order]


@njit(cache=True)
def pairwise_distances(a, b):
    n, d = a.shape
    m = b.shape[0]
    out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for c in range(d):
                diff = a[i, c] - b[j, c]
                acc += diff * diff
            out[i, j] = np.sqrt(acc)
    return out


@njit(cache=True)
def linear_assignment(cost):
    """Shortest augmenting path Hungarian method, O(n^3)."""
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)
    way = np.zeros(n + 1, dtype=np.int64)
    minv = np.empty(n + 1)
    used = np.zeros(n + 1, dtype=np.bool_)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv[:] = np.inf
        used[:] = False
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = np.inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0 != 0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col_of_row = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        col_of_row[p[j] - 1] = j - 1
    return col_of_row


@njit(cache=True)
def _merge_count(a, tmp, lo, mid, hi):
    # strict inversions: a[i] > a[j] for i in left run, j in right run
    count = 0
    j = mid
    for i in range(lo, mid):
        while j < hi and a[j] < a[i]:
            j += 1
        count += j - mid
    i = lo
    j = mid
    k = lo
    while i < mid and j < hi:
        if a[i] <= a[j]:
            tmp[k] = a[i]
            i += 1
        else:
            tmp[k] = a[j]
            j += 1
        k += 1
    while i < mid:
        tmp[k] = a[i]
        i += 1
        k += 1
    while j < hi:
        tmp[k] = a[j]
        j += 1
        k += 1
    for q in range(lo, hi):
        a[q] = tmp[q]
    return count


@njit(cache=True)
def count_inversions(seq):
    """Bottom-up merge sort inversion count."""
    a = seq.copy()
    tmp = np.empty_like(a)
    n = a.shape[0]
    count = 0
    width = 1
    while width < n:
        for lo in range(0, n - width, 2 * width):
            count += _merge_count(a, tmp, lo, lo + width, min(lo + 2 * width, n))
        width *= 2
    return count
