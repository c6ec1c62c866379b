"""Vectorised NumPy kernels, used when numba is unavailable or disabled."""

import numpy as np

# rows per block; bounds the (block, m, d) temporaries
_BLOCK = 256


def _softmax_rows(logw):
    logw = logw - logw.max(axis=1, keepdims=True)
    w = np.exp(logw)
    return w / w.sum(axis=1, keepdims=True)


def mixture_velocity(z, means, inv_var, coef, drift, const):
    out = np.empty_like(z)
    for lo in range(0, z.shape[0], _BLOCK):
        zb = z[lo:lo + _BLOCK]
        diff = zb[:, None, :] - means[None, :, :]
        logw = const[None, :] - 0.5 * np.sum(diff * diff * inv_var[None], axis=2)
        w = _softmax_rows(logw)
        g = drift[None] + coef[None] * diff
        out[lo:lo + _BLOCK] = np.einsum("ik,ikc->ic", w, g)
    return out


def _sqdist(a, b):
    diff = a[:, None, :] - b[None, :, :]
    return np.sum(diff * diff, axis=2)


def _knn_mask(dist, m):
    """Boolean mask of the m smallest entries per row, ties to lower index."""
    n = dist.shape[1]
    if m == n:
        return np.ones(dist.shape, dtype=bool)
    kth = np.partition(dist, m - 1, axis=1)[:, m - 1:m]
    below = dist < kth
    need = m - below.sum(axis=1, keepdims=True)
    eq = dist == kth
    return below | (eq & (np.cumsum(eq, axis=1) <= need))


def knn_average(z, xt, values, m, h):
    """Gaussian-weighted mean of ``values`` over the m nearest rows of ``xt``."""
    out = np.empty((z.shape[0], values.shape[1]))
    for lo in range(0, z.shape[0], _BLOCK):
        zb = z[lo:lo + _BLOCK]
        dist = _sqdist(zb, xt)
        mask = _knn_mask(dist, m)
        w = _softmax_rows(np.where(mask, -dist / (2.0 * h * h), -np.inf))
        out[lo:lo + _BLOCK] = w @ values
    return out


def knn_indices(points, query, m):
    dist = _sqdist(query[None, :], points)[0]
    return np.argsort(dist, kind="stable")[:m].astype(np.int64)


def pairwise_distances(a, b):
    out = np.empty((a.shape[0], b.shape[0]))
    for lo in range(0, a.shape[0], _BLOCK):
        out[lo:lo + _BLOCK] = np.sqrt(_sqdist(a[lo:lo + _BLOCK], b))
    return out


def linear_assignment(cost):
    """Shortest augmenting path Hungarian method with the column scan vectorised."""
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)
    way = np.zeros(n + 1, dtype=np.int64)
    padded = np.zeros((n + 1, n + 1))
    padded[1:, 1:] = cost
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        used_cols = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used
            free[0] = False
            cur = padded[i0] - u[i0] - v
            better = free & (cur < minv)
            minv[better] = cur[better]
            way[better] = j0
            cand = np.where(free, minv, np.inf)
            j1 = int(np.argmin(cand))
            delta = cand[j1]
            used_cols[:] = used
            u[p[used_cols]] += delta
            v[used_cols] -= delta
            minv[~used_cols] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0 != 0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col_of_row = np.empty(n, dtype=np.int64)
    col_of_row[p[1:] - 1] = np.arange(n)
    return col_of_row


def count_inversions(seq):
    total = 0
    n = seq.shape[0]
    for lo in range(0, n, _BLOCK):
        block = seq[lo:lo + _BLOCK]
        later = np.arange(n)[None, :] > np.arange(lo, lo + block.shape[0])[:, None]
        total += int(np.sum(later & (block[:, None] > seq[None, :])))
    return total
