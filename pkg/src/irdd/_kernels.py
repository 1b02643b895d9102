"""Compiled inner loops.

Everything here works on plain float64/int64 arrays that are already sorted
by the running variable and tie-merged; validation lives in the callers.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def pava(y, w):
    """Weighted pool-adjacent-violators, single pass with a block stack.

    Returns ``(fitted, starts, k)``: fitted level per input position, the first
    position of each block in ``starts[:k]``.
    """
    n = y.shape[0]
    sums = np.empty(n)
    wsum = np.empty(n)
    starts = np.empty(n + 1, np.int64)
    k = 0
    for i in range(n):
        sums[k] = y[i] * w[i]
        wsum[k] = w[i]
        starts[k] = i
        k += 1
        # strict violation test: equal neighbouring means stay separate
        while k > 1 and sums[k - 2] * wsum[k - 1] > sums[k - 1] * wsum[k - 2]:
            sums[k - 2] += sums[k - 1]
            wsum[k - 2] += wsum[k - 1]
            k -= 1
    starts[k] = n
    fitted = np.empty(n)
    for b in range(k):
        level = sums[b] / wsum[b]
        for i in range(starts[b], starts[b + 1]):
            fitted[i] = level
    return fitted, starts, k


@njit(cache=True)
def pava_value_at(y, w, idx):
    fitted, _, _ = pava(y, w)
    return fitted[idx]


@njit(cache=True)
def lower_hull(u, v):
    """Indices of the greatest convex minorant's vertices (monotone chain).

    Collinear middle points are dropped, so consecutive hull slopes strictly
    increase.
    """
    n = u.shape[0]
    hull = np.empty(n, np.int64)
    h = 0
    for i in range(n):
        while h >= 2:
            a = hull[h - 2]
            b = hull[h - 1]
            # drop b unless it lies strictly below the chord a -> i
            cross = (u[b] - u[a]) * (v[i] - v[a]) - (v[b] - v[a]) * (u[i] - u[a])
            if cross <= 0.0:
                h -= 1
            else:
                break
        hull[h] = i
        h += 1
    return hull[:h]


@njit(cache=True)
def hull_left_slopes(u, v, hull, query):
    """Left derivative of the hull at each sorted point index in ``query``.

    For a query index q the slope of the hull segment (h_j, h_{j+1}] that
    contains q is returned; q must be >= 1.
    """
    out = np.empty(query.shape[0])
    j = 0
    for r in range(query.shape[0]):
        q = query[r]
        while hull[j + 1] < q:
            j += 1
        a = hull[j]
        b = hull[j + 1]
        out[r] = (v[b] - v[a]) / (u[b] - u[a])
    return out


@njit(cache=True)
def grid_gcm_slopes(paths, step, query):
    """GCM left derivatives of every row of ``paths`` on the grid i*step."""
    p, m = paths.shape
    t = np.arange(m) * step
    out = np.empty((p, query.shape[0]))
    for r in range(p):
        z = paths[r]
        hull = lower_hull(t, z)
        out[r] = hull_left_slopes(t, z, hull, query)
    return out


@njit(cache=True)
def _group_means(yobs, starts, weights, out):
    g = weights.shape[0]
    for j in range(g):
        s = 0.0
        for i in range(starts[j], starts[j + 1]):
            s += yobs[i]
        out[j] = s / weights[j]


@njit(cache=True)
def wild_replicates(base, resid, eta, starts, weights, idx):
    """Refit one side for each row of multipliers and read the fit at ``idx``.

    ``base`` and ``resid`` are per observation (x-sorted), ``eta`` is
    reps x n_obs, ``starts``/``weights`` describe the tie groups and ``idx`` is
    the group index at which the refit is evaluated.
    """
    reps = eta.shape[0]
    n = base.shape[0]
    g = weights.shape[0]
    ystar = np.empty(n)
    gy = np.empty(g)
    out = np.empty(reps)
    for b in range(reps):
        for i in range(n):
            ystar[i] = base[i] + eta[b, i] * resid[i]
        _group_means(ystar, starts, weights, gy)
        out[b] = pava_value_at(gy, weights, idx)
    return out
