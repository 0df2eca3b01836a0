"""Compiled kernels for the batch encoder.

One pass computes soft assignments, a second walks the Gaussians and reduces
the per-point gradient terms. Sums use a fixed pairwise tree so the result
depends only on point order, never on threading.
"""
import math

import numpy as np
from numba import njit

LOG_2PI = math.log(2.0 * math.pi)
SQRT2 = math.sqrt(2.0)
TILE = 64
LEAF = 16


@njit(cache=True, nogil=True)
def responsibilities(pts, means, sigmas, weights, zero_on_underflow, gamma, flags):
    """Fill ``gamma[k, t]`` (Gaussian-major) and the per-point underflow flags."""
    T = pts.shape[0]
    K = means.shape[0]
    logc = np.empty(K)
    inv2s2 = np.empty(K)
    for k in range(K):
        logc[k] = math.log(weights[k]) - 1.5 * LOG_2PI - 3.0 * math.log(sigmas[k])
        inv2s2[k] = 0.5 / (sigmas[k] * sigmas[k])
    lw = np.empty((TILE, K))
    for t0 in range(0, T, TILE):
        n = min(TILE, T - t0)
        for i in range(n):
            t = t0 + i
            x = pts[t, 0]
            y = pts[t, 1]
            z = pts[t, 2]
            best = -np.inf
            nearest = 0
            nearest_d2 = np.inf
            for k in range(K):
                dx = x - means[k, 0]
                dy = y - means[k, 1]
                dz = z - means[k, 2]
                d2 = dx * dx + dy * dy + dz * dz
                v = logc[k] - d2 * inv2s2[k]
                lw[i, k] = v
                if v > best:
                    best = v
                if d2 < nearest_d2:
                    nearest_d2 = d2
                    nearest = k
            if math.exp(best) == 0.0:
                flags[t] = True
                for k in range(K):
                    lw[i, k] = 0.0
                if not zero_on_underflow:
                    lw[i, nearest] = 1.0
                continue
            flags[t] = False
            s = 0.0
            for k in range(K):
                e = math.exp(lw[i, k] - best)
                lw[i, k] = e
                s += e
            inv = 1.0 / s
            for k in range(K):
                lw[i, k] *= inv
        for k in range(K):
            for i in range(n):
                gamma[k, t0 + i] = lw[i, k]


@njit(cache=True, nogil=True)
def _pairwise_rows(buf, n, width):
    # leaves of LEAF consecutive rows are summed in order, then a tree over leaves
    n_leaves = 0
    for start in range(0, n, LEAF):
        stop = min(start + LEAF, n)
        for c in range(width):
            acc = buf[start, c]
            for t in range(start + 1, stop):
                acc += buf[t, c]
            buf[n_leaves, c] = acc
        n_leaves += 1
    n = n_leaves
    while n > 1:
        half = n // 2
        for i in range(half):
            for c in range(width):
                buf[i, c] = buf[2 * i, c] + buf[2 * i + 1, c]
        if n % 2 == 1:
            for c in range(width):
                buf[half, c] = buf[n - 1, c]
            n = half + 1
        else:
            n = half


@njit(cache=True, nogil=True)
def aggregate(pts, means, sigmas, weights, gamma, out_sum, out_sq, out_max, out_min):
    """Per-Gaussian sum, sum of squares, max and min of the 7 gradient terms.

    ``gamma`` is Gaussian-major, shape (K, T).
    """
    T = pts.shape[0]
    K = means.shape[0]
    buf = np.empty((T, 14))
    mx = np.empty(7)
    mn = np.empty(7)
    for k in range(K):
        w = weights[k]
        inv_s = 1.0 / sigmas[k]
        inv_sw = 1.0 / math.sqrt(w)
        inv_s2w = inv_sw / SQRT2
        m0 = means[k, 0]
        m1 = means[k, 1]
        m2 = means[k, 2]
        for c in range(7):
            mx[c] = -np.inf
            mn[c] = np.inf
        for t in range(T):
            g = gamma[k, t]
            ux = (pts[t, 0] - m0) * inv_s
            uy = (pts[t, 1] - m1) * inv_s
            uz = (pts[t, 2] - m2) * inv_s
            gw = g * inv_sw
            gs = g * inv_s2w
            buf[t, 0] = (g - w) * inv_sw
            buf[t, 1] = gw * ux
            buf[t, 2] = gw * uy
            buf[t, 3] = gw * uz
            buf[t, 4] = gs * (ux * ux - 1.0)
            buf[t, 5] = gs * (uy * uy - 1.0)
            buf[t, 6] = gs * (uz * uz - 1.0)
            for c in range(7):
                v = buf[t, c]
                buf[t, 7 + c] = v * v
                if v > mx[c]:
                    mx[c] = v
                if v < mn[c]:
                    mn[c] = v
        for c in range(7):
            out_max[c, k] = mx[c]
            out_min[c, k] = mn[c]
        _pairwise_rows(buf, T, 14)
        for c in range(7):
            out_sum[c, k] = buf[0, c]
            out_sq[c, k] = buf[0, 7 + c]
