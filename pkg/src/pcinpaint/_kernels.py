"""Compiled inner loops for rotation-only ICP and candidate bookkeeping."""

import numpy as np
from numba import njit


@njit(cache=True)
def _procrustes(h):
    # rotation R maximizing trace(R @ h), det(R) = +1
    u, _, vt = np.linalg.svd(h)
    v = vt.T
    ut = u.T
    m = v @ ut
    det = (m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
           - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
           + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0]))
    if det < 0:
        for i in range(3):
            v[i, 2] = -v[i, 2]
        m = v @ ut
    return m


@njit(cache=True)
def _sweep(x, yt, lo, hi, rot, nn, dist, buf):
    # nearest rotated candidate point per template point (lowest index on ties);
    # returns the OHD. |x - R y| = |R^T x - y|, so the template is rotated instead.
    # yt is (3, M) so the distance loop vectorizes
    worst = 0.0
    m = hi - lo
    ya, yb, yc = yt[0, lo:hi], yt[1, lo:hi], yt[2, lo:hi]
    for i in range(x.shape[0]):
        px = rot[0, 0] * x[i, 0] + rot[1, 0] * x[i, 1] + rot[2, 0] * x[i, 2]
        py = rot[0, 1] * x[i, 0] + rot[1, 1] * x[i, 1] + rot[2, 1] * x[i, 2]
        pz = rot[0, 2] * x[i, 0] + rot[1, 2] * x[i, 1] + rot[2, 2] * x[i, 2]
        for j in range(m):
            buf[j] = (px - ya[j]) ** 2 + (py - yb[j]) ** 2 + (pz - yc[j]) ** 2
        best = buf[0]
        arg = 0
        for j in range(1, m):
            if buf[j] < best:
                best = buf[j]
                arg = j
        nn[i] = lo + arg
        dist[i] = np.sqrt(best)
        if dist[i] > worst:
            worst = dist[i]
    return worst


@njit(cache=True)
def icp_batch(x, y, offsets, starts, max_icp, tol, history):
    """ICP of candidate k (rows offsets[k]:offsets[k + 1] of y) from each start.

    starts has shape (B, S, 3, 3). Returns the best rotation and OHD per
    candidate over its starts, first start winning ties. history[k, s] gets the
    running best OHD per sweep (NaN after the start stops).
    """
    nb = offsets.shape[0] - 1
    ns = starts.shape[1]
    out_rot = np.empty((nb, 3, 3))
    out_score = np.full(nb, np.inf)
    nn = np.empty(x.shape[0], dtype=np.int64)
    dist = np.empty(x.shape[0])
    yt = np.ascontiguousarray(y.T)
    buf = np.empty(y.shape[0])
    for k in range(nb):
        lo, hi = offsets[k], offsets[k + 1]
        for s in range(ns):
            rot = starts[k, s].copy()
            best = np.inf
            best_rot = rot.copy()
            prev = np.inf
            for sweep in range(max_icp + 1):
                score = _sweep(x, yt, lo, hi, rot, nn, dist, buf)
                if score < best:
                    best = score
                    best_rot[:, :] = rot
                if history.shape[0] > 0:
                    history[k, s, sweep] = best
                done = abs(prev - score) < tol
                prev = score
                if sweep == max_icp or done:
                    break
                h = np.zeros((3, 3))
                for i in range(x.shape[0]):
                    j = nn[i]
                    for a in range(3):
                        for b in range(3):
                            h[a, b] += y[j, a] * x[i, b]
                rot = _procrustes(h)
            if best < out_score[k]:
                out_score[k] = best
                out_rot[k] = best_rot
    return out_rot, out_score


@njit(cache=True)
def radial_bounds(rx, ry, offsets):
    """Per candidate: max over template radii of the gap to the nearest candidate radius."""
    nb = offsets.shape[0] - 1
    out = np.empty(nb)
    for k in range(nb):
        worst = 0.0
        for i in range(rx.shape[0]):
            gap = np.inf
            for j in range(offsets[k], offsets[k + 1]):
                d = abs(ry[j] - rx[i])
                if d < gap:
                    gap = d
            if gap > worst:
                worst = gap
        out[k] = worst
    return out
