"""Hot numeric kernels.

Each kernel has a compiled (numba @njit) implementation and a plain-numpy
fallback.  Set ``GEXCACHE_NO_NUMBA=1`` in the environment to force the
fallback path; ``USING_NUMBA`` reports which path is active.  Both paths
apply pair updates in identical order, so each path is individually
deterministic for a fixed seed.

Grid arguments are the CSR arrays of :class:`gexcache.geometry.GridIndex`:
``order`` (point indices sorted by cell) and ``cell_start`` (prefix offsets
per cell id = cx * ny + cy).
"""
from __future__ import annotations

import math
import os

import numpy as np

USING_NUMBA = os.environ.get("GEXCACHE_NO_NUMBA", "0") not in ("1", "true", "yes")

if USING_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a hard dep, but stay runnable
        USING_NUMBA = False

# ---------------------------------------------------------------------------
# numpy fallback implementations
# ---------------------------------------------------------------------------


def _cells_around(cx, cy, reach, nx, ny):
    for ix in range(max(cx - reach, 0), min(cx + reach, nx - 1) + 1):
        for iy in range(max(cy - reach, 0), min(cy + reach, ny - 1) + 1):
            yield ix * ny + iy


def _pairs_within_np(px, py, order, cell_start, nx, ny, xmin, ymin, cell, rmax):
    n = len(px)
    out_i, out_j, out_d = [], [], []
    reach = int(math.ceil(rmax / cell))
    for k in range(n):
        cx = min(int((px[k] - xmin) / cell), nx - 1)
        cy = min(int((py[k] - ymin) / cell), ny - 1)
        for cid in _cells_around(cx, cy, reach, nx, ny):
            seg = order[cell_start[cid]:cell_start[cid + 1]]
            cand = seg[seg > k]
            if len(cand) == 0:
                continue
            d = np.hypot(px[cand] - px[k], py[cand] - py[k])
            ok = d <= rmax
            if ok.any():
                cand, d = cand[ok], d[ok]
                srt = np.argsort(cand)
                out_i.append(np.full(len(cand), k, dtype=np.int64))
                out_j.append(cand[srt])
                out_d.append(d[srt])
    if not out_i:
        z = np.empty(0, dtype=np.int64)
        return z, z.copy(), np.empty(0, dtype=np.float64)
    return np.concatenate(out_i), np.concatenate(out_j), np.concatenate(out_d)


def _thin_matII_np(pair_i, pair_j, pair_d, weights, r_excl, n):
    keep = np.ones(n, dtype=np.uint8)
    sel = pair_d <= r_excl
    i, j = pair_i[sel], pair_j[sel]
    if len(i):
        wi, wj = weights[i], weights[j]
        lose_i = (wi > wj) | ((wi == wj) & (i > j))
        keep[np.where(lose_i, i, j)] = 0
    return keep


def _gec_log_retention_np(pair_i, pair_j, pair_d, marks, weights, c, n):
    logp = np.zeros(n, dtype=np.float64)
    s = marks[pair_i] + marks[pair_j]
    expo = -c * np.maximum(pair_d - s, 0.0)
    sel = expo > -27.631  # f >= 1e-12: neglected factors bound the error by n*1e-12
    i, j, e = pair_i[sel], pair_j[sel], expo[sel]
    hi = np.where(weights[i] >= weights[j], i, j)
    f = np.exp(e)
    contrib = np.where(f >= 1.0 - 1e-15, -np.inf, np.log1p(-f))
    np.add.at(logp, hi, contrib)
    return logp


def _nearest_distance_np(px, py, order, cell_start, nx, ny, xmin, ymin, cell, qx, qy):
    out = np.full(len(qx), np.inf)
    if len(px) == 0:
        return out
    for p in range(len(qx)):
        d2 = (px - qx[p]) ** 2 + (py - qy[p]) ** 2
        out[p] = math.sqrt(d2.min())
    return out


def _boolean_hits_np(px, py, order, cell_start, nx, ny, xmin, ymin, cell,
                     z, qx, qy, radius):
    n_probe = len(qx)
    M = z.shape[1]
    hits = np.zeros((n_probe, M), dtype=np.uint8)
    reach = int(math.ceil(radius / cell))
    for p in range(n_probe):
        cx = min(max(int((qx[p] - xmin) / cell), 0), nx - 1)
        cy = min(max(int((qy[p] - ymin) / cell), 0), ny - 1)
        near = []
        for cid in _cells_around(cx, cy, reach, nx, ny):
            seg = order[cell_start[cid]:cell_start[cid + 1]]
            if len(seg):
                near.append(seg)
        if not near:
            continue
        cand = np.concatenate(near)
        d = np.hypot(px[cand] - qx[p], py[cand] - qy[p])
        cand = cand[d <= radius]
        if len(cand):
            hits[p] = z[cand].any(axis=0)
    return hits


def _knearest_np(px, py, qx, qy, k):
    n_probe = len(qx)
    idx = np.full((n_probe, k), -1, dtype=np.int64)
    if len(px) == 0:
        return idx
    kk = min(k, len(px))
    for p in range(n_probe):
        d2 = (px - qx[p]) ** 2 + (py - qy[p]) ** 2
        near = np.argsort(d2, kind="stable")[:kk]
        idx[p, :kk] = near
    return idx


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if USING_NUMBA:

    @njit(cache=True)
    def _pairs_count_nb(px, py, order, cell_start, nx, ny, xmin, ymin, cell, rmax):
        n = len(px)
        reach = int(math.ceil(rmax / cell))
        count = 0
        for k in range(n):
            cx = min(int((px[k] - xmin) / cell), nx - 1)
            cy = min(int((py[k] - ymin) / cell), ny - 1)
            for ix in range(max(cx - reach, 0), min(cx + reach, nx - 1) + 1):
                for iy in range(max(cy - reach, 0), min(cy + reach, ny - 1) + 1):
                    cid = ix * ny + iy
                    for s in range(cell_start[cid], cell_start[cid + 1]):
                        jj = order[s]
                        if jj > k:
                            dx = px[jj] - px[k]
                            dy = py[jj] - py[k]
                            if math.sqrt(dx * dx + dy * dy) <= rmax:
                                count += 1
        return count

    @njit(cache=True)
    def _pairs_fill_nb(px, py, order, cell_start, nx, ny, xmin, ymin, cell, rmax,
                       out_i, out_j, out_d):
        n = len(px)
        reach = int(math.ceil(rmax / cell))
        pos = 0
        buf = np.empty(len(px), dtype=np.int64)
        bufd = np.empty(len(px), dtype=np.float64)
        for k in range(n):
            cx = min(int((px[k] - xmin) / cell), nx - 1)
            cy = min(int((py[k] - ymin) / cell), ny - 1)
            m = 0
            for ix in range(max(cx - reach, 0), min(cx + reach, nx - 1) + 1):
                for iy in range(max(cy - reach, 0), min(cy + reach, ny - 1) + 1):
                    cid = ix * ny + iy
                    for s in range(cell_start[cid], cell_start[cid + 1]):
                        jj = order[s]
                        if jj > k:
                            dx = px[jj] - px[k]
                            dy = py[jj] - py[k]
                            d = math.sqrt(dx * dx + dy * dy)
                            if d <= rmax:
                                buf[m] = jj
                                bufd[m] = d
                                m += 1
            # sort the per-anchor neighbors by index to mirror the numpy path
            srt = np.argsort(buf[:m], kind="mergesort")
            for t in range(m):
                out_i[pos] = k
                out_j[pos] = buf[srt[t]]
                out_d[pos] = bufd[srt[t]]
                pos += 1
        return pos

    def _pairs_within_nb(px, py, order, cell_start, nx, ny, xmin, ymin, cell, rmax):
        cnt = _pairs_count_nb(px, py, order, cell_start, nx, ny, xmin, ymin, cell, rmax)
        out_i = np.empty(cnt, dtype=np.int64)
        out_j = np.empty(cnt, dtype=np.int64)
        out_d = np.empty(cnt, dtype=np.float64)
        _pairs_fill_nb(px, py, order, cell_start, nx, ny, xmin, ymin, cell, rmax,
                       out_i, out_j, out_d)
        return out_i, out_j, out_d

    @njit(cache=True)
    def _thin_matII_nb(pair_i, pair_j, pair_d, weights, r_excl, n):
        keep = np.ones(n, dtype=np.uint8)
        for t in range(len(pair_i)):
            if pair_d[t] <= r_excl:
                i = pair_i[t]
                j = pair_j[t]
                if weights[i] > weights[j] or (weights[i] == weights[j] and i > j):
                    keep[i] = 0
                else:
                    keep[j] = 0
        return keep

    @njit(cache=True)
    def _gec_log_retention_nb(pair_i, pair_j, pair_d, marks, weights, c, n):
        logp = np.zeros(n, dtype=np.float64)
        for t in range(len(pair_i)):
            i = pair_i[t]
            j = pair_j[t]
            expo = -c * max(pair_d[t] - marks[i] - marks[j], 0.0)
            if expo > -27.631:
                if weights[i] >= weights[j]:
                    hi = i
                else:
                    hi = j
                f = math.exp(expo)
                if f >= 1.0 - 1e-15:
                    logp[hi] = -np.inf
                else:
                    logp[hi] += math.log1p(-f)
        return logp

    @njit(cache=True)
    def _nearest_distance_nb(px, py, order, cell_start, nx, ny, xmin, ymin, cell,
                             qx, qy):
        n_probe = len(qx)
        out = np.full(n_probe, np.inf)
        if len(px) == 0:
            return out
        max_reach = nx + ny
        for p in range(n_probe):
            cx = min(max(int((qx[p] - xmin) / cell), 0), nx - 1)
            cy = min(max(int((qy[p] - ymin) / cell), 0), ny - 1)
            best = np.inf
            reach = 0
            while reach <= max_reach:
                # scan the ring at this reach
                for ix in range(max(cx - reach, 0), min(cx + reach, nx - 1) + 1):
                    for iy in range(max(cy - reach, 0), min(cy + reach, ny - 1) + 1):
                        if max(abs(ix - cx), abs(iy - cy)) != reach:
                            continue
                        cid = ix * ny + iy
                        for s in range(cell_start[cid], cell_start[cid + 1]):
                            jj = order[s]
                            dx = px[jj] - qx[p]
                            dy = py[jj] - qy[p]
                            d = math.sqrt(dx * dx + dy * dy)
                            if d < best:
                                best = d
                # any point in a farther ring is at least (reach) * cell away
                if best <= reach * cell:
                    break
                reach += 1
            out[p] = best
        return out

    @njit(cache=True)
    def _boolean_hits_nb(px, py, order, cell_start, nx, ny, xmin, ymin, cell,
                         z, qx, qy, radius):
        n_probe = len(qx)
        M = z.shape[1]
        hits = np.zeros((n_probe, M), dtype=np.uint8)
        reach = int(math.ceil(radius / cell))
        for p in range(n_probe):
            cx = min(max(int((qx[p] - xmin) / cell), 0), nx - 1)
            cy = min(max(int((qy[p] - ymin) / cell), 0), ny - 1)
            for ix in range(max(cx - reach, 0), min(cx + reach, nx - 1) + 1):
                for iy in range(max(cy - reach, 0), min(cy + reach, ny - 1) + 1):
                    cid = ix * ny + iy
                    for s in range(cell_start[cid], cell_start[cid + 1]):
                        jj = order[s]
                        dx = px[jj] - qx[p]
                        dy = py[jj] - qy[p]
                        if math.sqrt(dx * dx + dy * dy) <= radius:
                            for m in range(M):
                                if z[jj, m]:
                                    hits[p, m] = 1
        return hits

    @njit(cache=True)
    def _knearest_nb(px, py, qx, qy, k):
        n_probe = len(qx)
        idx = np.full((n_probe, k), -1, dtype=np.int64)
        n = len(px)
        if n == 0:
            return idx
        kk = min(k, n)
        bestd = np.empty(kk, dtype=np.float64)
        for p in range(n_probe):
            for t in range(kk):
                bestd[t] = np.inf
                idx[p, t] = -1
            for jj in range(n):
                dx = px[jj] - qx[p]
                dy = py[jj] - qy[p]
                d = dx * dx + dy * dy
                if d < bestd[kk - 1]:
                    t = kk - 1
                    while t > 0 and bestd[t - 1] > d:
                        bestd[t] = bestd[t - 1]
                        idx[p, t] = idx[p, t - 1]
                        t -= 1
                    bestd[t] = d
                    idx[p, t] = jj
        return idx


# ---------------------------------------------------------------------------
# dispatch tables (the benchmark imports both)
# ---------------------------------------------------------------------------

NUMPY_IMPL = {
    "pairs_within": _pairs_within_np,
    "thin_matII": _thin_matII_np,
    "gec_log_retention": _gec_log_retention_np,
    "nearest_distance": _nearest_distance_np,
    "boolean_hits": _boolean_hits_np,
    "knearest": _knearest_np,
}

if USING_NUMBA:
    NUMBA_IMPL = {
        "pairs_within": _pairs_within_nb,
        "thin_matII": _thin_matII_nb,
        "gec_log_retention": _gec_log_retention_nb,
        "nearest_distance": _nearest_distance_nb,
        "boolean_hits": _boolean_hits_nb,
        "knearest": _knearest_nb,
    }
    ACTIVE = NUMBA_IMPL
else:
    NUMBA_IMPL = None
    ACTIVE = NUMPY_IMPL

pairs_within = ACTIVE["pairs_within"]
thin_matII_kernel = ACTIVE["thin_matII"]
gec_log_retention = ACTIVE["gec_log_retention"]
nearest_distance = ACTIVE["nearest_distance"]
boolean_hits = ACTIVE["boolean_hits"]
knearest = ACTIVE["knearest"]


def grid_args(index) -> tuple:
    """Flatten a GridIndex into the positional args the kernels expect."""
    return (
        index.points[:, 0].copy(),
        index.points[:, 1].copy(),
        index.order,
        index.cell_start,
        index.nx,
        index.ny,
        index._xmin,
        index._ymin,
        index.cell_size,
    )
