"""Numba kernels for voxel-grid ray traversal, depth integration and
free-space box queries."""

from __future__ import annotations

import math

import numpy as np
from numba import njit

MISS = 1
HIT = 2


@njit(cache=True, inline="always")
def _next_t(i, s, o, d, vs):
    if s > 0:
        return ((i + 1) * vs - o) / d
    if s < 0:
        return (i * vs - o) / d
    return np.inf


@njit(cache=True, inline="always")
def _sign(d):
    if d > 0.0:
        return 1
    if d < 0.0:
        return -1
    return 0


@njit(cache=True)
def traverse(o, d, length, vs, out):
    """Fill ``out`` with the keys of every voxel the segment o + t*d,
    t in [0, length], passes through, in order. Returns the count."""
    ix = math.floor(o[0] / vs)
    iy = math.floor(o[1] / vs)
    iz = math.floor(o[2] / vs)
    sx, sy, sz = _sign(d[0]), _sign(d[1]), _sign(d[2])
    tx = _next_t(ix, sx, o[0], d[0], vs)
    ty = _next_t(iy, sy, o[1], d[1], vs)
    tz = _next_t(iz, sz, o[2], d[2], vs)
    n = 0
    while True:
        out[n, 0] = ix
        out[n, 1] = iy
        out[n, 2] = iz
        n += 1
        if tx <= ty and tx <= tz:
            if tx > length:
                break
            ix += sx
            tx = _next_t(ix, sx, o[0], d[0], vs)
        elif ty <= tz:
            if ty > length:
                break
            iy += sy
            ty = _next_t(iy, sy, o[1], d[1], vs)
        else:
            if tz > length:
                break
            iz += sz
            tz = _next_t(iz, sz, o[2], d[2], vs)
        if n >= out.shape[0]:
            break
    return n


@njit(cache=True)
def _grid_entry(o, d, lo, hi):
    """Slab clip of the ray against the grid box; returns (t0, t1)."""
    t0 = 0.0
    t1 = np.inf
    for a in range(3):
        if d[a] == 0.0:
            if o[a] < lo[a] or o[a] >= hi[a]:
                return 1.0, 0.0
            continue
        ta = (lo[a] - o[a]) / d[a]
        tb = (hi[a] - o[a]) / d[a]
        if ta > tb:
            ta, tb = tb, ta
        t0 = max(t0, ta)
        t1 = min(t1, tb)
    return t0, t1


@njit(cache=True)
def _march(o, d, length, vs, offset, shape, lo, hi, log_odds, l_free, marks, hit, mode, out_key):
    """Shared ray march over the bounded grid.

    mode 0: integrate (write MISS/HIT into ``marks``); returns 0.
    mode 1: stop at the first non-free voxel, write its key to ``out_key``
            and return its entry distance; returns -1 if none.
    """
    t0, t1 = _grid_entry(o, d, lo, hi)
    if t0 > t1 or t0 > length:
        return -1.0
    p0 = o[0] + t0 * d[0]
    p1 = o[1] + t0 * d[1]
    p2 = o[2] + t0 * d[2]
    ix = min(max(math.floor(p0 / vs), offset[0]), offset[0] + shape[0] - 1)
    iy = min(max(math.floor(p1 / vs), offset[1]), offset[1] + shape[1] - 1)
    iz = min(max(math.floor(p2 / vs), offset[2]), offset[2] + shape[2] - 1)
    sx, sy, sz = _sign(d[0]), _sign(d[1]), _sign(d[2])
    tx = _next_t(ix, sx, o[0], d[0], vs)
    ty = _next_t(iy, sy, o[1], d[1], vs)
    tz = _next_t(iz, sz, o[2], d[2], vs)
    t_enter = t0
    while True:
        gx = ix - offset[0]
        gy = iy - offset[1]
        gz = iz - offset[2]
        if gx < 0 or gy < 0 or gz < 0 or gx >= shape[0] or gy >= shape[1] or gz >= shape[2]:
            return -1.0
        if tx <= ty and tx <= tz:
            t_next = tx
            ax = 0
        elif ty <= tz:
            t_next = ty
            ax = 1
        else:
            t_next = tz
            ax = 2
        last = t_next > length
        if mode == 1:
            if log_odds[gx, gy, gz] > l_free:
                out_key[0] = ix
                out_key[1] = iy
                out_key[2] = iz
                return t_enter
        else:
            if last and hit:
                marks[gx, gy, gz] = 2
            elif marks[gx, gy, gz] == 0:
                marks[gx, gy, gz] = 1
        if last:
            return -1.0
        t_enter = t_next
        if ax == 0:
            ix += sx
            tx = _next_t(ix, sx, o[0], d[0], vs)
        elif ax == 1:
            iy += sy
            ty = _next_t(iy, sy, o[1], d[1], vs)
        else:
            iz += sz
            tz = _next_t(iz, sz, o[2], d[2], vs)


@njit(cache=True)
def integrate(log_odds, touched, marks, offset, vs, lo, hi, origin, dirs, depth, max_range,
              l_hit, l_miss, l_min, l_max):
    dummy = np.zeros(3, dtype=np.int64)
    shape = np.array(log_odds.shape, dtype=np.int64)
    for r in range(dirs.shape[0]):
        dep = depth[r]
        hit = dep <= max_range  # False for inf / nan
        length = dep if hit else max_range
        _march(origin, dirs[r], length, vs, offset, shape, lo, hi, log_odds, 0.0, marks,
               hit, 0, dummy)
    flat_m = marks.reshape(-1)
    flat_l = log_odds.reshape(-1)
    flat_t = touched.reshape(-1)
    for k in range(flat_m.shape[0]):
        m = flat_m[k]
        if m == 0:
            continue
        v = flat_l[k] + (l_hit if m == 2 else l_miss)
        flat_l[k] = min(max(v, l_min), l_max)
        flat_t[k] = True
        flat_m[k] = 0


@njit(cache=True)
def first_nonfree(log_odds, offset, vs, lo, hi, origin, dirs, l_free, max_distance, out_keys, out_t):
    """Per ray: key of the first voxel with log-odds above ``l_free``."""
    shape = np.array(log_odds.shape, dtype=np.int64)
    marks = np.zeros((1, 1, 1), dtype=np.int8)
    key = np.zeros(3, dtype=np.int64)
    for r in range(dirs.shape[0]):
        t = _march(origin, dirs[r], max_distance, vs, offset, shape, lo, hi, log_odds, l_free,
                   marks, False, 1, key)
        out_t[r] = t
        out_keys[r, 0] = key[0]
        out_keys[r, 1] = key[1]
        out_keys[r, 2] = key[2]


@njit(cache=True)
def box_count(integral, i0, j0, k0, i1, j1, k1):
    """Number of non-free cells in grid index range [i0, i1) x [j0, j1) x [k0, k1)."""
    return (integral[i1, j1, k1] - integral[i0, j1, k1] - integral[i1, j0, k1] - integral[i1, j1, k0]
            + integral[i0, j0, k1] + integral[i0, j1, k0] + integral[i1, j0, k0] - integral[i0, j0, k0])


@njit(cache=True)
def box_free(integral, offset, vs, blo, bhi, alo, ahi):
    for a in range(3):
        if blo[a] < alo[a] or bhi[a] > ahi[a]:
            return False
    rng = np.empty(6, dtype=np.int64)
    for a in range(3):
        i0 = math.floor(blo[a] / vs) - offset[a]
        i1 = math.ceil(bhi[a] / vs) - offset[a]
        if i1 <= i0:
            i1 = i0 + 1
        if i0 < 0 or i1 > integral.shape[a] - 1:
            return False
        rng[a] = i0
        rng[a + 3] = i1
    return box_count(integral, rng[0], rng[1], rng[2], rng[3], rng[4], rng[5]) == 0


@njit(cache=True)
def segment_free(integral, offset, vs, a, b, half, step, alo, ahi):
    dist = math.sqrt((b[0] - a[0]) ** 2 + (b[1] - a[1]) ** 2 + (b[2] - a[2]) ** 2)
    n = max(1, math.ceil(dist / step))
    blo = np.empty(3)
    bhi = np.empty(3)
    for k in range(n + 1):
        f = k / n
        for ax in range(3):
            c = a[ax] + (b[ax] - a[ax]) * f
            blo[ax] = c - half[ax]
            bhi[ax] = c + half[ax]
        if not box_free(integral, offset, vs, blo, bhi, alo, ahi):
            return False
    return True
