"""Numba kernels for ray/triangle-mesh queries over a flattened BVH."""

from __future__ import annotations

import numpy as np
from numba import njit

LEAF_SIZE = 4
_STACK = 128


class BVH:
    """Median-split bounding volume hierarchy, stored as flat arrays."""

    def __init__(self, triangles: np.ndarray):
        tris = np.ascontiguousarray(triangles, dtype=np.float64)
        n = len(tris)
        self.triangles = tris
        self.order = np.arange(n, dtype=np.int64)
        lo_list, hi_list, left, right, start, count = [], [], [], [], [], []
        if n == 0:
            self.node_lo = np.zeros((0, 3))
            self.node_hi = np.zeros((0, 3))
            self.left = self.right = self.start = self.count = np.zeros(0, dtype=np.int64)
            return
        tri_lo = tris.min(axis=1)
        tri_hi = tris.max(axis=1)
        cent = tris.mean(axis=1)
        order = self.order

        def alloc():
            lo_list.append(None)
            hi_list.append(None)
            left.append(-1)
            right.append(-1)
            start.append(0)
            count.append(0)
            return len(lo_list) - 1

        root = alloc()
        stack = [(root, 0, n)]
        while stack:
            node, s, e = stack.pop()
            idx = order[s:e]
            lo_list[node] = tri_lo[idx].min(axis=0)
            hi_list[node] = tri_hi[idx].max(axis=0)
            if e - s <= LEAF_SIZE:
                start[node], count[node] = s, e - s
                continue
            c = cent[idx]
            axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
            srt = np.argsort(c[:, axis], kind="stable")
            order[s:e] = idx[srt]
            mid = s + (e - s) // 2
            l_node, r_node = alloc(), alloc()
            left[node], right[node] = l_node, r_node
            stack.append((r_node, mid, e))
            stack.append((l_node, s, mid))
        self.node_lo = np.array(lo_list, dtype=np.float64)
        self.node_hi = np.array(hi_list, dtype=np.float64)
        self.left = np.array(left, dtype=np.int64)
        self.right = np.array(right, dtype=np.int64)
        self.start = np.array(start, dtype=np.int64)
        self.count = np.array(count, dtype=np.int64)

    def arrays(self):
        return (self.triangles, self.order, self.node_lo, self.node_hi,
                self.left, self.right, self.start, self.count)


@njit(cache=True)
def _tri_hit(tris, k, ox, oy, oz, dx, dy, dz):
    # two-sided Moller-Trumbore; returns t or -1
    ax, ay, az = tris[k, 0, 0], tris[k, 0, 1], tris[k, 0, 2]
    e1x, e1y, e1z = tris[k, 1, 0] - ax, tris[k, 1, 1] - ay, tris[k, 1, 2] - az
    e2x, e2y, e2z = tris[k, 2, 0] - ax, tris[k, 2, 1] - ay, tris[k, 2, 2] - az
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if det == 0.0:
        return -1.0
    inv = 1.0 / det
    sx, sy, sz = ox - ax, oy - ay, oz - az
    u = (sx * px + sy * py + sz * pz) * inv
    if u < 0.0 or u > 1.0:
        return -1.0
    qx = sy * e1z - sz * e1y
    qy = sz * e1x - sx * e1z
    qz = sx * e1y - sy * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < 0.0 or u + v > 1.0:
        return -1.0
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    return t


@njit(cache=True)
def _box_entry(lo, hi, k, ox, oy, oz, idx, idy, idz, tmax):
    t0 = 0.0
    t1 = tmax
    o = (ox, oy, oz)
    inv = (idx, idy, idz)
    for a in range(3):
        ta = (lo[k, a] - o[a]) * inv[a]
        tb = (hi[k, a] - o[a]) * inv[a]
        if ta != ta:  # 0 * inf when the origin lies on the slab plane
            ta = -np.inf if o[a] >= lo[k, a] else np.inf
        if tb != tb:
            tb = np.inf if o[a] <= hi[k, a] else -np.inf
        if ta > tb:
            ta, tb = tb, ta
        if ta > t0:
            t0 = ta
        if tb < t1:
            t1 = tb
        if t0 > t1:
            return -1.0
    return t0


@njit(cache=True)
def intersect_one(tris, order, node_lo, node_hi, left, right, start, count,
                  ox, oy, oz, dx, dy, dz, max_range):
    """Nearest hit (t, triangle id); (inf, -1) when nothing within range."""
    best_t = np.inf
    best_k = -1
    if node_lo.shape[0] == 0:
        return best_t, best_k
    idx = 1.0 / dx if dx != 0.0 else np.inf
    idy = 1.0 / dy if dy != 0.0 else np.inf
    idz = 1.0 / dz if dz != 0.0 else np.inf
    stack = np.empty(_STACK, dtype=np.int64)
    sp = 0
    stack[sp] = 0
    sp += 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        limit = best_t if best_t < max_range else max_range
        if _box_entry(node_lo, node_hi, node, ox, oy, oz, idx, idy, idz, limit) < 0.0:
            continue
        if left[node] < 0:
            for j in range(start[node], start[node] + count[node]):
                k = order[j]
                t = _tri_hit(tris, k, ox, oy, oz, dx, dy, dz)
                if t > 0.0 and t <= max_range:
                    if t < best_t or (t == best_t and k < best_k):
                        best_t = t
                        best_k = k
        else:
            stack[sp] = left[node]
            stack[sp + 1] = right[node]
            sp += 2
    return best_t, best_k


@njit(cache=True)
def intersect_many(tris, order, node_lo, node_hi, left, right, start, count,
                   origin, dirs, max_range, out_t, out_k):
    for i in range(dirs.shape[0]):
        t, k = intersect_one(tris, order, node_lo, node_hi, left, right, start, count,
                             origin[0], origin[1], origin[2],
                             dirs[i, 0], dirs[i, 1], dirs[i, 2], max_range)
        out_t[i] = t
        out_k[i] = k
