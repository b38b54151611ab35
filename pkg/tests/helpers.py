"""Random planning instances and independent reference implementations."""

import itertools

import numpy as np

from viewplan.geometry import Viewpoint
from viewplan.graph import Motion, ViewpointGraph
from viewplan.visibility import ViewpointObservation, encode_keys


def random_observation(rng, node, n_voxels=40, universe=60, xi=0.25):
    keys = rng.choice(universe, size=rng.integers(1, n_voxels + 1), replace=False)
    keys = np.stack([keys, np.zeros_like(keys), np.zeros_like(keys)], axis=1).astype(np.int64)
    order = np.argsort(encode_keys(keys))
    vi = rng.uniform(0.05, 1.0 / xi, size=len(keys))
    return ViewpointObservation(node, keys[order], vi[order])


def random_instance(seed, n=8, extent=30.0, radius=14.0, universe=60, max_voxels=40):
    """Random geometric graph with straight-line motions and random observations."""
    rng = np.random.default_rng(seed)
    pos = rng.uniform(0, extent, size=(n, 3))
    pos[:, 2] = rng.uniform(5, 10, size=n)
    vps = [Viewpoint(tuple(p), 0.0, -0.3) for p in pos]
    obs = [random_observation(rng, i, max_voxels, universe) for i in range(n)]
    edges = {}
    for a, b in itertools.combinations(range(n), 2):
        if np.linalg.norm(pos[a] - pos[b]) <= radius:
            edges[(a, b)] = Motion([pos[a], pos[b]])
    # keep it connected with a chain through the nodes
    for a in range(n - 1):
        edges.setdefault((a, a + 1), Motion([pos[a], pos[a + 1]]))
    return ViewpointGraph(vps, obs, edges)


def bellman_ford(n, weighted_edges, source):
    dist = [float("inf")] * n
    dist[source] = 0.0
    for _ in range(n - 1):
        changed = False
        for a, b, w in weighted_edges:
            for u, v in ((a, b), (b, a)):
                if dist[u] + w < dist[v]:
                    dist[v] = dist[u] + w
                    changed = True
        if not changed:
            break
    return dist


def coverage_from_scratch(observations):
    """Dict-based VI accumulation, independent of CoverageState."""
    vi = {}
    for ob in observations:
        for k, v in zip(map(tuple, ob.keys.tolist()), ob.vi):
            vi[k] = min(1.0, vi.get(k, 0.0) + v)
    return vi


def gain_from_scratch(ob, vi):
    return sum(min(v, 1.0 - vi.get(k, 0.0)) for k, v in zip(map(tuple, ob.keys.tolist()), ob.vi))


def local_instance(seed, n=10, extent=30.0, k=3, cell=1.0, reach=6.0, vimax=1.0):
    """K-nearest-neighbour graph whose nodes observe a disc of ground cells
    around themselves, so nearby nodes overlap and far ones do not."""
    from scipy.spatial import cKDTree

    rng = np.random.default_rng(seed)
    pos = rng.uniform(0, extent, size=(n, 3))
    pos[:, 2] = rng.uniform(5, 10, size=n)
    vps = [Viewpoint(tuple(p), 0.0, -0.3) for p in pos]
    g = np.arange(0, extent, cell)
    gx, gy = np.meshgrid(g, g, indexing="ij")
    cells = np.c_[gx.ravel(), gy.ravel()]
    obs = []
    for i, p in enumerate(pos):
        d = np.linalg.norm(cells - p[:2], axis=1)
        sel = np.nonzero(d <= reach * rng.uniform(0.6, 1.4))[0]
        keys = np.c_[sel, np.zeros_like(sel), np.zeros_like(sel)].astype(np.int64)
        vi = rng.uniform(0.1, vimax, len(sel))
        order = np.argsort(encode_keys(keys))
        obs.append(ViewpointObservation(i, keys[order], vi[order]))
    _, nn = cKDTree(pos).query(pos, k=min(k + 1, n))
    edges = {}
    for a in range(n):
        for b in nn[a][1:]:
            a2, b2 = min(a, int(b)), max(a, int(b))
            edges[(a2, b2)] = Motion([pos[a2], pos[b2]])
    for a in range(n - 1):
        edges.setdefault((a, a + 1), Motion([pos[a], pos[a + 1]]))
    return ViewpointGraph(vps, obs, edges)


# -- geometry oracles -----------------------------------------------------------

def moller_trumbore_all(tris, origin, direction, eps=1e-12):
    """Hit distance against every triangle (inf where missed), plain loop."""
    out = np.full(len(tris), np.inf)
    o = np.asarray(origin, dtype=float)
    d = np.asarray(direction, dtype=float)
    for i, (a, b, c) in enumerate(np.asarray(tris, dtype=float)):
        e1, e2 = b - a, c - a
        p = np.cross(d, e2)
        det = e1 @ p
        if abs(det) < eps:
            continue
        inv = 1.0 / det
        s = o - a
        u = (s @ p) * inv
        if u < 0 or u > 1:
            continue
        q = np.cross(s, e1)
        v = (d @ q) * inv
        if v < 0 or u + v > 1:
            continue
        t = (e2 @ q) * inv
        if t > 0:
            out[i] = t
    return out


def brute_force_hit(tris, origin, direction):
    """(distance, triangle id) of the nearest hit, or None."""
    t = moller_trumbore_all(tris, origin, direction)
    i = int(np.argmin(t))
    return None if not np.isfinite(t[i]) else (float(t[i]), i)


def segment_voxels_exact(origin, direction, length, vs):
    """Voxels of o + t*d, t in [0, length], in order of first entry.

    Dense samples every vs/100 alone can step over a corner clipped for less
    than the spacing, so the sample set also includes the midpoint of every
    interval between consecutive grid-plane crossings, which hits each
    visited voxel exactly.
    """
    o = np.asarray(origin, dtype=float)
    d = np.asarray(direction, dtype=float)
    ts = [0.0, float(length)]
    for a in range(3):
        if d[a] == 0:
            continue
        k0, k1 = sorted(((o[a]) / vs, (o[a] + length * d[a]) / vs))
        for k in range(int(np.floor(k0)), int(np.ceil(k1)) + 1):
            t = (k * vs - o[a]) / d[a]
            if 0 <= t <= length:
                ts.append(t)
    ts = np.unique(ts)
    dense = np.arange(0.0, length, vs / 100.0)
    samples = np.concatenate([[0.0], 0.5 * (ts[1:] + ts[:-1]), dense, [length]])
    samples.sort(kind="stable")
    keys = np.floor((o + samples[:, None] * d) / vs).astype(np.int64)
    out = []
    seen = set()
    for k in map(tuple, keys.tolist()):
        if k not in seen:
            seen.add(k)
            out.append(k)
    return out


def dense_samples_voxels(origin, direction, length, vs):
    """Keys hit by plain sampling every vs/100 (plus the endpoint)."""
    o = np.asarray(origin, dtype=float)
    d = np.asarray(direction, dtype=float)
    t = np.r_[np.arange(0.0, length, vs / 100.0), length]
    return set(map(tuple, np.floor((o + t[:, None] * d) / vs).astype(np.int64).tolist()))


def grid_binning(points, voxel):
    """Mean per occupied voxel via a dict, independent of voxel_mean_pool."""
    bins = {}
    for p in np.asarray(points, dtype=float):
        k = tuple(int(v) for v in np.floor(p / voxel))
        s = bins.setdefault(k, [np.zeros(3), 0])
        s[0] += p
        s[1] += 1
    return {k: s / n for k, (s, n) in bins.items()}


def free_map(bounds, params=None, allowed=None):
    """Map whose every voxel is clamped free."""
    from viewplan.occupancy import OccupancyMap

    occ = OccupancyMap(bounds, params, allowed)
    occ.carve_box(bounds)
    return occ


def set_voxel(occ, key, log_odds):
    g = tuple(np.asarray(key) - occ.offset)
    occ.log_odds[g] = log_odds
    occ.touched[g] = True
    occ._changed()
