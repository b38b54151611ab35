"""Viewpoint candidate graph: sampling, free-space motions, shortest paths."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from .geometry import Box, Viewpoint, look_at_angles, wrap_angle
from .occupancy import OccupancyMap
from .visibility import ViewpointObservation, matchable

logger = logging.getLogger(__name__)

AXIAL = np.array([[-1, 0, 0], [1, 0, 0], [0, -1, 0], [0, 1, 0], [0, 0, -1], [0, 0, 1]], dtype=float)


class GraphError(RuntimeError):
    pass


@dataclass(frozen=True)
class SamplerParams:
    base_step: float = 5.0
    growth: float = 0.05
    min_separation_factor: float = 0.5
    min_viewpoints: int = 5000
    max_viewpoints: int = 10000
    rng_seed: int = 0
    drone_half_extent: float = 0.75
    clearance: float = 1.0
    max_random_attempts: int = 200000

    def __post_init__(self):
        if self.base_step <= 0 or self.growth < 0:
            raise ValueError("need base_step > 0 and growth >= 0")
        if not 0 < self.min_separation_factor < 1:
            raise ValueError("min_separation_factor must lie in (0, 1)")
        if self.min_viewpoints < 0 or self.max_viewpoints < 1:
            raise ValueError("bad viewpoint count limits")

    @property
    def check_half_extent(self) -> float:
        """Half edge of the box that must be free around a viewpoint."""
        return self.drone_half_extent + self.clearance


@dataclass(frozen=True)
class RRTParams:
    iterations: int = 2000
    goal_bias: float = 0.1
    step: float = 2.0
    rewire_scale: float = 20.0
    sample_margin: float = 10.0
    check_step: float = 0.1


@dataclass
class Motion:
    waypoints: np.ndarray

    def __post_init__(self):
        self.waypoints = np.asarray(self.waypoints, dtype=np.float64).reshape(-1, 3)

    @property
    def length(self) -> float:
        return float(np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1).sum())

    def reversed(self) -> "Motion":
        return Motion(self.waypoints[::-1].copy())


@dataclass
class ViewpointGraph:
    viewpoints: list[Viewpoint]
    observations: list[ViewpointObservation | None] = field(default_factory=list)
    edges: dict[tuple[int, int], Motion] = field(default_factory=dict)

    def __post_init__(self):
        if not self.observations:
            self.observations = [None] * len(self.viewpoints)
        self.edges = {(min(a, b), max(a, b)): m for (a, b), m in self.edges.items()}
        self._sp_cache: dict[tuple[int, float], tuple[np.ndarray, np.ndarray]] = {}
        self._csr: dict[float, csr_matrix] = {}

    def __len__(self):
        return len(self.viewpoints)

    def add_edge(self, a: int, b: int, motion: Motion):
        if a > b:
            a, b, motion = b, a, motion.reversed()
        self.edges[(a, b)] = motion
        self._sp_cache.clear()
        self._csr.clear()

    def motion(self, a: int, b: int) -> Motion:
        if a <= b:
            return self.edges[(a, b)]
        return self.edges[(b, a)].reversed()

    def degree(self, a: int) -> int:
        return sum(1 for e in self.edges if a in e)

    def edge_weight(self, a: int, b: int) -> float:
        return self.edges[(min(a, b), max(a, b))].length

    def _matrix(self, hop_cost: float) -> csr_matrix:
        if hop_cost not in self._csr:
            n = len(self)
            if self.edges:
                ij = np.array(list(self.edges), dtype=np.int64)
                w = np.array([m.length for m in self.edges.values()]) + hop_cost
                rows = np.r_[ij[:, 0], ij[:, 1]]
                cols = np.r_[ij[:, 1], ij[:, 0]]
                data = np.r_[w, w]
                # build CSR by hand so zero-weight edges stay explicit
                order = np.lexsort((cols, rows))
                rows, cols, data = rows[order], cols[order], data[order]
                indptr = np.searchsorted(rows, np.arange(n + 1))
                self._csr[hop_cost] = csr_matrix((data, cols, indptr), shape=(n, n))
            else:
                self._csr[hop_cost] = csr_matrix((n, n))
        return self._csr[hop_cost]

    def distances_from(self, a: int, hop_cost: float = 0.0) -> np.ndarray:
        """Shortest-path cost from ``a`` to every node (edge length + hop_cost per edge)."""
        return self._sssp(a, hop_cost)[0]

    def _sssp(self, a: int, hop_cost: float):
        key = (int(a), float(hop_cost))
        if key not in self._sp_cache:
            d, pred = dijkstra(self._matrix(hop_cost), directed=False, indices=int(a),
                               return_predecessors=True)
            self._sp_cache[key] = (d, pred)
        return self._sp_cache[key]

    def distance(self, a: int, b: int, hop_cost: float = 0.0) -> float:
        return float(self._sssp(a, hop_cost)[0][b])

    def path(self, a: int, b: int, hop_cost: float = 0.0) -> list[int] | None:
        d, pred = self._sssp(a, hop_cost)
        if not np.isfinite(d[b]):
            return None
        out = [int(b)]
        while out[-1] != a:
            out.append(int(pred[out[-1]]))
        return out[::-1]

    def positions(self) -> np.ndarray:
        return np.array([v.position for v in self.viewpoints]).reshape(-1, 3)

    def to_json(self) -> dict:
        return {
            "nodes": [{"id": i, **v.to_dict()} for i, v in enumerate(self.viewpoints)],
            "edges": [{"a": a, "b": b, "length": m.length, "waypoints": m.waypoints.tolist()}
                      for (a, b), m in sorted(self.edges.items())],
        }

    @classmethod
    def from_json(cls, doc: dict, observations=None) -> "ViewpointGraph":
        vps = [Viewpoint.from_dict(n) for n in sorted(doc["nodes"], key=lambda n: n["id"])]
        edges = {(e["a"], e["b"]): Motion(e["waypoints"]) for e in doc["edges"]}
        return cls(vps, list(observations) if observations else [], edges)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path, observations=None) -> "ViewpointGraph":
        with open(path) as fh:
            return cls.from_json(json.load(fh), observations)


def shortest_path(graph: ViewpointGraph, a: int, b: int, hop_cost: float = 0.0):
    """(node sequence, geometric length) of the cheapest a-b route, or None."""
    nodes = graph.path(a, b, hop_cost)
    if nodes is None:
        return None
    length = sum(graph.edge_weight(u, v) for u, v in zip(nodes[:-1], nodes[1:]))
    return nodes, float(length)


# -- candidate sampling ----------------------------------------------------------

def compute_step_size(position, roi: Box, params: SamplerParams) -> float:
    return params.base_step * (1.0 + params.growth * roi.distance(position))


def _angular_sigma(position, roi: Box) -> tuple[float, float]:
    p = np.asarray(position, dtype=float)
    yc, pc = _raw_angles(p, roi.center)
    ys, ps = [], []
    for c in roi.corners():
        y, pt = _raw_angles(p, c)
        ys.append(wrap_angle(y - yc))
        ps.append(pt - pc)
    return 0.5 * (max(ys) - min(ys)), 0.5 * (max(ps) - min(ps))


def _raw_angles(p, target):
    d = np.asarray(target, dtype=float) - p
    return math.atan2(d[1], d[0]), math.atan2(d[2], math.hypot(d[0], d[1]))


def sample_orientation(position, roi: Box, rng: np.random.Generator, sigma_scale: float = 1.0):
    """(yaw, pitch) aimed at the ROI center plus Gaussian jitter whose
    standard deviation is the angular half-range the ROI box subtends."""
    yaw, pitch = look_at_angles(position, roi.center)
    sy, sp = _angular_sigma(position, roi)
    if sigma_scale > 0:
        yaw += rng.normal(0.0, sy * sigma_scale) if sy > 0 else 0.0
        pitch += rng.normal(0.0, sp * sigma_scale) if sp > 0 else 0.0
    return wrap_angle(yaw), min(0.0, max(-math.pi / 2, pitch))


class _PointHash:
    def __init__(self, cell: float):
        self.cell = cell
        self.cells: dict[tuple[int, int, int], list[np.ndarray]] = {}

    def _key(self, p):
        return tuple(int(v) for v in np.floor(p / self.cell))

    def add(self, p):
        self.cells.setdefault(self._key(p), []).append(np.asarray(p, dtype=float))

    def any_within(self, p, r: float) -> bool:
        k = self._key(p)
        reach = int(math.ceil(r / self.cell))
        for dx in range(-reach, reach + 1):
            for dy in range(-reach, reach + 1):
                for dz in range(-reach, reach + 1):
                    for q in self.cells.get((k[0] + dx, k[1] + dy, k[2] + dz), ()):
                        if float(np.sum((q - p) ** 2)) < r * r:
                            return True
        return False


def viewpoint_is_free(p, occ: OccupancyMap, scene, params: SamplerParams) -> bool:
    if not scene.is_flyable(p):
        return False
    return occ.is_free_box(Box.from_center(p, params.check_half_extent))


def generate_viewpoints(seeds: list[Viewpoint], occ: OccupancyMap, scene,
                        params: SamplerParams | None = None) -> list[Viewpoint]:
    """Breadth-first candidate expansion with distance-adaptive step size."""
    params = params or SamplerParams()
    rng = np.random.default_rng(params.rng_seed)
    roi = scene.roi
    out: list[Viewpoint] = []
    index = _PointHash(params.base_step * params.min_separation_factor)
    front: list[int] = []

    def add(vp: Viewpoint):
        out.append(vp)
        index.add(vp.p)
        front.append(len(out) - 1)

    for s in seeds:
        if viewpoint_is_free(s.p, occ, scene, params):
            add(s)
    if not out:
        raise GraphError("no seed viewpoint lies in free space")
    dropped = len(seeds) - len(out)
    if dropped:
        logger.warning("%d seed viewpoint(s) not in free space were dropped", dropped)

    def try_add(p) -> None:
        sep = params.min_separation_factor * compute_step_size(p, roi, params)
        if index.any_within(p, sep):
            return
        if not viewpoint_is_free(p, occ, scene, params):
            return
        yaw, pitch = sample_orientation(p, roi, rng)
        add(Viewpoint(tuple(p), yaw, pitch))

    attempts = 0
    while (front or len(out) < params.min_viewpoints) and len(out) < params.max_viewpoints:
        if front:
            j = int(rng.integers(len(front)))
            front[j], front[-1] = front[-1], front[j]
            ref = out[front.pop()].p
            step = compute_step_size(ref, roi, params)
            for d in AXIAL:
                if len(out) >= params.max_viewpoints:
                    break
                try_add(ref + step * d)
        else:
            attempts += 1
            if attempts > params.max_random_attempts:
                logger.info("random sampling quiesced after %d attempts", attempts - 1)
                break
            try_add(scene.allowed_space.sample(rng))
    return out


# -- motions ---------------------------------------------------------------------

def find_motion(p1, p2, occ: OccupancyMap, half_extent: float, rrt: RRTParams | None = None,
                rng: np.random.Generator | None = None) -> Motion | None:
    """Straight segment if free, otherwise an RRT* polyline (or None)."""
    rrt = rrt or RRTParams()
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    half = np.full(3, half_extent)
    if occ.is_free_segment(p1, p2, half, rrt.check_step):
        return Motion([p1, p2])
    if rrt.iterations <= 0:
        return None
    return _rrt_star(p1, p2, occ, half, rrt, rng or np.random.default_rng(0))


def _rrt_star(start, goal, occ, half, prm: RRTParams, rng) -> Motion | None:
    free = occ.allowed_space
    lo = np.maximum(np.minimum(start, goal) - prm.sample_margin, free.lo + half)
    hi = np.minimum(np.maximum(start, goal) + prm.sample_margin, free.hi - half)
    if np.any(lo > hi):
        return None
    n_max = prm.iterations + 1
    pts = np.empty((n_max, 3))
    cost = np.empty(n_max)
    parent = np.full(n_max, -1, dtype=np.int64)
    children: list[list[int]] = [[]]
    pts[0], cost[0] = start, 0.0
    n = 1
    best_goal_cost = np.inf
    best_goal_parent = -1

    def seg_free(a, b):
        return occ.is_free_segment(a, b, half, prm.check_step)

    for _ in range(prm.iterations):
        q = goal if rng.random() < prm.goal_bias else rng.uniform(lo, hi)
        d2 = np.sum((pts[:n] - q) ** 2, axis=1)
        near_i = int(np.argmin(d2))
        dist = math.sqrt(d2[near_i])
        if dist == 0:
            continue
        new = pts[near_i] + (q - pts[near_i]) * min(1.0, prm.step / dist)
        if not seg_free(pts[near_i], new):
            continue
        radius = min(prm.rewire_scale * (math.log(n + 1) / (n + 1)) ** (1 / 3), 2 * prm.step)
        dn = np.sqrt(np.sum((pts[:n] - new) ** 2, axis=1))
        near = np.nonzero(dn <= radius)[0]
        par, c_best = near_i, cost[near_i] + dn[near_i]
        for k in near[np.argsort(cost[near] + dn[near], kind="stable")]:
            c = cost[k] + dn[k]
            if c >= c_best:
                break
            if seg_free(pts[k], new):
                par, c_best = int(k), c
                break
        pts[n], cost[n], parent[n] = new, c_best, par
        children.append([])
        children[par].append(n)
        me = n
        n += 1
        for k in near:
            if k == par:
                continue
            c = c_best + dn[k]
            if c < cost[k] and seg_free(new, pts[k]):
                children[parent[k]].remove(int(k))
                parent[k] = me
                children[me].append(int(k))
                delta = cost[k] - c
                stack = [int(k)]
                while stack:
                    u = stack.pop()
                    cost[u] -= delta
                    stack.extend(children[u])
        dg = float(np.linalg.norm(goal - new))
        if c_best + dg < best_goal_cost and dg <= prm.step and seg_free(new, goal):
            best_goal_cost, best_goal_parent = c_best + dg, me
        if n >= n_max:
            break
    if best_goal_parent < 0:
        return None
    chain = [goal]
    u = best_goal_parent
    while u >= 0:
        chain.append(pts[u].copy())
        u = int(parent[u])
    return Motion(chain[::-1])


def find_motions(viewpoints: list[Viewpoint], observations: list, occ: OccupancyMap,
                 k: int = 10, alpha: float = 0.4, half_extent: float = 1.75,
                 rrt: RRTParams | None = None, seed: int = 0) -> dict[tuple[int, int], Motion]:
    """Edges between each node and its ``k`` nearest neighbours that are
    matchable and connected by a free-space motion."""
    if k < 1:
        raise ValueError("k must be >= 1")
    edges: dict[tuple[int, int], Motion] = {}
    n = len(viewpoints)
    if n < 2:
        return edges
    pos = np.array([v.position for v in viewpoints])
    _, nn = cKDTree(pos).query(pos, k=min(k + 1, n))
    tried = set()
    for i in range(n):
        for j in np.atleast_1d(nn[i]):
            j = int(j)
            if j == i or j >= n:
                continue
            a, b = min(i, j), max(i, j)
            if (a, b) in tried:
                continue
            tried.add((a, b))
            la = _lowres(observations[a])
            lb = _lowres(observations[b])
            if not matchable(la, lb, alpha):
                continue
            m = find_motion(pos[a], pos[b], occ, half_extent, rrt, np.random.default_rng([seed, a, b]))
            if m is not None:
                edges[(a, b)] = m
    return edges


def _lowres(ob):
    if ob is None:
        return frozenset()
    return ob.lowres if isinstance(ob, ViewpointObservation) else ob
