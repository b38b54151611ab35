"""Regular flight patterns (circle, ellipse, meander, hemisphere) used for
initial scans and as baselines."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .geometry import Viewpoint
from .graph import GraphError, Motion, ViewpointGraph, sample_orientation
from .planner import SELECTED, SPARSE_MATCH, PlannerError, Trajectory, TrajectoryEntry, set_information

KINDS = ("circle", "ellipse", "meander", "hemisphere")


@dataclass(frozen=True)
class PatternParams:
    """Pattern geometry; unset sizes are derived from the ROI.

    ``count`` is the number of poses (circle / ellipse / hemisphere); the
    meander uses ``rows`` x ``cols``. ``radius`` is the circle / hemisphere
    radius (ellipse: semi-axis along x, ``radius_y`` along y). ``altitude``
    is an absolute z for circle, ellipse and meander.
    """

    count: int = 20
    radius: float | None = None
    radius_y: float | None = None
    altitude: float | None = None
    extent: tuple[float, float] | None = None
    rows: int = 5
    cols: int = 6
    min_elevation: float = math.radians(20.0)
    max_elevation: float = math.radians(70.0)


def _look(p, roi) -> Viewpoint:
    yaw, pitch = sample_orientation(p, roi, None, sigma_scale=0.0)
    return Viewpoint(tuple(float(v) for v in p), yaw, pitch)


SAFE_MARGIN = 5.0


def _default_radius(roi) -> float:
    ext = roi.extent
    return math.hypot(ext[0], ext[1]) / 2.0 + SAFE_MARGIN


def _default_altitude(roi) -> float:
    """Fixed safe altitude above everything in the ROI."""
    return roi.hi[2] + SAFE_MARGIN


def pattern_poses(kind: str, params: PatternParams, roi) -> list[Viewpoint]:
    c = roi.center
    if kind in ("circle", "ellipse"):
        rx = params.radius if params.radius is not None else _default_radius(roi)
        ry = rx if kind == "circle" else (params.radius_y if params.radius_y is not None else 0.7 * rx)
        z = params.altitude if params.altitude is not None else _default_altitude(roi)
        th = 2 * np.pi * np.arange(params.count) / max(params.count, 1)
        pts = np.c_[c[0] + rx * np.cos(th), c[1] + ry * np.sin(th), np.full(len(th), z)]
    elif kind == "meander":
        w, h = params.extent if params.extent is not None else (roi.extent[0], roi.extent[1])
        z = params.altitude if params.altitude is not None else _default_altitude(roi)
        xs = c[0] + np.linspace(-w / 2, w / 2, params.cols) if params.cols > 1 else np.array([c[0]])
        ys = c[1] + np.linspace(-h / 2, h / 2, params.rows) if params.rows > 1 else np.array([c[1]])
        pts = []
        for r, y in enumerate(ys):
            row = xs if r % 2 == 0 else xs[::-1]
            pts += [(x, y, z) for x in row]
        pts = np.array(pts, dtype=float)
    elif kind == "hemisphere":
        radius = params.radius if params.radius is not None else _default_radius(roi)
        base = np.array([c[0], c[1], roi.lo[2]])
        n = params.count
        rings = max(1, int(round(math.sqrt(n / 4))))
        els = np.linspace(params.min_elevation, params.max_elevation, rings)
        weights = np.cos(els) / np.cos(els).sum()
        per_ring = np.maximum(1, np.round(weights * n).astype(int))
        pts = []
        for el, m in zip(els, per_ring):
            az = 2 * np.pi * np.arange(m) / m
            pts += [base + radius * np.array([math.cos(el) * math.cos(a), math.cos(el) * math.sin(a), math.sin(el)])
                    for a in az]
        pts = np.array(pts)
    else:
        raise ValueError(f"unknown pattern kind {kind!r}; expected one of {KINDS}")
    return [_look(p, roi) for p in pts]


def _straight(poses: list[Viewpoint], per_viewpoint_cost: float, method: str) -> Trajectory:
    entries = [TrajectoryEntry(None, SELECTED, v) for v in poses]
    for e, nxt in zip(entries[:-1], poses[1:]):
        e.motion = Motion([e.viewpoint.position, nxt.position])
    return Trajectory(entries, per_viewpoint_cost, 0.0, method)


def _snap_to_graph(poses, graph: ViewpointGraph) -> list[int]:
    if not len(graph):
        raise GraphError("hemisphere pattern needs a nonempty viewpoint graph")
    adj = graph._matrix(0.0)
    _, labels = connected_components(adj, directed=False)
    biggest = np.bincount(labels).argmax()
    members = np.nonzero(labels == biggest)[0]
    if len(members) < 2 and len(poses) > 1:
        raise GraphError("viewpoint graph has no connected nodes for the hemisphere pattern")
    tree = cKDTree(graph.positions()[members])
    _, idx = tree.query(np.array([v.position for v in poses]))
    nodes = [int(members[i]) for i in np.atleast_1d(idx)]
    return list(dict.fromkeys(nodes))


def _routed(graph: ViewpointGraph, order: list[int], per_viewpoint_cost: float, method: str) -> Trajectory:
    nodes, roles = [order[0]], [SELECTED]
    for a, b in zip(order[:-1], order[1:]):
        route = graph.path(a, b, per_viewpoint_cost)
        if route is None:
            raise GraphError(f"hemisphere nodes {a} and {b} are not connected")
        nodes += route[1:]
        roles += [SPARSE_MATCH] * (len(route) - 2) + [SELECTED]
    entries = [TrajectoryEntry(n, r, graph.viewpoints[n]) for n, r in zip(nodes, roles)]
    for e, nxt in zip(entries[:-1], nodes[1:]):
        e.motion = graph.motion(e.node, nxt)
    return Trajectory(entries, per_viewpoint_cost, 0.0, method)


def pattern_trajectory(kind: str, params: PatternParams, scene, occ=None, graph: ViewpointGraph | None = None,
                       budget: float | None = None, per_viewpoint_cost: float = 9.0) -> Trajectory:
    """Trajectory for one regular pattern, truncated to ``budget`` if given.

    Circle, ellipse and meander fly straight legs at a fixed altitude and
    ignore the map; the hemisphere snaps its poses to graph nodes and flies
    along graph edges.
    """
    poses = pattern_poses(kind, params, scene.roi)
    if kind == "hemisphere":
        if graph is None:
            raise GraphError("hemisphere pattern requires a viewpoint graph")
        order = _snap_to_graph(poses, graph)
        traj = _routed(graph, order, per_viewpoint_cost, kind)
    else:
        traj = _straight(poses, per_viewpoint_cost, kind)
    if budget is not None:
        traj = truncate_to_budget(traj, budget)
    if graph is not None and kind == "hemisphere":
        traj.score = set_information(graph.observations, traj.selected_nodes())
    return traj


def truncate_to_budget(traj: Trajectory, budget: float) -> Trajectory:
    """Longest prefix whose budget cost fits."""
    entries = list(traj.entries)
    while len(entries) > 1 and _prefix_cost(entries, traj.per_viewpoint_cost) > budget + 1e-9:
        entries.pop()
    if len(entries) == 1 and budget < 0:
        raise PlannerError("negative budget")
    out = [replace(e) for e in entries]
    out[-1].motion = None
    return Trajectory(out, traj.per_viewpoint_cost, traj.score, traj.method, dict(traj.meta))


def _prefix_cost(entries, c) -> float:
    return sum(e.motion.length for e in entries[:-1]) + c * (len(entries) - 1)


def fit_pattern(kind: str, scene, budget: float, params: PatternParams | None = None, graph=None,
                per_viewpoint_cost: float = 9.0, max_count: int = 400) -> Trajectory:
    """Pattern with the most poses whose full (untruncated) flight fits ``budget``."""
    params = params or PatternParams()

    def build(n):
        if kind == "meander":
            cols = max(1, int(round(math.sqrt(n * 1.2))))
            p = replace(params, rows=max(1, int(math.ceil(n / cols))), cols=cols)
        else:
            p = replace(params, count=n)
        return pattern_trajectory(kind, p, scene, graph=graph, per_viewpoint_cost=per_viewpoint_cost)

    best = build(1)
    lo, hi = 1, max_count
    while lo < hi:
        mid = (lo + hi + 1) // 2
        t = build(mid)
        if t.budget_cost <= budget + 1e-9:
            lo, best = mid, t
        else:
            hi = mid - 1
    if best.budget_cost > budget + 1e-9:
        best = truncate_to_budget(best, budget)
    return best
