"""Budget-constrained viewpoint selection.

Coverage bookkeeping, the recursive greedy solver with a lazily refreshed
gain list, greedy / cost-benefit baselines, an exhaustive oracle for small
graphs and trajectory assembly.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from .geometry import Viewpoint
from .graph import GraphError, Motion, ViewpointGraph
from .occupancy import VoxelKey
from .visibility import ViewpointObservation, decode_keys, encode_keys

SELECTED = "selected"
SPARSE_MATCH = "sparse_match"


class PlannerError(RuntimeError):
    pass


@dataclass(frozen=True)
class BudgetParams:
    budget: float
    per_viewpoint_cost: float = 9.0

    def __post_init__(self):
        if self.budget < 0:
            raise ValueError("budget must be nonnegative")
        if self.per_viewpoint_cost < 0:
            raise ValueError("per_viewpoint_cost must be nonnegative")


# -- coverage ----------------------------------------------------------------------

class CoverageState:
    """Accumulated information VI per voxel, saturating at 1.

    Values live in a dense array over a sorted table of packed voxel codes;
    observations are mapped onto it once and the positions are cached.
    Unseen voxels read as 0.
    """

    def __init__(self, observations=()):
        obs = [o for o in observations if o is not None and len(o)]
        if obs:
            self.codes = np.unique(np.concatenate([o.codes for o in obs]))
        else:
            self.codes = np.zeros(0, dtype=np.int64)
        self.values = np.zeros(len(self.codes))
        self.version = 0
        self._pos: dict[int, tuple[ViewpointObservation, np.ndarray]] = {}

    def copy(self) -> "CoverageState":
        out = CoverageState.__new__(CoverageState)
        out.codes = self.codes
        out.values = self.values.copy()
        out.version = self.version
        out._pos = self._pos
        return out

    def _positions(self, ob: ViewpointObservation) -> np.ndarray:
        """Index of each observed voxel in ``codes`` (-1 if absent)."""
        hit = self._pos.get(id(ob))
        if hit is not None and hit[0] is ob:
            return hit[1]
        c = ob.codes
        pos = np.searchsorted(self.codes, c)
        if len(self.codes):
            clipped = np.minimum(pos, len(self.codes) - 1)
            pos = np.where(self.codes[clipped] == c, clipped, -1)
        else:
            pos = np.full(len(c), -1)
        if np.all(pos >= 0):
            self._pos[id(ob)] = (ob, pos)
        return pos

    def _extend(self, codes: np.ndarray):
        merged = np.union1d(self.codes, codes)
        vals = np.zeros(len(merged))
        vals[np.searchsorted(merged, self.codes)] = self.values
        self.codes, self.values = merged, vals
        self._pos = {}

    def current(self, ob: ViewpointObservation) -> np.ndarray:
        pos = self._positions(ob)
        if not len(self.values):
            return np.zeros(len(pos))
        return np.where(pos >= 0, self.values[pos], 0.0)

    def gain(self, ob: ViewpointObservation | None) -> float:
        if ob is None or not len(ob):
            return 0.0
        return float(np.minimum(ob.vi, 1.0 - self.current(ob)).sum())

    def add(self, ob: ViewpointObservation | None) -> "CoverageState":
        if ob is None or not len(ob):
            return self
        pos = self._positions(ob)
        if np.any(pos < 0):
            self._extend(ob.codes)
            pos = self._positions(ob)
        self.values[pos] = np.minimum(1.0, self.values[pos] + ob.vi)
        self.version += 1
        return self

    def total(self) -> float:
        return float(self.values.sum())

    def __getitem__(self, key) -> float:
        c = int(encode_keys(np.asarray(key)[None])[0])
        i = int(np.searchsorted(self.codes, c))
        if i < len(self.codes) and self.codes[i] == c:
            return float(self.values[i])
        return 0.0

    def as_dict(self) -> dict[VoxelKey, float]:
        nz = np.nonzero(self.values)[0]
        keys = decode_keys(self.codes[nz])
        return {VoxelKey(*map(int, k)): float(v) for k, v in zip(keys, self.values[nz])}


def total_information(coverage: CoverageState) -> float:
    return coverage.total()


def information_gain(observation: ViewpointObservation | None, coverage: CoverageState) -> float:
    return coverage.gain(observation)


def apply_viewpoint(coverage: CoverageState, observation: ViewpointObservation | None) -> CoverageState:
    """Add an observation in place (and return the same state)."""
    return coverage.add(observation)


def set_information(observations, nodes) -> float:
    """Objective value of a node set, computed from scratch."""
    cov = CoverageState([observations[n] for n in nodes])
    for n in dict.fromkeys(nodes):
        cov.add(observations[n])
    return cov.total()


# -- lazy gains ---------------------------------------------------------------------

class LazyGainList:
    """Cached gains sorted by (gain desc, node id asc).

    Each entry is ``[gain, node, stamp]``; an entry whose stamp differs from
    the coverage version is an upper bound that must be refreshed before use.
    """

    def __init__(self, observations, coverage: CoverageState, nodes=None):
        nodes = range(len(observations)) if nodes is None else nodes
        self.observations = observations
        self.entries = [[coverage.gain(observations[n]), int(n), coverage.version] for n in nodes]
        self.entries.sort(key=lambda e: (-e[0], e[1]))
        self.evaluations = len(self.entries)

    def __len__(self):
        return len(self.entries)

    @staticmethod
    def _before(a, b) -> bool:
        return a[0] > b[0] or (a[0] == b[0] and a[1] < b[1])

    def _refresh(self, i: int, coverage: CoverageState):
        e = self.entries[i]
        e[0] = coverage.gain(self.observations[e[1]])
        e[2] = coverage.version
        self.evaluations += 1
        j = i
        while j + 1 < len(self.entries) and self._before(self.entries[j + 1], e):
            self.entries[j] = self.entries[j + 1]
            j += 1
        self.entries[j] = e
        return j == i


def select_middle_viewpoint(lazy: LazyGainList, graph: ViewpointGraph, v_s: int, v_e: int, budget: float,
                            coverage: CoverageState, path_nodes, hop_cost: float = 0.0) -> int | None:
    """Node with maximum gain whose detour v_s -> node -> v_e fits ``budget``."""
    d_s = graph.distances_from(v_s, hop_cost)
    d_e = graph.distances_from(v_e, hop_cost)
    entries = lazy.entries
    i = 0
    while i < len(entries):
        gain, node, stamp = entries[i]
        if node in path_nodes or not d_s[node] + d_e[node] <= budget:
            i += 1
            continue
        if stamp != coverage.version:
            if not lazy._refresh(i, coverage):
                continue
            gain = entries[i][0]
        return node if gain > 0 else None
    return None


# -- trajectories ----------------------------------------------------------------

@dataclass
class TrajectoryEntry:
    node: int | None
    role: str
    viewpoint: Viewpoint
    motion: Motion | None = None   # leg to the next entry


@dataclass
class Trajectory:
    entries: list[TrajectoryEntry]
    per_viewpoint_cost: float = 9.0
    score: float = 0.0
    method: str = ""
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.entries)

    @property
    def total_length(self) -> float:
        return float(sum(e.motion.length for e in self.entries if e.motion is not None))

    @property
    def budget_cost(self) -> float:
        """Flight length plus the per-viewpoint cost for every move between entries."""
        return self.total_length + self.per_viewpoint_cost * max(len(self.entries) - 1, 0)

    @property
    def nodes(self) -> list[int | None]:
        return [e.node for e in self.entries]

    def selected_nodes(self) -> list[int]:
        return list(dict.fromkeys(e.node for e in self.entries if e.role == SELECTED and e.node is not None))

    def viewpoints(self) -> list[Viewpoint]:
        return [e.viewpoint for e in self.entries]

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "entries": [{"node": e.node, "role": e.role, **e.viewpoint.to_dict()} for e in self.entries],
            "legs": [e.motion.waypoints.tolist() for e in self.entries[:-1]],
            "total_length": self.total_length,
            "budget_cost": self.budget_cost,
            "per_viewpoint_cost": self.per_viewpoint_cost,
            "score": self.score,
            **({"meta": self.meta} if self.meta else {}),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Trajectory":
        entries = [TrajectoryEntry(e["node"], e["role"], Viewpoint.from_dict(e)) for e in doc["entries"]]
        for e, leg in zip(entries, doc.get("legs", [])):
            e.motion = Motion(leg)
        return cls(entries, doc["per_viewpoint_cost"], doc["score"], doc.get("method", ""), doc.get("meta", {}))

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=True)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path) -> "Trajectory":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def assemble_trajectory(graph: ViewpointGraph, order: list[int], per_viewpoint_cost: float = 9.0,
                        method: str = "", score: float | None = None) -> Trajectory:
    """Expand consecutive selected nodes along shortest graph routes; the
    routed-through nodes become sparse-match entries."""
    if not order:
        raise PlannerError("empty selection")
    nodes = [order[0]]
    roles = [SELECTED]
    for a, b in zip(order[:-1], order[1:]):
        route = graph.path(a, b, per_viewpoint_cost)
        if route is None:
            raise GraphError(f"nodes {a} and {b} are not connected")
        nodes += route[1:]
        roles += [SPARSE_MATCH] * (len(route) - 2) + [SELECTED]
    entries = [TrajectoryEntry(n, r, graph.viewpoints[n]) for n, r in zip(nodes, roles)]
    for e, nxt in zip(entries[:-1], nodes[1:]):
        e.motion = graph.motion(e.node, nxt)
    traj = Trajectory(entries, per_viewpoint_cost, 0.0, method)
    traj.score = set_information(graph.observations, traj.selected_nodes()) if score is None else score
    return traj


def route_cost(graph: ViewpointGraph, order: list[int], hop_cost: float) -> float:
    return float(sum(graph.distance(a, b, hop_cost) for a, b in zip(order[:-1], order[1:])))


# -- solvers ---------------------------------------------------------------------

def default_start(graph: ViewpointGraph) -> int:
    """Node with the largest standalone information, preferring connected nodes."""
    if not len(graph):
        raise PlannerError("graph is empty")
    info = np.array([o.standalone_information() if o is not None else 0.0 for o in graph.observations])
    connected = np.zeros(len(graph), dtype=bool)
    for a, b in graph.edges:
        connected[a] = connected[b] = True
    if connected.any():
        info = np.where(connected, info, -np.inf)
    return int(np.argmax(info))


def _check_start(graph: ViewpointGraph, start: int | None) -> int:
    if not len(graph):
        raise PlannerError("graph is empty")
    start = default_start(graph) if start is None else int(start)
    if not 0 <= start < len(graph):
        raise PlannerError(f"start node {start} not in graph")
    return start


def _finish(graph, order, budget: BudgetParams, method) -> Trajectory:
    traj = assemble_trajectory(graph, order, budget.per_viewpoint_cost, method)
    if traj.budget_cost > budget.budget + 1e-9:
        raise PlannerError(f"{method}: budget exceeded ({traj.budget_cost:.3f} > {budget.budget:.3f})")
    return traj


def recursive_greedy(graph: ViewpointGraph, budget: BudgetParams, start: int | None = None,
                     stats: dict | None = None) -> Trajectory:
    """Closed tour from ``start`` chosen by budget-splitting recursion.

    Each call picks the best reachable middle node, spends at most half of
    its budget on the first half and hands whatever is left to the second.
    """
    start = _check_start(graph, start)
    c = budget.per_viewpoint_cost
    obs = graph.observations
    # V_s and V_e are path entries from the outset
    cov = CoverageState(obs)
    cov.add(obs[start])
    lazy = LazyGainList(obs, cov)
    on_path = {start}
    weights = [m.length + c for m in graph.edges.values()]
    min_hop = min((w for w in weights if w > 0), default=math.inf)

    def recurse(v_s, v_e, b) -> list[int]:
        if b < min_hop:
            return []
        v_m = select_middle_viewpoint(lazy, graph, v_s, v_e, b, cov, on_path, c)
        if v_m is None:
            return []
        cov.add(obs[v_m])
        on_path.add(v_m)
        # capping at b - d(v_m, v_e) leaves the second half room to finish
        b_first = min(b / 2.0, b - graph.distance(v_m, v_e, c))
        first = recurse(v_s, v_m, b_first)
        spent = route_cost(graph, [v_s, *first, v_m], c)
        second = recurse(v_m, v_e, b - spent)
        return first + [v_m] + second

    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 4 * len(graph) + 200))
    try:
        interior = recurse(start, start, float(budget.budget))
    finally:
        sys.setrecursionlimit(limit)
    order = [start, *interior, start]
    order = [v for k, v in enumerate(order) if k == 0 or v != order[k - 1]]
    if stats is not None:
        stats["evaluations"] = lazy.evaluations
    return _finish(graph, order, budget, "recursive_greedy")


def _tour_baseline(graph, budget: BudgetParams, start, ratio: bool, method: str) -> Trajectory:
    start = _check_start(graph, start)
    c = budget.per_viewpoint_cost
    obs = graph.observations
    cov = CoverageState(obs)
    cov.add(obs[start])
    back = graph.distances_from(start, c)
    order = [start]
    spent = 0.0
    chosen = {start}
    while True:
        d_last = graph.distances_from(order[-1], c)
        best, best_key = None, None
        for x in range(len(graph)):
            if x in chosen or not spent + d_last[x] + back[x] <= budget.budget:
                continue
            g = cov.gain(obs[x])
            if g <= 0:
                continue
            key = g / d_last[x] if ratio and d_last[x] > 0 else (math.inf if ratio else g)
            if best_key is None or key > best_key:
                best, best_key = x, key
        if best is None:
            break
        spent += d_last[best]
        order.append(best)
        chosen.add(best)
        cov.add(obs[best])
    if len(order) > 1:
        order.append(start)
    return _finish(graph, order, budget, method)


def greedy_baseline(graph: ViewpointGraph, budget: BudgetParams, start: int | None = None) -> Trajectory:
    """Append the feasible node with the largest gain until none is left."""
    return _tour_baseline(graph, budget, start, False, "greedy")


def cost_benefit_baseline(graph: ViewpointGraph, budget: BudgetParams, start: int | None = None) -> Trajectory:
    """Append the feasible node with the largest gain per unit of travel."""
    return _tour_baseline(graph, budget, start, True, "cost_benefit")


MAX_BRUTE_FORCE_NODES = 12


def brute_force_oracle(graph: ViewpointGraph, budget: BudgetParams, start: int | None = None):
    """Exact optimum over closed tours from ``start`` (Held-Karp per subset)."""
    n = len(graph)
    if n > MAX_BRUTE_FORCE_NODES:
        raise PlannerError(f"brute force limited to {MAX_BRUTE_FORCE_NODES} nodes, got {n}")
    start = _check_start(graph, start)
    c = budget.per_viewpoint_cost
    others = [v for v in range(n) if v != start]
    m = len(others)
    ids = [start, *others]
    dist = np.array([graph.distances_from(v, c)[ids] for v in ids])
    # dp[mask][j]: cheapest path start -> ... -> others[j] covering mask
    size = 1 << m
    dp = np.full((size, max(m, 1)), np.inf)
    parent = np.full((size, max(m, 1)), -1, dtype=np.int64)
    for j in range(m):
        dp[1 << j, j] = dist[0, j + 1]
    for mask in range(1, size):
        for j in range(m):
            cur = dp[mask, j]
            if not np.isfinite(cur) or not (mask >> j) & 1:
                continue
            for k in range(m):
                if (mask >> k) & 1:
                    continue
                nxt = cur + dist[j + 1, k + 1]
                if nxt < dp[mask | 1 << k, k]:
                    dp[mask | 1 << k, k] = nxt
                    parent[mask | 1 << k, k] = j
    best_score = set_information(graph.observations, [start])
    best_order = [start]
    for mask in range(1, size):
        closing = dp[mask, :m] + dist[1:, 0]
        j = int(np.argmin(closing))
        if not closing[j] <= budget.budget:
            continue
        nodes = [start] + [others[k] for k in range(m) if (mask >> k) & 1]
        score = set_information(graph.observations, nodes)
        if score > best_score + 1e-12:
            seq = []
            cur_mask, cur = mask, j
            while cur >= 0:
                seq.append(others[cur])
                prev = int(parent[cur_mask, cur])
                cur_mask &= ~(1 << cur)
                cur = prev
            best_score, best_order = score, [start, *seq[::-1], start]
    return best_score, _finish(graph, best_order, budget, "brute_force")


def brute_force_permutations(graph: ViewpointGraph, budget: BudgetParams, start: int | None = None) -> float:
    """Literal enumeration of subsets and visiting orders (tiny graphs only)."""
    start = _check_start(graph, start)
    c = budget.per_viewpoint_cost
    others = [v for v in range(len(graph)) if v != start]
    best = set_information(graph.observations, [start])
    for r in range(1, len(others) + 1):
        for subset in itertools.combinations(others, r):
            score = set_information(graph.observations, [start, *subset])
            if score <= best:
                continue
            for perm in itertools.permutations(subset):
                if route_cost(graph, [start, *perm, start], c) <= budget.budget:
                    best = score
                    break
    return best


SOLVERS = {
    "recursive_greedy": recursive_greedy,
    "greedy": greedy_baseline,
    "cost_benefit": cost_benefit_baseline,
}


def write_score_table(rows: list[dict], path) -> None:
    """CSV score table for sweeps (one row per run)."""
    fields = list(dict.fromkeys(k for r in rows for k in r))
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        w.writerows(rows)
