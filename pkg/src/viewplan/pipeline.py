"""Stage-by-stage pipeline: initial scan, graph building, planning,
capture simulation and scoring, with resumable on-disk artifacts."""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .evaluation import FusionParams, MetricsReport, fuse_depth_maps, precision_recall_f1, simulate_capture
from .geometry import Box, CameraIntrinsics, Viewpoint
from .graph import GraphError, RRTParams, SamplerParams, ViewpointGraph, find_motions, generate_viewpoints
from .occupancy import OccupancyMap, OccupancyParams, map_for_scene
from .patterns import PatternParams, fit_pattern, pattern_poses, pattern_trajectory
from .planner import SOLVERS, BudgetParams, Trajectory, set_information
from .procedural import SCENES
from .scene import (Scene, load_scene, ray_mesh_intersect, render_depth_normal, sample_ground_truth_points,
                    triangles_intersect_box)
from .visibility import InformationParams, compute_observation, load_observations, save_observations

logger = logging.getLogger(__name__)

PLANNERS = tuple(SOLVERS)
PATTERNS = ("circle", "ellipse", "meander", "hemisphere")
METHODS = PLANNERS + PATTERNS


class ConfigError(ValueError):
    pass


class InfeasibleError(RuntimeError):
    pass


@dataclass
class CameraConfig:
    width: int = 600
    height: int = 450
    focal_length: float = 345.0
    raycast_scale: float = 1.0      # information ray-cast resolution
    lowres_scale: float = 0.5       # matchability ray-cast resolution
    eval_scale: float = 1.0         # capture / fusion resolution

    def intrinsics(self, scale: float = 1.0) -> CameraIntrinsics:
        return CameraIntrinsics(self.width, self.height, self.focal_length).scaled(scale)


@dataclass
class GraphConfig:
    k: int = 10
    alpha: float = 0.4


@dataclass
class InitialScanConfig:
    kind: str = "circle"
    count: int = 20
    rows: int = 5
    cols: int = 6
    radius: float | None = None
    altitude: float | None = None
    extent: tuple[float, float] | None = None
    carve: bool = True


@dataclass
class EvaluationConfig:
    delta: float = 0.1
    include_initial: bool = True
    gt_max_triangle_area: float = 0.25
    gt_samples_per_triangle: int = 100
    gt_resample_voxel: float = 0.05


_BLOCKS = {
    "occupancy": OccupancyParams,
    "information": InformationParams,
    "sampler": SamplerParams,
    "rrt": RRTParams,
    "fusion": FusionParams,
    "camera": CameraConfig,
    "graph": GraphConfig,
    "initial_scan": InitialScanConfig,
    "evaluation": EvaluationConfig,
}


@dataclass
class PipelineConfig:
    scene: dict = field(default_factory=lambda: {"builtin": "courtyard"})
    budget: float = 900.0
    per_viewpoint_cost: float = 9.0
    method: str = "recursive_greedy"
    methods: list = field(default_factory=lambda: list(METHODS))
    rng_seed: int = 0
    rounds: int = 1
    output_dir: str = "run"
    threads: int = 1
    patterns: dict = field(default_factory=dict)
    occupancy: OccupancyParams = field(default_factory=OccupancyParams)
    information: InformationParams = field(default_factory=InformationParams)
    sampler: SamplerParams = field(default_factory=SamplerParams)
    rrt: RRTParams = field(default_factory=RRTParams)
    fusion: FusionParams = field(default_factory=FusionParams)
    camera: CameraConfig = field(default_factory=CameraConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)
    initial_scan: InitialScanConfig = field(default_factory=InitialScanConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        doc = copy.deepcopy(doc)
        names = {f.name for f in fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = {}
        for key, value in doc.items():
            if key in _BLOCKS:
                if not isinstance(value, dict):
                    raise ConfigError(f"'{key}' must be an object")
                block = _BLOCKS[key]
                allowed = {f.name for f in fields(block)}
                bad = set(value) - allowed
                if bad:
                    raise ConfigError(f"unknown keys in '{key}': {sorted(bad)}")
                try:
                    kw[key] = block(**value)
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"bad '{key}' block: {exc}") from exc
            else:
                kw[key] = value
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def validate(self):
        if self.budget < 0:
            raise ConfigError("budget must be nonnegative")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}")
        if self.rounds < 1:
            raise ConfigError("rounds must be >= 1")
        for kind, params in self.patterns.items():
            if kind not in PATTERNS:
                raise ConfigError(f"unknown pattern {kind!r}")
            allowed = {f.name for f in fields(PatternParams)}
            if set(params) - allowed:
                raise ConfigError(f"unknown keys in pattern '{kind}': {sorted(set(params) - allowed)}")

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))

    def snapshot(self) -> dict:
        """Parameters that influence results (no output location or threads)."""
        d = self.to_dict()
        d.pop("output_dir")
        d.pop("threads")
        return d

    def param_hash(self) -> str:
        return _hash_json(self.snapshot())

    def pattern_params(self, kind: str) -> PatternParams:
        p = dict(self.patterns.get(kind, {}))
        if "extent" in p and p["extent"] is not None:
            p["extent"] = tuple(p["extent"])
        return PatternParams(**p)


def _hash_json(doc) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()[:16]


# -- manifest ------------------------------------------------------------------------

@dataclass
class RunManifest:
    """Per-stage input/output hashes, parameter snapshot and timings."""

    path: Path
    stages: dict = field(default_factory=dict)

    @classmethod
    def open(cls, out_dir) -> "RunManifest":
        path = Path(out_dir) / "manifest.json"
        if path.exists():
            with open(path) as fh:
                return cls(path, json.load(fh).get("stages", {}))
        return cls(path)

    def up_to_date(self, stage: str, input_hash: str) -> bool:
        rec = self.stages.get(stage)
        if rec is None or rec.get("inputs") != input_hash:
            return False
        base = self.path.parent
        for name, digest in rec.get("outputs", {}).items():
            p = base / name
            if not p.exists() or file_hash(p) != digest:
                return False
        return True

    def record(self, stage: str, input_hash: str, outputs: list[str], params: dict, seconds: float):
        base = self.path.parent
        self.stages[stage] = {
            "inputs": input_hash,
            "outputs": {name: file_hash(base / name) for name in outputs},
            "params": params,
            "seconds": round(seconds, 3),
        }
        self.save()

    def output_hash(self, stage: str) -> str:
        return _hash_json(self.stages.get(stage, {}).get("outputs", {}))

    def save(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "w") as fh:
            json.dump({"stages": self.stages}, fh, indent=1, sort_keys=True)


# -- scene ---------------------------------------------------------------------------

def resolve_scene(cfg: PipelineConfig) -> Scene:
    src = cfg.scene
    if "builtin" in src:
        name = src["builtin"]
        if name not in SCENES:
            raise ConfigError(f"unknown builtin scene {name!r}")
        return SCENES[name](**src.get("options", {}))
    if "mesh" not in src or "config" not in src:
        raise ConfigError("scene needs either 'builtin' or both 'mesh' and 'config'")
    return load_scene(src["mesh"], src["config"])


def scene_digest(cfg: PipelineConfig) -> str:
    src = cfg.scene
    if "mesh" in src:
        parts = [file_hash(src["mesh"])]
        conf = src["config"]
        parts.append(file_hash(conf) if isinstance(conf, str) else _hash_json(conf))
        return _hash_json(parts)
    return _hash_json(src)


# -- stages (library level) ---------------------------------------------------------------

def inside_mesh(scene: Scene, p) -> bool:
    """True when the first surface straight above ``p`` is seen from behind,
    i.e. ``p`` sits inside a closed, outward-wound solid."""
    hit = ray_mesh_intersect(scene, p, (0.0, 0.0, 1.0))
    return hit is not None and float(scene.normals[hit.triangle_id][2]) > 0.0


def pose_collides(scene: Scene, p, half_extent: float) -> bool:
    if not scene.is_flyable(p):
        return True
    box = Box.from_center(p, half_extent)
    return bool(np.any(triangles_intersect_box(scene.triangles, box))) or inside_mesh(scene, p)


def initial_poses(scene: Scene, cfg: PipelineConfig) -> list[Viewpoint]:
    ic = cfg.initial_scan
    extent = tuple(ic.extent) if ic.extent is not None else None
    params = PatternParams(count=ic.count, rows=ic.rows, cols=ic.cols, radius=ic.radius, altitude=ic.altitude,
                           extent=extent)
    poses = pattern_poses(ic.kind, params, scene.roi)
    half = cfg.sampler.check_half_extent
    for i, vp in enumerate(poses):
        if pose_collides(scene, vp.p, half):
            raise InfeasibleError(f"initial scan pose {i} at {vp.position} is not in free space")
    return poses


def integrate_images(occ: OccupancyMap, images) -> None:
    for im in images:
        occ.integrate_depth_map(im, im.intrinsics)


def carve_flight(occ: OccupancyMap, poses: list[Viewpoint], half_extent: float) -> None:
    """Mark the volume the drone flew through as free (it was physically there)."""
    step = occ.voxel_size
    for a, b in zip(poses, poses[1:] + poses[:1] if len(poses) > 2 else poses[1:]):
        d = np.linalg.norm(b.p - a.p)
        for f in np.linspace(0.0, 1.0, max(2, int(np.ceil(d / step)) + 1)):
            occ.carve_box(Box.from_center(a.p + f * (b.p - a.p), half_extent))
    for vp in poses:
        occ.carve_box(Box.from_center(vp.p, half_extent))


def run_initial_scan(scene: Scene, cfg: PipelineConfig):
    """(map, poses, images) after flying and integrating the initial pattern."""
    poses = initial_poses(scene, cfg)
    intr = cfg.camera.intrinsics(cfg.camera.eval_scale)
    images = [render_depth_normal(scene, vp, intr) for vp in poses]
    occ = map_for_scene(scene, cfg.occupancy)
    integrate_images(occ, images)
    if cfg.initial_scan.carve:
        carve_flight(occ, poses, cfg.sampler.check_half_extent)
    return occ, poses, images


def _pool(cfg: PipelineConfig):
    return ThreadPoolExecutor(max_workers=max(1, cfg.threads)) if cfg.threads > 1 else None


def compute_observations(scene: Scene, occ: OccupancyMap, viewpoints, cfg: PipelineConfig):
    intr = cfg.camera.intrinsics(cfg.camera.raycast_scale)
    low = cfg.camera.intrinsics(cfg.camera.lowres_scale)
    # the information model always measures pixels with the physical focal length
    info = replace(cfg.information, focal_length=cfg.camera.focal_length)

    def one(i):
        return compute_observation(scene, occ, viewpoints[i], intr, info, scene.roi, i, low)

    pool = _pool(cfg)
    if pool is None:
        return [one(i) for i in range(len(viewpoints))]
    with pool:
        return list(pool.map(one, range(len(viewpoints))))


def build_graph(scene: Scene, occ: OccupancyMap, seeds, cfg: PipelineConfig) -> ViewpointGraph:
    t0 = time.perf_counter()
    sampler = replace(cfg.sampler, rng_seed=cfg.rng_seed)
    vps = generate_viewpoints(list(seeds), occ, scene, sampler)
    t1 = time.perf_counter()
    obs = compute_observations(scene, occ, vps, cfg)
    t2 = time.perf_counter()
    edges = find_motions(vps, obs, occ, cfg.graph.k, cfg.graph.alpha, sampler.check_half_extent,
                         cfg.rrt, cfg.rng_seed)
    t3 = time.perf_counter()
    logger.info("graph: %d candidates (%.1fs), observations %.1fs, %d edges (%.1fs)",
                len(vps), t1 - t0, t2 - t1, len(edges), t3 - t2)
    return ViewpointGraph(vps, obs, edges)


def plan(graph: ViewpointGraph, cfg: PipelineConfig, method: str | None = None,
         budget: float | None = None) -> Trajectory:
    method = method or cfg.method
    budget = cfg.budget if budget is None else budget
    bp = BudgetParams(budget, cfg.per_viewpoint_cost)
    if method in SOLVERS:
        if not len(graph):
            raise InfeasibleError("viewpoint graph is empty")
        try:
            traj = SOLVERS[method](graph, bp)
        except GraphError as exc:
            raise InfeasibleError(str(exc)) from exc
    else:
        raise ConfigError(f"{method!r} is not a planner")
    traj.meta["param_hash"] = cfg.param_hash()
    traj.meta["budget"] = budget
    return traj


def pattern_plan(kind: str, scene: Scene, occ: OccupancyMap, graph: ViewpointGraph | None,
                 cfg: PipelineConfig, budget: float | None = None) -> Trajectory:
    budget = cfg.budget if budget is None else budget
    params = cfg.pattern_params(kind)
    try:
        if kind in cfg.patterns and ("count" in cfg.patterns[kind] or "rows" in cfg.patterns[kind]):
            traj = pattern_trajectory(kind, params, scene, occ, graph, budget, cfg.per_viewpoint_cost)
        else:
            traj = fit_pattern(kind, scene, budget, params, graph, cfg.per_viewpoint_cost)
    except GraphError as exc:
        raise InfeasibleError(str(exc)) from exc
    if kind != "hemisphere":
        obs = compute_observations(scene, occ, traj.viewpoints(), cfg)
        traj.score = set_information(obs, range(len(obs)))
    traj.meta["param_hash"] = cfg.param_hash()
    traj.meta["budget"] = budget
    return traj


def ground_truth(scene: Scene, cfg: PipelineConfig) -> np.ndarray:
    ev = cfg.evaluation
    return sample_ground_truth_points(scene, ev.gt_max_triangle_area, ev.gt_samples_per_triangle,
                                      ev.gt_resample_voxel, seed=cfg.rng_seed)


def evaluate_trajectory(scene: Scene, traj: Trajectory, cfg: PipelineConfig, gt: np.ndarray,
                        extra_images=()) -> tuple[MetricsReport, np.ndarray]:
    images = simulate_capture(scene, traj, cfg.camera.intrinsics(cfg.camera.eval_scale))
    images = list(extra_images) + images
    cloud = fuse_depth_maps(images, cfg.fusion, scene.roi)
    rep = precision_recall_f1(cloud, gt, cfg.evaluation.delta)
    rep.method = traj.method
    rep.score = float(traj.score)
    rep.budget_cost = float(traj.budget_cost)
    rep.images = len(images)
    return rep, cloud


def compare(scene: Scene, methods, budget: float | None, cfg: PipelineConfig | None = None,
            workdir=None) -> list[MetricsReport]:
    """Every method from one shared initial scan, map and graph."""
    cfg = cfg or PipelineConfig()
    budget = cfg.budget if budget is None else budget
    occ, poses, init_images = run_initial_scan(scene, cfg)
    graph = None
    if any(m in PLANNERS or m == "hemisphere" for m in methods):
        graph = build_graph(scene, occ, poses, cfg)
    gt = ground_truth(scene, cfg)
    extra = init_images if cfg.evaluation.include_initial else []
    reports = []
    for m in methods:
        traj = plan(graph, cfg, m, budget) if m in PLANNERS else pattern_plan(m, scene, occ, graph, cfg, budget)
        rep, _ = evaluate_trajectory(scene, traj, cfg, gt, extra)
        reports.append(rep)
        if workdir is not None:
            Path(workdir).mkdir(parents=True, exist_ok=True)
            traj.save(Path(workdir) / f"trajectory_{m}.json")
        logger.info("%s: F=%.2f P=%.2f R=%.2f images=%d cost=%.1f", m, rep.f_score, rep.precision,
                    rep.recall, rep.images, rep.budget_cost)
    return reports


# -- resumable stage commands -------------------------------------------------------------

MAP_FILE = "map.bin"
MAP_SIDECAR = "map.json"
INIT_FILE = "initial_scan.json"
GRAPH_FILE = "graph.json"
OBS_FILE = "observations.bin"
TRAJ_FILE = "trajectory.json"
METRICS_FILE = "metrics.json"
TABLE_FILE = "metrics.txt"
CLOUD_FILE = "reconstruction.ply"


def _out(cfg: PipelineConfig) -> Path:
    out = Path(os.environ.get("VIEWPLAN_OUT", cfg.output_dir))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _stage_params(cfg: PipelineConfig, keys) -> dict:
    snap = cfg.snapshot()
    return {k: snap[k] for k in keys}


def cmd_init_scan(cfg: PipelineConfig) -> dict:
    out = _out(cfg)
    man = RunManifest.open(out)
    params = _stage_params(cfg, ["occupancy", "camera", "initial_scan", "sampler"])
    inputs = _hash_json([scene_digest(cfg), params])
    if man.up_to_date("init-scan", inputs):
        logger.info("init-scan: up to date")
        return {"skipped": True}
    t0 = time.perf_counter()
    scene = resolve_scene(cfg)
    occ, poses, _ = run_initial_scan(scene, cfg)
    occ.save(out / MAP_FILE)
    hist = occ.class_histogram(scene.roi)
    with open(out / INIT_FILE, "w") as fh:
        json.dump({"poses": [v.to_dict() for v in poses], "roi_histogram": hist,
                   "param_hash": _hash_json(params)}, fh, indent=1, sort_keys=True)
    man.record("init-scan", inputs, [MAP_FILE, MAP_SIDECAR, INIT_FILE], params, time.perf_counter() - t0)
    return {"skipped": False, "histogram": hist}


def _load_map(out: Path) -> OccupancyMap:
    if not (out / MAP_FILE).exists():
        raise FileNotFoundError(f"{out / MAP_FILE} missing; run init-scan first")
    return OccupancyMap.load(out / MAP_FILE)


def _seeds(out: Path) -> list[Viewpoint]:
    with open(out / INIT_FILE) as fh:
        seeds = [Viewpoint.from_dict(d) for d in json.load(fh)["poses"]]
    prev = out / "previous_trajectory.json"
    if prev.exists():
        seeds += Trajectory.load(prev).viewpoints()
    return seeds


def cmd_plan(cfg: PipelineConfig) -> Trajectory:
    out = _out(cfg)
    man = RunManifest.open(out)
    if "init-scan" not in man.stages:
        raise FileNotFoundError("no initial scan in this output directory; run init-scan first")
    params = _stage_params(cfg, ["occupancy", "information", "sampler", "rrt", "camera", "graph", "rng_seed"])
    graph_inputs = _hash_json([man.output_hash("init-scan"), params,
                               file_hash(out / "previous_trajectory.json")
                               if (out / "previous_trajectory.json").exists() else None])
    scene = resolve_scene(cfg)
    t0 = time.perf_counter()
    if man.up_to_date("graph", graph_inputs):
        graph = ViewpointGraph.load(out / GRAPH_FILE, load_observations(out / OBS_FILE))
    else:
        occ = _load_map(out)
        graph = build_graph(scene, occ, _seeds(out), cfg)
        graph.save(out / GRAPH_FILE)
        save_observations(out / OBS_FILE, graph.observations)
        man.record("graph", graph_inputs, [GRAPH_FILE, OBS_FILE], params, time.perf_counter() - t0)
    plan_params = {"method": cfg.method, "budget": cfg.budget, "per_viewpoint_cost": cfg.per_viewpoint_cost}
    plan_inputs = _hash_json([man.output_hash("graph"), plan_params, cfg.param_hash()])
    if man.up_to_date("plan", plan_inputs):
        return Trajectory.load(out / TRAJ_FILE)
    t1 = time.perf_counter()
    if cfg.method in PLANNERS:
        traj = plan(graph, cfg)
    else:
        traj = pattern_plan(cfg.method, scene, _load_map(out), graph, cfg)
    traj.meta["candidates"] = len(graph)
    traj.meta["edges"] = len(graph.edges)
    traj.save(out / TRAJ_FILE)
    man.record("plan", plan_inputs, [TRAJ_FILE], plan_params, time.perf_counter() - t1)
    return traj


def cmd_evaluate(cfg: PipelineConfig) -> MetricsReport:
    out = _out(cfg)
    man = RunManifest.open(out)
    if not (out / TRAJ_FILE).exists():
        raise FileNotFoundError(f"{out / TRAJ_FILE} missing; run plan first")
    params = _stage_params(cfg, ["fusion", "evaluation", "camera"])
    inputs = _hash_json([man.output_hash("plan"), man.output_hash("init-scan"), params])
    if man.up_to_date("evaluate", inputs):
        with open(out / METRICS_FILE) as fh:
            return MetricsReport.from_dict(json.load(fh)[0])
    t0 = time.perf_counter()
    scene = resolve_scene(cfg)
    traj = Trajectory.load(out / TRAJ_FILE)
    extra = []
    if cfg.evaluation.include_initial:
        intr = cfg.camera.intrinsics(cfg.camera.eval_scale)
        with open(out / INIT_FILE) as fh:
            extra = [render_depth_normal(scene, Viewpoint.from_dict(d), intr) for d in json.load(fh)["poses"]]
    rep, cloud = evaluate_trajectory(scene, traj, cfg, ground_truth(scene, cfg), extra)
    from .evaluation import write_report
    from .pointcloud import write_ply
    write_report([rep], out / METRICS_FILE, out / TABLE_FILE)
    write_ply(out / CLOUD_FILE, cloud)
    man.record("evaluate", inputs, [METRICS_FILE, TABLE_FILE, CLOUD_FILE], params, time.perf_counter() - t0)
    return rep


def cmd_iterate(cfg: PipelineConfig, rounds: int | None = None) -> list[dict]:
    """Plan, capture and integrate repeatedly, reseeding candidates with the
    previous round's viewpoints. Returns the per-round ROI class histograms."""
    rounds = cfg.rounds if rounds is None else rounds
    if rounds < 1:
        raise ConfigError("rounds must be >= 1")
    base = _out(cfg)
    scene = resolve_scene(cfg)
    occ, poses, _ = run_initial_scan(scene, cfg)
    intr = cfg.camera.intrinsics(cfg.camera.eval_scale)
    seeds = list(poses)
    history = [{"round": 0, "histogram": occ.class_histogram(scene.roi)}]
    traj = None
    for r in range(1, rounds + 1):
        graph = build_graph(scene, occ, seeds, cfg)
        if cfg.method in PLANNERS:
            traj = plan(graph, cfg)
        else:
            traj = pattern_plan(cfg.method, scene, occ, graph, cfg)
        traj.meta["candidates"] = len(graph)
        traj.meta["edges"] = len(graph.edges)
        integrate_images(occ, simulate_capture(scene, traj, intr))
        carve_flight(occ, traj.viewpoints(), cfg.sampler.drone_half_extent)
        rd = base / f"round_{r:02d}"
        rd.mkdir(parents=True, exist_ok=True)
        traj.save(rd / TRAJ_FILE)
        occ.save(rd / MAP_FILE)
        history.append({"round": r, "histogram": occ.class_histogram(scene.roi), "score": traj.score,
                        "trajectory": str(Path(rd.name) / TRAJ_FILE)})
        seeds = list(poses) + traj.viewpoints()
    with open(base / "iterate.json", "w") as fh:
        json.dump({"param_hash": cfg.param_hash(), "rounds": history}, fh, indent=1, sort_keys=True)
    occ.save(base / MAP_FILE)
    traj.save(base / TRAJ_FILE)
    return history


def cmd_compare(cfg: PipelineConfig) -> list[MetricsReport]:
    from .evaluation import write_report
    from .planner import write_score_table
    out = _out(cfg)
    scene = resolve_scene(cfg)
    reports = compare(scene, cfg.methods, cfg.budget, cfg, out)
    write_report(reports, out / "comparison.json", out / "comparison.txt")
    write_score_table([{"method": r.method, "budget": cfg.budget, "score": r.score, "budget_cost": r.budget_cost,
                        "precision": r.precision, "recall": r.recall, "f_score": r.f_score, "images": r.images}
                       for r in reports], out / "scores.csv")
    return reports
