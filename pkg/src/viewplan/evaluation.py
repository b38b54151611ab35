"""Capture simulation, depth-map fusion and precision / recall / F-score."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy.spatial import cKDTree

from .geometry import Box, CameraIntrinsics, pixel_rays
from .pointcloud import voxel_mean_pool
from .scene import DepthNormalImage, Scene, render_depth_normal

DEFAULT_DELTA = 0.1


@dataclass(frozen=True)
class FusionParams:
    max_distance: float = 80.0
    max_incidence: float = 70.0     # degrees
    min_support: int = 3
    support_radius: float = 0.1
    fusion_voxel: float = 0.05

    def __post_init__(self):
        if min(self.max_distance, self.max_incidence, self.support_radius, self.fusion_voxel) <= 0:
            raise ValueError("fusion parameters must be positive")
        if self.min_support < 1:
            raise ValueError("min_support must be >= 1")


@dataclass
class MetricsReport:
    precision: float
    recall: float
    f_score: float
    delta: float = DEFAULT_DELTA
    n_reconstruction: int = 0
    n_ground_truth: int = 0
    matched_reconstruction: int = 0
    matched_ground_truth: int = 0
    empty: bool = False
    method: str = ""
    score: float | None = None
    budget_cost: float | None = None
    images: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def f_score(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall (0 when both vanish)."""
    s = precision + recall
    return 2.0 * precision * recall / s if s > 0 else 0.0


def simulate_capture(scene: Scene, trajectory, intrinsics: CameraIntrinsics) -> list[DepthNormalImage]:
    """One rendered depth/normal image per trajectory entry."""
    vps = trajectory.viewpoints() if hasattr(trajectory, "viewpoints") else list(trajectory)
    if not vps:
        raise ValueError("trajectory is empty")
    return [render_depth_normal(scene, vp, intrinsics) for vp in vps]


def back_project(image: DepthNormalImage, max_distance: float = np.inf,
                 max_incidence: float = 90.0) -> np.ndarray:
    """World points of pixels passing the distance and incidence filters."""
    rays = pixel_rays(image.pose, image.intrinsics).reshape(-1, 3)
    depth = image.depth.reshape(-1)
    normal = image.normal.reshape(-1, 3)
    ok = np.isfinite(depth) & (depth <= max_distance)
    cosg = -np.einsum("ij,ij->i", rays[ok], normal[ok])
    keep = np.nonzero(ok)[0][cosg >= math.cos(math.radians(max_incidence)) - 1e-12]
    return image.pose.p + depth[keep, None] * rays[keep]


def support_counts(points: np.ndarray, radius: float, need: int) -> np.ndarray:
    """Number of points within ``radius`` of each point (itself included),
    exact whenever the count is below ``need``."""
    n = len(points)
    counts = np.zeros(n, dtype=np.int64)
    if n == 0:
        return counts
    # two points sharing a cell of edge r/sqrt(3) are within r of each other
    cell = radius / math.sqrt(3.0)
    keys = np.floor(points / cell).astype(np.int64)
    _, inv, cell_n = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inv = inv.reshape(-1)
    counts[:] = cell_n[inv]
    rest = np.nonzero(counts < need)[0]
    if len(rest):
        tree = cKDTree(points)
        counts[rest] = tree.query_ball_point(points[rest], radius * (1 + 1e-12), return_length=True)
    return counts


def fuse_depth_maps(images: list[DepthNormalImage], params: FusionParams | None = None,
                    roi: Box | None = None) -> np.ndarray:
    """Filtered, support-checked and voxel-pooled point cloud from depth maps."""
    params = params or FusionParams()
    parts = [back_project(im, params.max_distance, params.max_incidence) for im in images]
    pts = np.concatenate(parts) if parts else np.zeros((0, 3))
    if params.min_support > 1 and len(pts):
        pts = pts[support_counts(pts, params.support_radius, params.min_support) >= params.min_support]
    pts = voxel_mean_pool(pts, params.fusion_voxel)
    if roi is not None:
        pts = pts[roi.contains_points(pts)]
    return pts


def _matched(query: np.ndarray, ref: np.ndarray, delta: float) -> int:
    if not len(query) or not len(ref):
        return 0
    d, _ = cKDTree(ref).query(query, k=1, distance_upper_bound=delta * (1 + 1e-9))
    return int(np.count_nonzero(d <= delta))


def precision_recall_f1(reconstruction: np.ndarray, ground_truth: np.ndarray,
                        delta: float = DEFAULT_DELTA) -> MetricsReport:
    rec = np.asarray(reconstruction, dtype=np.float64).reshape(-1, 3)
    gt = np.asarray(ground_truth, dtype=np.float64).reshape(-1, 3)
    if not len(rec) or not len(gt):
        return MetricsReport(0.0, 0.0, 0.0, delta, len(rec), len(gt), 0, 0, empty=True)
    m_rec = _matched(rec, gt, delta)
    m_gt = _matched(gt, rec, delta)
    p = 100.0 * m_rec / len(rec)
    r = 100.0 * m_gt / len(gt)
    return MetricsReport(p, r, f_score(p, r), delta, len(rec), len(gt), m_rec, m_gt)


# -- tables -------------------------------------------------------------------------

TABLE_COLUMNS = ("Method", "Precision", "Recall", "F-Score", "Score", "Budget", "Images")


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_table(reports: list[MetricsReport], digits: int | None = None) -> str:
    """Aligned text table (method, P, R, F, score, budget cost, images).

    With ``digits`` set the numbers are rounded for display; the default
    keeps full precision so :func:`parse_table` round-trips exactly.
    """
    def num(v):
        if digits is not None and isinstance(v, float):
            return f"{v:.{digits}f}"
        return _fmt(v)

    rows = [list(TABLE_COLUMNS)]
    for r in reports:
        rows.append([r.method or "-", num(r.precision), num(r.recall), num(r.f_score),
                     num(r.score), num(r.budget_cost), _fmt(r.images)])
    widths = [max(len(row[i]) for row in rows) for i in range(len(TABLE_COLUMNS))]
    lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths)))
             for row in rows]
    return "\n".join(lines) + "\n"


def parse_table(text: str) -> list[MetricsReport]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].split() != list(TABLE_COLUMNS):
        raise ValueError("not a metrics table")

    def val(s, cast=float):
        return None if s == "-" else cast(s)

    out = []
    for ln in lines[1:]:
        cells = ln.split()
        method = " ".join(cells[:-6])
        p, r, f, sc, b, im = cells[-6:]
        out.append(MetricsReport(float(p), float(r), float(f), method=method,
                                 score=val(sc), budget_cost=val(b), images=val(im, int)))
    return out


def write_report(reports: list[MetricsReport], json_path=None, table_path=None) -> None:
    if json_path is not None:
        with open(json_path, "w") as fh:
            json.dump([r.to_dict() for r in reports], fh, indent=1, sort_keys=True)
    if table_path is not None:
        with open(table_path, "w") as fh:
            fh.write(format_table(reports))


def run_comparison(scene: Scene, methods: list[str], budget: float, config=None, workdir=None):
    """Full pipeline per method from a shared initial scan and map."""
    from .pipeline import compare
    return compare(scene, methods, budget, config, workdir)
