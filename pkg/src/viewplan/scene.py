"""Triangle-mesh scenes: loading, ray queries, depth/normal rendering and
ground-truth point sampling."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import _raycast
from .geometry import Box, CameraIntrinsics, Viewpoint, pixel_rays
from .pointcloud import voxel_mean_pool

logger = logging.getLogger(__name__)

MIN_TRIANGLE_AREA = 1e-12


class SceneError(ValueError):
    pass


def triangle_areas(tris: np.ndarray) -> np.ndarray:
    tris = np.asarray(tris, dtype=np.float64)
    return 0.5 * np.linalg.norm(np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0]), axis=1)


@dataclass
class Scene:
    """Immutable simulated world: triangle soup plus planning volumes."""

    triangles: np.ndarray
    roi: Box
    allowed_space: Box
    no_fly_zones: list[Box] = field(default_factory=list)
    dropped_degenerate: int = 0
    name: str = "scene"

    def __post_init__(self):
        tris = np.ascontiguousarray(self.triangles, dtype=np.float64).reshape(-1, 3, 3)
        if len(tris) and np.any(triangle_areas(tris) <= MIN_TRIANGLE_AREA):
            raise SceneError("scene contains zero-area triangles")
        if not self.allowed_space.contains_box(self.roi):
            raise SceneError("region of interest is not inside the allowed space")
        tris.setflags(write=False)
        self.triangles = tris
        n = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
        self.normals = n / np.linalg.norm(n, axis=1, keepdims=True) if len(tris) else n
        self._bvh = None

    @property
    def bvh(self) -> _raycast.BVH:
        if self._bvh is None:
            self._bvh = _raycast.BVH(self.triangles)
        return self._bvh

    def in_no_fly_zone(self, p) -> bool:
        return any(z.contains_point(p) for z in self.no_fly_zones)

    def is_flyable(self, p) -> bool:
        return self.allowed_space.contains_point(p) and not self.in_no_fly_zone(p)

    def config_dict(self) -> dict:
        return {
            "roi": self.roi.to_dict(),
            "allowed_space": self.allowed_space.to_dict(),
            "no_fly_zones": [z.to_dict() for z in self.no_fly_zones],
        }


class Hit(NamedTuple):
    distance: float
    triangle_id: int
    normal: np.ndarray


@dataclass
class DepthNormalImage:
    """Range image: ``depth`` is distance along each pixel ray (inf = no hit)."""

    depth: np.ndarray
    normal: np.ndarray
    pose: Viewpoint
    intrinsics: CameraIntrinsics

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.depth)

    def points(self) -> np.ndarray:
        rays = pixel_rays(self.pose, self.intrinsics)
        m = self.valid
        return self.pose.p + rays[m] * self.depth[m][:, None]


def read_mesh(path) -> np.ndarray:
    """Triangle soup (N, 3, 3) from an OBJ or PLY file; polygons are fanned."""
    import trimesh

    path = Path(path)
    if not path.is_file():
        raise OSError(f"mesh file not found: {path}")
    try:
        mesh = trimesh.load(path, force="mesh", process=False)
    except Exception as exc:  # trimesh raises a zoo of types on bad input
        raise OSError(f"cannot parse mesh {path}: {exc}") from exc
    verts = np.asarray(mesh.vertices, dtype=np.float64)
    faces = np.asarray(mesh.faces, dtype=np.int64)
    if faces.size == 0:
        return np.zeros((0, 3, 3))
    return verts[faces]


def write_obj(path, triangles: np.ndarray) -> None:
    tris = np.asarray(triangles, dtype=np.float64).reshape(-1, 3, 3)
    with open(path, "w") as fh:
        for v in tris.reshape(-1, 3):
            fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for i in range(len(tris)):
            fh.write(f"f {3 * i + 1} {3 * i + 2} {3 * i + 3}\n")


def _boxes(items) -> list[Box]:
    return [Box.from_dict(b) for b in items or []]


def scene_from_triangles(triangles: np.ndarray, config: dict, name: str = "scene") -> Scene:
    tris = np.asarray(triangles, dtype=np.float64).reshape(-1, 3, 3)
    keep = triangle_areas(tris) > MIN_TRIANGLE_AREA if len(tris) else np.zeros(0, bool)
    dropped = int((~keep).sum())
    if dropped:
        logger.warning("dropped %d degenerate triangle(s)", dropped)
    try:
        roi = Box.from_dict(config["roi"])
        allowed = Box.from_dict(config["allowed_space"])
    except KeyError as exc:
        raise SceneError(f"scene config missing {exc}") from None
    return Scene(tris[keep], roi, allowed, _boxes(config.get("no_fly_zones")), dropped, name)


def load_scene(mesh_path, config) -> Scene:
    """Load a mesh plus a scene config (dict or path to a JSON document)."""
    if not isinstance(config, dict):
        with open(config) as fh:
            config = json.load(fh)
    tris = read_mesh(mesh_path)
    return scene_from_triangles(tris, config, Path(mesh_path).stem)


def ray_mesh_intersect(scene: Scene, origin, direction, max_range: float = np.inf) -> Hit | None:
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    t, k = _raycast.intersect_one(*scene.bvh.arrays(), o[0], o[1], o[2], d[0], d[1], d[2], float(max_range))
    if k < 0:
        return None
    n = scene.normals[k]
    if float(n @ d) > 0:
        n = -n
    return Hit(float(t), int(k), n.copy())


def cast_rays(scene: Scene, origin, dirs: np.ndarray, max_range: float = np.inf):
    """Vectorised ray casting from one origin: (distance, triangle id, normal)."""
    flat = np.ascontiguousarray(dirs.reshape(-1, 3), dtype=np.float64)
    t = np.empty(len(flat))
    k = np.empty(len(flat), dtype=np.int64)
    _raycast.intersect_many(*scene.bvh.arrays(), np.asarray(origin, dtype=np.float64), flat,
                            float(max_range), t, k)
    normals = np.zeros_like(flat)
    hit = k >= 0
    if hit.any():
        n = scene.normals[k[hit]]
        flip = np.einsum("ij,ij->i", n, flat[hit]) > 0
        n[flip] *= -1
        normals[hit] = n
    shape = dirs.shape[:-1]
    return t.reshape(shape), k.reshape(shape), normals.reshape(dirs.shape)


def render_depth_normal(scene: Scene, viewpoint: Viewpoint, intrinsics: CameraIntrinsics,
                        max_range: float = np.inf) -> DepthNormalImage:
    rays = pixel_rays(viewpoint, intrinsics)
    depth, _, normal = cast_rays(scene, viewpoint.p, rays, max_range)
    return DepthNormalImage(depth, normal, viewpoint, intrinsics)


def subdivide_triangles(tris: np.ndarray, max_area: float) -> np.ndarray:
    """Bisect the longest edge at its midpoint until every area <= max_area."""
    tris = np.asarray(tris, dtype=np.float64).reshape(-1, 3, 3)
    done = []
    while len(tris):
        big = triangle_areas(tris) > max_area
        done.append(tris[~big])
        t = tris[big]
        if not len(t):
            break
        edges = np.stack([
            np.linalg.norm(t[:, 1] - t[:, 0], axis=1),
            np.linalg.norm(t[:, 2] - t[:, 1], axis=1),
            np.linalg.norm(t[:, 0] - t[:, 2], axis=1),
        ], axis=1)
        e = np.argmax(edges, axis=1)
        # rotate so the longest edge is (v0, v1)
        rows = np.arange(len(t))[:, None]
        t = t[rows, (np.arange(3)[None, :] + e[:, None]) % 3]
        m = 0.5 * (t[:, 0] + t[:, 1])
        tris = np.concatenate([
            np.stack([t[:, 0], m, t[:, 2]], axis=1),
            np.stack([m, t[:, 1], t[:, 2]], axis=1),
        ])
    return np.concatenate(done) if done else np.zeros((0, 3, 3))


def sample_triangles(tris: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` uniform samples per triangle (square-root barycentric trick)."""
    tris = np.asarray(tris, dtype=np.float64)
    r1 = np.sqrt(rng.random((len(tris), n, 1)))
    r2 = rng.random((len(tris), n, 1))
    a, b, c = tris[:, None, 0], tris[:, None, 1], tris[:, None, 2]
    return ((1 - r1) * a + r1 * (1 - r2) * b + r1 * r2 * c).reshape(-1, 3)


def sample_ground_truth_points(scene: Scene, max_triangle_area: float = 0.25,
                               samples_per_triangle: int = 100, resample_voxel: float = 0.05,
                               seed: int = 0, chunk: int = 20000) -> np.ndarray:
    """Dense ground-truth cloud of the mesh surface inside the ROI."""
    if len(scene.triangles) == 0:
        raise SceneError("cannot sample an empty mesh")
    rng = np.random.default_rng(seed)
    tris = subdivide_triangles(scene.triangles, max_triangle_area)
    kept = []
    for s in range(0, len(tris), chunk):
        pts = sample_triangles(tris[s:s + chunk], samples_per_triangle, rng)
        kept.append(pts[scene.roi.contains_points(pts)])
    return voxel_mean_pool(np.concatenate(kept), resample_voxel)


def triangles_intersect_box(tris: np.ndarray, box: Box) -> np.ndarray:
    """Per-triangle overlap test against an axis-aligned box (separating axes)."""
    t = np.asarray(tris, dtype=np.float64).reshape(-1, 3, 3) - box.center
    h = box.extent / 2.0
    axes = [np.broadcast_to(np.eye(3)[i], (len(t), 3)) for i in range(3)]
    e = [t[:, 1] - t[:, 0], t[:, 2] - t[:, 1], t[:, 0] - t[:, 2]]
    axes.append(np.cross(e[0], e[1]))
    axes += [np.cross(np.eye(3)[i], ej) for i in range(3) for ej in e]
    hit = np.ones(len(t), dtype=bool)
    for a in axes:
        p = np.einsum("nij,nj->ni", t, a)
        r = np.abs(a) @ h
        hit &= ~((p.min(axis=1) > r) | (p.max(axis=1) < -r))
    return hit
