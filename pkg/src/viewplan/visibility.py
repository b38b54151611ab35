"""Per-viewpoint visible voxels and their contributed information."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .geometry import Box, CameraIntrinsics, Viewpoint, pixel_rays
from .occupancy import OccupancyMap, VoxelKey
from .scene import Scene, cast_rays

CACHE_MAGIC = b"VPOB"
_BIAS = 1 << 20
_BITS = 21


@dataclass(frozen=True)
class InformationParams:
    xi: float = 0.25
    beta_i_T: float = 25.0          # degrees
    beta_i_F: float = 1.0 / 25.0    # 1/degrees
    beta_r_T: float = 6.0           # pixels
    beta_r_F: float = 1.0 / 3.0     # 1/pixels
    crease_distance: float = 0.5
    crease_fallback_vi_i: float = 0.2
    focal_length: float = 345.0

    def __post_init__(self):
        if not 0 < self.xi <= 1:
            raise ValueError("xi must lie in (0, 1]")
        if min(self.beta_i_T, self.beta_i_F, self.beta_r_T, self.beta_r_F,
               self.crease_distance, self.crease_fallback_vi_i, self.focal_length) <= 0:
            raise ValueError("information parameters must be positive")


def encode_keys(keys: np.ndarray) -> np.ndarray:
    """Pack (N, 3) voxel keys into sortable int64 codes."""
    k = np.asarray(keys, dtype=np.int64).reshape(-1, 3) + _BIAS
    return (k[:, 0] << (2 * _BITS)) | (k[:, 1] << _BITS) | k[:, 2]


def decode_keys(codes: np.ndarray) -> np.ndarray:
    c = np.asarray(codes, dtype=np.int64)
    mask = (1 << _BITS) - 1
    return np.stack([(c >> (2 * _BITS)) & mask, (c >> _BITS) & mask, c & mask], axis=-1) - _BIAS


@dataclass
class ViewpointObservation:
    """Voxels seen from one viewpoint with their information ``vi``.

    ``keys`` are sorted by their packed code; ``lowres`` holds packed codes
    of the low-resolution observation set used for matchability.
    """

    viewpoint_id: int
    keys: np.ndarray
    vi: np.ndarray
    lowres: frozenset = field(default_factory=frozenset)

    def __len__(self):
        return len(self.vi)

    @property
    def codes(self) -> np.ndarray:
        return encode_keys(self.keys)

    def entries(self) -> dict[VoxelKey, float]:
        return {VoxelKey(*map(int, k)): float(v) for k, v in zip(self.keys, self.vi)}

    def standalone_information(self) -> float:
        return float(np.minimum(self.vi, 1.0).sum())


# -- camera model ------------------------------------------------------------

def incidence_factor(gamma_deg, params: InformationParams):
    g = np.asarray(gamma_deg, dtype=np.float64)
    return np.exp(-params.beta_i_F * np.maximum(g - params.beta_i_T, 0.0))


def resolution_factor(px, params: InformationParams):
    p = np.asarray(px, dtype=np.float64)
    return np.exp(-params.beta_r_F * np.maximum(p - params.beta_r_T, 0.0))


def projected_pixels(distance, params: InformationParams, voxel_size: float = 0.2):
    """Pixels a fronto-parallel voxel spans at ``distance``."""
    return params.focal_length * voxel_size / np.asarray(distance, dtype=np.float64)


def incidence_angle(voxel_center, camera_position, normal) -> float:
    """Angle (degrees) between the voxel-to-camera ray and the surface normal."""
    r = np.asarray(camera_position, dtype=np.float64) - np.asarray(voxel_center, dtype=np.float64)
    r = r / np.linalg.norm(r)
    return float(np.degrees(np.arccos(np.clip(r @ np.asarray(normal, dtype=np.float64), -1.0, 1.0))))


def information_values(centers: np.ndarray, camera_position, normals: np.ndarray,
                       mesh_distance: np.ndarray, params: InformationParams,
                       voxel_size: float = 0.2) -> np.ndarray:
    """Vectorised contributed information for N voxel observations.

    ``mesh_distance`` is the rendered distance to the reconstruction mesh
    along the observing ray (inf when the ray misses it); the normal is
    trusted only when it agrees with the voxel distance within the crease
    distance.
    """
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 3)
    r = np.asarray(camera_position, dtype=np.float64) - centers
    dist = np.linalg.norm(r, axis=1)
    px = projected_pixels(dist, params, voxel_size)
    vi_r = resolution_factor(px, params)
    mesh_distance = np.asarray(mesh_distance, dtype=np.float64).reshape(-1)
    trusted = np.isfinite(mesh_distance) & (np.abs(mesh_distance - dist) < params.crease_distance)
    with np.errstate(invalid="ignore", divide="ignore"):
        cosg = np.einsum("ij,ij->i", r / dist[:, None], np.asarray(normals, dtype=np.float64).reshape(-1, 3))
    gamma = np.degrees(np.arccos(np.clip(np.nan_to_num(cosg), -1.0, 1.0)))
    vi_i = np.where(trusted, incidence_factor(gamma, params), params.crease_fallback_vi_i)
    return vi_i * vi_r / params.xi


def voxel_information(voxel: VoxelKey, viewpoint: Viewpoint, normal=None, hit_distance_to_mesh=None,
                      params: InformationParams | None = None, voxel_size: float = 0.2) -> float:
    params = params or InformationParams()
    c = (np.asarray(voxel, dtype=np.float64) + 0.5) * voxel_size
    if normal is None or hit_distance_to_mesh is None:
        n = np.zeros(3)
        md = np.inf
    else:
        n = np.asarray(normal, dtype=np.float64)
        md = float(hit_distance_to_mesh)
    return float(information_values(c[None], viewpoint.p, n[None], np.array([md]), params, voxel_size)[0])


# -- visibility --------------------------------------------------------------

@dataclass
class VisibleVoxels:
    """First non-free voxel per pixel ray (pixels without one are dropped)."""

    pixel: np.ndarray       # flat pixel index
    keys: np.ndarray        # (N, 3)
    rays: np.ndarray        # (N, 3) unit pixel ray directions
    distance: np.ndarray    # ray entry distance into the voxel

    def unique(self) -> tuple[np.ndarray, np.ndarray]:
        """Merged voxel keys (sorted by packed code) and their nearest entry distance."""
        codes = encode_keys(self.keys)
        order = np.lexsort((self.distance, codes))
        codes = codes[order]
        first = np.r_[True, codes[1:] != codes[:-1]] if len(codes) else np.zeros(0, bool)
        return self.keys[order][first], self.distance[order][first]

    def key_set(self) -> set[VoxelKey]:
        return {VoxelKey(*map(int, k)) for k in self.keys}


def visible_voxels(occ: OccupancyMap, viewpoint: Viewpoint, intrinsics: CameraIntrinsics,
                   roi: Box | None = None, rays: np.ndarray | None = None) -> VisibleVoxels:
    """Ray-cast every pixel center into the map; each ray stops at the first
    non-free (occupied or unknown) voxel. Voxels outside ``roi`` are dropped."""
    if rays is None:
        rays = pixel_rays(viewpoint, intrinsics)
    flat = rays.reshape(-1, 3)
    keys, t = occ.first_nonfree(viewpoint.p, flat)
    ok = t >= 0
    if roi is not None:
        ok &= roi.contains_points((keys + 0.5) * occ.voxel_size)
    pix = np.nonzero(ok)[0]
    return VisibleVoxels(pix, keys[pix], flat[pix], t[pix])


def _max_per_key(keys: np.ndarray, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if len(keys) == 0:
        return np.zeros((0, 3), dtype=np.int64), np.zeros(0)
    codes = encode_keys(keys)
    order = np.argsort(codes, kind="stable")
    codes = codes[order]
    starts = np.nonzero(np.r_[True, codes[1:] != codes[:-1]])[0]
    return keys[order][starts], np.maximum.reduceat(values[order], starts)


def compute_observation(mesh: Scene | None, occ: OccupancyMap, viewpoint: Viewpoint,
                        intrinsics: CameraIntrinsics, params: InformationParams | None = None,
                        roi: Box | None = None, viewpoint_id: int = -1,
                        lowres_intrinsics: CameraIntrinsics | None = None) -> ViewpointObservation:
    """Visible ROI voxels with their information, using normals rendered
    from ``mesh`` along the same pixel rays; per voxel the best pixel wins."""
    params = params or InformationParams()
    if roi is None and mesh is not None:
        roi = mesh.roi
    rays = pixel_rays(viewpoint, intrinsics)
    vis = visible_voxels(occ, viewpoint, intrinsics, roi, rays)
    if mesh is not None and len(mesh.triangles) and len(vis.pixel):
        mesh_t, _, normals = cast_rays(mesh, viewpoint.p, vis.rays)
    else:
        mesh_t = np.full(len(vis.pixel), np.inf)
        normals = np.zeros((len(vis.pixel), 3))
    centers = (vis.keys + 0.5) * occ.voxel_size
    vi = information_values(centers, viewpoint.p, normals, mesh_t, params, occ.voxel_size)
    keys, vi = _max_per_key(vis.keys, vi)
    lowres = frozenset()
    if lowres_intrinsics is not None:
        lowres = lowres_observation_set(occ, viewpoint, lowres_intrinsics)
    return ViewpointObservation(viewpoint_id, keys, vi, lowres)


def lowres_observation_set(occ: OccupancyMap, viewpoint: Viewpoint,
                           lowres_intrinsics: CameraIntrinsics) -> frozenset:
    """Packed codes of the first non-free voxel per low-resolution pixel (no ROI clip)."""
    vis = visible_voxels(occ, viewpoint, lowres_intrinsics)
    return frozenset(encode_keys(vis.keys).tolist())


def matchable(obs1, obs2, alpha: float = 0.4) -> bool:
    """Overlap test between two observation sets."""
    a, b = set(obs1), set(obs2)
    return len(a & b) >= alpha * (len(a) + len(b)) / 2.0


# -- observation cache ---------------------------------------------------------

def save_observations(path, observations: list[ViewpointObservation]) -> None:
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<I", len(observations)))
        for ob in observations:
            rec = np.empty(len(ob.vi), dtype=[("k", "<i4", 3), ("v", "<f4")])
            rec["k"] = ob.keys
            rec["v"] = ob.vi
            low = np.array(sorted(ob.lowres), dtype=np.int64)
            fh.write(struct.pack("<iQQ", ob.viewpoint_id, len(rec), len(low)))
            fh.write(rec.tobytes())
            fh.write(decode_keys(low).astype("<i4").tobytes())


def load_observations(path) -> list[ViewpointObservation]:
    out = []
    with open(path, "rb") as fh:
        if fh.read(4) != CACHE_MAGIC:
            raise ValueError(f"{path} is not an observation cache")
        (n,) = struct.unpack("<I", fh.read(4))
        for _ in range(n):
            vid, m, nl = struct.unpack("<iQQ", fh.read(20))
            rec = np.frombuffer(fh.read(16 * m), dtype=[("k", "<i4", 3), ("v", "<f4")], count=m)
            low = np.frombuffer(fh.read(12 * nl), dtype="<i4", count=3 * nl).reshape(-1, 3)
            out.append(ViewpointObservation(vid, rec["k"].astype(np.int64), rec["v"].astype(np.float64),
                                            frozenset(encode_keys(low).tolist())))
    return out


def round_trip_precision(ob: ViewpointObservation) -> ViewpointObservation:
    """Observation with ``vi`` rounded exactly as the cache stores it."""
    return ViewpointObservation(ob.viewpoint_id, ob.keys, ob.vi.astype(np.float32).astype(np.float64), ob.lowres)
