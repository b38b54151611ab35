"""Probabilistic voxel occupancy map with a beam-based inverse sensor model.

Storage is a dense log-odds block over a bounded region; voxels that were
never updated read as the prior (0.5), exactly as in a sparse store, and
only updated voxels are serialized.
"""

from __future__ import annotations

import enum
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import _voxels
from .geometry import Box, CameraIntrinsics, pixel_rays

MAGIC = b"VPOM"
FORMAT_VERSION = 1


def logit(p: float) -> float:
    return math.log(p / (1.0 - p))


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))


class VoxelKey(NamedTuple):
    ix: int
    iy: int
    iz: int

    def center(self, vs: float) -> np.ndarray:
        return (np.array(self, dtype=np.float64) + 0.5) * vs


def key_of(point, vs: float) -> VoxelKey:
    p = np.floor(np.asarray(point, dtype=np.float64) / vs).astype(np.int64)
    return VoxelKey(int(p[0]), int(p[1]), int(p[2]))


class VoxelClass(enum.Enum):
    FREE = "free"
    OCCUPIED = "occupied"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class OccupancyParams:
    voxel_size: float = 0.2
    prior: float = 0.5
    clamp_min: float = 0.12
    clamp_max: float = 0.97
    p_hit: float = 0.7
    p_miss: float = 0.4
    oc_free: float = 0.25
    oc_occupied: float = 0.75
    max_range: float = 100.0

    def __post_init__(self):
        if self.voxel_size <= 0:
            raise ValueError("voxel_size must be positive")
        if not 0 < self.clamp_min < self.prior < self.clamp_max < 1:
            raise ValueError("need 0 < clamp_min < prior < clamp_max < 1")


class OccupancyMap:
    """Occupancy over the grid covering ``bounds``.

    ``allowed_space`` (defaults to ``bounds``) limits free-space queries:
    anything outside it is reported as occupied.
    """

    def __init__(self, bounds: Box, params: OccupancyParams | None = None,
                 allowed_space: Box | None = None):
        self.params = params or OccupancyParams()
        vs = self.params.voxel_size
        self.bounds = bounds
        self.allowed_space = allowed_space or bounds
        lo = np.floor(bounds.lo / vs).astype(np.int64)
        hi = np.ceil(bounds.hi / vs).astype(np.int64)
        hi = np.maximum(hi, lo + 1)
        self.offset = lo
        self.shape = tuple(int(v) for v in hi - lo)
        self.log_odds = np.zeros(self.shape, dtype=np.float64)
        self.touched = np.zeros(self.shape, dtype=bool)
        self._marks = np.zeros(self.shape, dtype=np.int8)
        self.version = 0
        self._integral = None
        self._integral_version = -1
        p = self.params
        self.l_hit = logit(p.p_hit)
        self.l_miss = logit(p.p_miss)
        self.l_min = logit(p.clamp_min)
        self.l_max = logit(p.clamp_max)
        self.l_free = logit(p.oc_free)
        self.l_occupied = logit(p.oc_occupied)

    @property
    def voxel_size(self) -> float:
        return self.params.voxel_size

    @property
    def grid_lo(self) -> np.ndarray:
        return self.offset * self.voxel_size

    @property
    def grid_hi(self) -> np.ndarray:
        return (self.offset + np.array(self.shape)) * self.voxel_size

    def _index(self, key) -> tuple[int, int, int] | None:
        g = np.asarray(key, dtype=np.int64) - self.offset
        if np.any(g < 0) or np.any(g >= self.shape):
            return None
        return int(g[0]), int(g[1]), int(g[2])

    def key_of(self, point) -> VoxelKey:
        return key_of(point, self.voxel_size)

    def center(self, key) -> np.ndarray:
        return (np.asarray(key, dtype=np.float64) + 0.5) * self.voxel_size

    def log_odds_at(self, key) -> float:
        idx = self._index(key)
        return 0.0 if idx is None else float(self.log_odds[idx])

    def occupancy(self, key) -> float:
        """Occupancy probability of ``key``; never-updated voxels read as the prior."""
        idx = self._index(key)
        if idx is None or not self.touched[idx]:
            return self.params.prior
        return float(sigmoid(self.log_odds[idx]))

    def classify(self, key) -> VoxelClass:
        c = self.center(key)
        if not self.allowed_space.contains_point(c):
            return VoxelClass.OCCUPIED
        oc = self.occupancy(key)
        if oc <= self.params.oc_free:
            return VoxelClass.FREE
        if oc >= self.params.oc_occupied:
            return VoxelClass.OCCUPIED
        return VoxelClass.UNKNOWN

    def is_free(self, key) -> bool:
        return self.classify(key) is VoxelClass.FREE

    def class_histogram(self, region: Box | None = None) -> dict[str, int]:
        """Voxel counts per class over the grid cells inside ``region``
        (default: the allowed space)."""
        region = region or self.allowed_space
        vs = self.voxel_size
        i0 = np.clip(np.floor(region.lo / vs).astype(np.int64) - self.offset, 0, self.shape)
        i1 = np.clip(np.ceil(region.hi / vs).astype(np.int64) - self.offset, 0, self.shape)
        block = self.log_odds[i0[0]:i1[0], i0[1]:i1[1], i0[2]:i1[2]]
        free = int(np.count_nonzero(block <= self.l_free))
        occ = int(np.count_nonzero(block >= self.l_occupied))
        return {"free": free, "occupied": occ, "unknown": int(block.size - free - occ)}

    # -- updates -----------------------------------------------------------

    def _changed(self):
        self.version += 1

    def integrate_rays(self, origin, dirs: np.ndarray, depth: np.ndarray, max_range: float | None = None):
        """Integrate one depth map given as ray directions and ranges.

        Each voxel is updated at most once per call: the endpoint voxel of a
        return gets a hit, every other traversed voxel a miss, and a hit wins
        when both apply. Rays without a return (inf/nan or beyond
        ``max_range``) are carved as misses up to ``max_range``.
        """
        max_range = self.params.max_range if max_range is None else float(max_range)
        dirs = np.ascontiguousarray(dirs.reshape(-1, 3), dtype=np.float64)
        depth = np.ascontiguousarray(depth.reshape(-1), dtype=np.float64)
        _voxels.integrate(self.log_odds, self.touched, self._marks, self.offset, self.voxel_size,
                          self.grid_lo, self.grid_hi, np.asarray(origin, dtype=np.float64),
                          dirs, depth, max_range, self.l_hit, self.l_miss, self.l_min, self.l_max)
        self._changed()

    def integrate_depth_map(self, image, intrinsics: CameraIntrinsics | None = None,
                            max_range: float | None = None):
        intrinsics = intrinsics or image.intrinsics
        rays = pixel_rays(image.pose, intrinsics)
        self.integrate_rays(image.pose.p, rays, image.depth, max_range)

    def update_voxel(self, key, hit: bool):
        """Single inverse-sensor-model update of one voxel."""
        idx = self._index(key)
        if idx is None:
            raise KeyError(f"voxel {tuple(key)} outside the map bounds")
        v = self.log_odds[idx] + (self.l_hit if hit else self.l_miss)
        self.log_odds[idx] = min(max(v, self.l_min), self.l_max)
        self.touched[idx] = True
        self._changed()

    def carve_box(self, box: Box):
        """Mark every voxel intersecting ``box`` as confidently free.

        Used for space the vehicle has physically flown through.
        """
        vs = self.voxel_size
        i0 = np.clip(np.floor(box.lo / vs).astype(np.int64) - self.offset, 0, self.shape)
        i1 = np.clip(np.ceil(box.hi / vs).astype(np.int64) - self.offset, 0, self.shape)
        sl = tuple(slice(a, b) for a, b in zip(i0, i1))
        self.log_odds[sl] = np.minimum(self.log_odds[sl], self.l_min)
        self.touched[sl] = True
        self._changed()

    # -- queries -----------------------------------------------------------

    def integral(self) -> np.ndarray:
        """Summed-volume table of non-free voxels (cached per map version)."""
        if self._integral_version != self.version:
            nonfree = (self.log_odds > self.l_free).astype(np.int32)
            s = np.zeros(tuple(n + 1 for n in self.shape), dtype=np.int32)
            s[1:, 1:, 1:] = nonfree
            del nonfree
            for ax in range(3):
                np.cumsum(s, axis=ax, out=s)
            self._integral = s
            self._integral_version = self.version
        return self._integral

    def is_free_box(self, box: Box) -> bool:
        """True iff every voxel intersecting ``box`` is free and the box lies
        inside the allowed space."""
        return bool(_voxels.box_free(self.integral(), self.offset, self.voxel_size, box.lo, box.hi,
                                     self.allowed_space.lo, self.allowed_space.hi))

    def is_free_segment(self, a, b, half_extents, step: float | None = None) -> bool:
        """Sweep a box of ``half_extents`` from ``a`` to ``b`` in steps <= ``step``."""
        step = self.voxel_size / 2 if step is None else step
        if step <= 0:
            raise ValueError("step must be positive")
        half = np.broadcast_to(np.asarray(half_extents, dtype=np.float64), (3,)).copy()
        return bool(_voxels.segment_free(self.integral(), self.offset, self.voxel_size,
                                         np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64),
                                         half, float(step), self.allowed_space.lo, self.allowed_space.hi))

    def first_nonfree(self, origin, dirs: np.ndarray, max_distance: float = np.inf):
        """March rays until the first non-free voxel.

        Returns (keys (N, 3), entry distance (N,)); distance is -1 where
        the ray leaves the map without meeting one.
        """
        flat = np.ascontiguousarray(dirs.reshape(-1, 3), dtype=np.float64)
        keys = np.empty((len(flat), 3), dtype=np.int64)
        t = np.empty(len(flat))
        _voxels.first_nonfree(self.log_odds, self.offset, self.voxel_size, self.grid_lo, self.grid_hi,
                              np.asarray(origin, dtype=np.float64), flat, self.l_free,
                              float(max_distance), keys, t)
        return keys, t

    # -- I/O ---------------------------------------------------------------

    def stored_records(self):
        idx = np.argwhere(self.touched)
        keys = (idx + self.offset).astype(np.int32)
        return keys, self.log_odds[self.touched].astype(np.float32)

    def save(self, path) -> None:
        """Binary record file plus a JSON sidecar with the parameters."""
        path = Path(path)
        keys, vals = self.stored_records()
        rec = np.empty(len(keys), dtype=[("k", "<i4", 3), ("l", "<f4")])
        rec["k"] = keys
        rec["l"] = vals
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<Id", FORMAT_VERSION, self.voxel_size))
            fh.write(struct.pack("<Q", len(rec)))
            fh.write(struct.pack("<3i3i", *self.offset, *self.shape))
            fh.write(rec.tobytes())
        side = {
            "format_version": FORMAT_VERSION,
            "params": self.params.__dict__,
            "bounds": self.bounds.to_dict(),
            "allowed_space": self.allowed_space.to_dict(),
            "records": int(len(rec)),
        }
        path.with_suffix(".json").write_text(json.dumps(side, indent=2, sort_keys=True))

    @classmethod
    def load(cls, path) -> "OccupancyMap":
        path = Path(path)
        side = json.loads(path.with_suffix(".json").read_text())
        om = cls(Box.from_dict(side["bounds"]), OccupancyParams(**side["params"]),
                 Box.from_dict(side["allowed_space"]))
        with open(path, "rb") as fh:
            if fh.read(4) != MAGIC:
                raise ValueError(f"{path} is not an occupancy map file")
            version, vs = struct.unpack("<Id", fh.read(12))
            if version != FORMAT_VERSION:
                raise ValueError(f"unsupported map format version {version}")
            (n,) = struct.unpack("<Q", fh.read(8))
            offset_shape = struct.unpack("<3i3i", fh.read(24))
            rec = np.frombuffer(fh.read(), dtype=[("k", "<i4", 3), ("l", "<f4")], count=n)
        if tuple(offset_shape[3:]) != om.shape or abs(vs - om.voxel_size) > 0:
            raise ValueError("map header disagrees with sidecar")
        g = rec["k"].astype(np.int64) - om.offset
        om.log_odds[g[:, 0], g[:, 1], g[:, 2]] = rec["l"]
        om.touched[g[:, 0], g[:, 1], g[:, 2]] = True
        om._changed()
        return om

    def export_ply(self, path, region: Box | None = None) -> None:
        """Occupied and unknown voxel centers inside ``region`` (default: whole grid)."""
        from .pointcloud import write_ply

        region = region or self.bounds
        vs = self.voxel_size
        i0 = np.clip(np.floor(region.lo / vs).astype(np.int64) - self.offset, 0, self.shape)
        i1 = np.clip(np.ceil(region.hi / vs).astype(np.int64) - self.offset, 0, self.shape)
        block = self.log_odds[i0[0]:i1[0], i0[1]:i1[1], i0[2]:i1[2]]
        idx = np.argwhere(block > self.l_free) + i0 + self.offset
        write_ply(path, (idx + 0.5) * vs)


def traverse_ray(origin, direction, length: float, voxel_size: float = 0.2) -> list[VoxelKey]:
    """Every voxel the segment passes through, in order, origin voxel first."""
    if length < 0:
        raise ValueError("length must be non-negative")
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    n_max = 3 * int(math.ceil(length / voxel_size)) + 4
    out = np.empty((n_max, 3), dtype=np.int64)
    n = _voxels.traverse(o, d, float(length), float(voxel_size), out)
    return [VoxelKey(int(a), int(b), int(c)) for a, b, c in out[:n]]


def map_for_scene(scene, params: OccupancyParams | None = None, margin: float = 1.0) -> OccupancyMap:
    """Empty map covering the scene's allowed space (plus ``margin``)."""
    return OccupancyMap(scene.allowed_space.expanded(margin), params, scene.allowed_space)
