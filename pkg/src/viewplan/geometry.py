"""Boxes, camera poses and pinhole ray generation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in world coordinates (meters)."""

    min: tuple[float, float, float]
    max: tuple[float, float, float]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.min)
        hi = tuple(float(v) for v in self.max)
        if len(lo) != 3 or len(hi) != 3:
            raise ValueError("box corners must be 3D")
        if any(a > b for a, b in zip(lo, hi)):
            raise ValueError(f"box min {lo} exceeds max {hi}")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @classmethod
    def from_center(cls, center, half_extents) -> "Box":
        c = np.asarray(center, dtype=float)
        h = np.asarray(half_extents, dtype=float) * np.ones(3)
        return cls(tuple(c - h), tuple(c + h))

    @classmethod
    def from_dict(cls, d: dict) -> "Box":
        return cls(tuple(d["min"]), tuple(d["max"]))

    def to_dict(self) -> dict:
        return {"min": list(self.min), "max": list(self.max)}

    @property
    def lo(self) -> np.ndarray:
        return np.array(self.min)

    @property
    def hi(self) -> np.ndarray:
        return np.array(self.max)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def extent(self) -> np.ndarray:
        return self.hi - self.lo

    def corners(self) -> np.ndarray:
        lo, hi = self.lo, self.hi
        return np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])

    def contains_point(self, p) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(np.all(p >= self.lo) and np.all(p <= self.hi))

    def contains_points(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, 3)
        return np.all((pts >= self.lo) & (pts <= self.hi), axis=1)

    def contains_box(self, other: "Box") -> bool:
        return bool(np.all(other.lo >= self.lo) and np.all(other.hi <= self.hi))

    def intersects(self, other: "Box") -> bool:
        return bool(np.all(other.lo < self.hi) and np.all(other.hi > self.lo))

    def distance(self, p) -> float:
        """Euclidean distance from ``p`` to the box (0 inside)."""
        p = np.asarray(p, dtype=float)
        d = np.maximum(np.maximum(self.lo - p, p - self.hi), 0.0)
        return float(np.linalg.norm(d))

    def expanded(self, margin: float) -> "Box":
        return Box(tuple(self.lo - margin), tuple(self.hi + margin))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lo, self.hi)


@dataclass(frozen=True)
class CameraIntrinsics:
    width: int = 600
    height: int = 450
    focal_length: float = 345.0

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0 or self.focal_length <= 0:
            raise ValueError("camera intrinsics must be positive")

    def scaled(self, factor: float) -> "CameraIntrinsics":
        """Same field of view at a different resolution."""
        return CameraIntrinsics(
            max(1, int(round(self.width * factor))),
            max(1, int(round(self.height * factor))),
            self.focal_length * factor,
        )

    def to_dict(self) -> dict:
        return {"width": self.width, "height": self.height, "focal_length": self.focal_length}


@dataclass(frozen=True)
class Viewpoint:
    """Camera pose: position plus yaw/pitch (roll is always zero).

    Yaw is measured about +z from +x; pitch is the elevation of the optical
    axis, negative when looking down.
    """

    position: tuple[float, float, float]
    yaw: float = 0.0
    pitch: float = 0.0
    _forward: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pos = tuple(float(v) for v in self.position)
        if len(pos) != 3:
            raise ValueError("viewpoint position must be 3D")
        object.__setattr__(self, "position", pos)
        if not (-math.pi / 2 - 1e-12 <= self.pitch <= 1e-12):
            raise ValueError(f"pitch {self.pitch} outside [-pi/2, 0]")
        object.__setattr__(self, "pitch", float(min(0.0, max(-math.pi / 2, self.pitch))))
        object.__setattr__(self, "yaw", float(wrap_angle(self.yaw)))
        object.__setattr__(self, "_forward", forward_vector(self.yaw, self.pitch))

    @property
    def p(self) -> np.ndarray:
        return np.array(self.position)

    @property
    def forward(self) -> np.ndarray:
        return self._forward.copy()

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(forward, right, up) unit vectors of the camera frame."""
        f = self._forward
        right = np.array([math.sin(self.yaw), -math.cos(self.yaw), 0.0])
        up = np.cross(right, f)
        return f, right, up

    def to_dict(self) -> dict:
        return {"position": list(self.position), "yaw": self.yaw, "pitch": self.pitch}

    @classmethod
    def from_dict(cls, d: dict) -> "Viewpoint":
        return cls(tuple(d["position"]), d["yaw"], d["pitch"])


def wrap_angle(a: float) -> float:
    return (a + math.pi) % (2 * math.pi) - math.pi


def forward_vector(yaw: float, pitch: float) -> np.ndarray:
    cp = math.cos(pitch)
    return np.array([cp * math.cos(yaw), cp * math.sin(yaw), math.sin(pitch)])


def look_at_angles(position, target) -> tuple[float, float]:
    """Yaw and (clamped) pitch of the direction from ``position`` to ``target``."""
    d = np.asarray(target, dtype=float) - np.asarray(position, dtype=float)
    horiz = math.hypot(d[0], d[1])
    yaw = math.atan2(d[1], d[0]) if horiz > 0 else 0.0
    pitch = math.atan2(d[2], horiz) if (horiz > 0 or d[2] != 0) else 0.0
    return yaw, min(0.0, max(-math.pi / 2, pitch))


def look_at(position, target) -> Viewpoint:
    yaw, pitch = look_at_angles(position, target)
    return Viewpoint(tuple(position), yaw, pitch)


def pixel_rays(viewpoint: Viewpoint, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Unit ray directions through every pixel center, shape (H, W, 3)."""
    f, right, up = viewpoint.basis()
    u = np.arange(intrinsics.width) + 0.5 - intrinsics.width / 2.0
    v = np.arange(intrinsics.height) + 0.5 - intrinsics.height / 2.0
    uu, vv = np.meshgrid(u, v)
    d = (
        intrinsics.focal_length * f[None, None, :]
        + uu[..., None] * right[None, None, :]
        - vv[..., None] * up[None, None, :]
    )
    return d / np.linalg.norm(d, axis=-1, keepdims=True)
