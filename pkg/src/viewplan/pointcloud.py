"""Point-cloud helpers: voxel mean pooling and PLY/XYZ I/O."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def voxel_keys(points: np.ndarray, voxel: float) -> np.ndarray:
    return np.floor(np.asarray(points, dtype=np.float64) / voxel).astype(np.int64)


def voxel_mean_pool(points: np.ndarray, voxel: float) -> np.ndarray:
    """Replace all points sharing a voxel of edge ``voxel`` by their mean.

    Output is ordered by voxel key (lexicographic), so the result is
    deterministic for a given input set.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        return pts.copy()
    keys = voxel_keys(pts, voxel)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    out = np.empty((len(counts), 3))
    for a in range(3):
        out[:, a] = np.bincount(inverse, weights=pts[:, a], minlength=len(counts)) / counts
    return out


def write_ply(path, points: np.ndarray, normals: np.ndarray | None = None) -> None:
    """Binary little-endian PLY with float32 vertices (and optional normals)."""
    pts = np.asarray(points, dtype=np.float32).reshape(-1, 3)
    fields = [("x", "<f4"), ("y", "<f4"), ("z", "<f4")]
    if normals is not None:
        fields += [("nx", "<f4"), ("ny", "<f4"), ("nz", "<f4")]
    rec = np.empty(len(pts), dtype=fields)
    rec["x"], rec["y"], rec["z"] = pts[:, 0], pts[:, 1], pts[:, 2]
    if normals is not None:
        n = np.asarray(normals, dtype=np.float32).reshape(-1, 3)
        rec["nx"], rec["ny"], rec["nz"] = n[:, 0], n[:, 1], n[:, 2]
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {len(pts)}"]
    header += [f"property float {name}" for name, _ in fields]
    header.append("end_header")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(rec.tobytes())


def write_xyz(path, points: np.ndarray) -> None:
    np.savetxt(path, np.asarray(points).reshape(-1, 3), fmt="%.6f")


def read_points(path) -> np.ndarray:
    """Read a point cloud from .xyz text or .ply (vertices only)."""
    path = Path(path)
    if path.suffix.lower() == ".ply":
        import trimesh

        obj = trimesh.load(path, process=False)
        return np.asarray(obj.vertices, dtype=np.float64)
    return np.loadtxt(path, ndmin=2)[:, :3].astype(np.float64)
