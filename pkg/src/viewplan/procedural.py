"""Bundled procedural scenes.

All generators return triangle soups; ``*_config`` functions return the
matching scene-config documents (roi / allowed_space / no_fly_zones).
"""

from __future__ import annotations

import numpy as np

from .scene import Scene, scene_from_triangles

# Half a voxel of the default 0.2 m map; keeps large planes off voxel boundaries.
_SHIFT = np.array([0.1, 0.1, 0.1])

COURTYARD_TRIANGLES = 66


def quad(a, b, c, d) -> np.ndarray:
    a, b, c, d = (np.asarray(v, dtype=float) for v in (a, b, c, d))
    return np.array([[a, b, c], [a, c, d]])


def box_triangles(lo, hi, bottom: bool = True) -> np.ndarray:
    (x0, y0, z0), (x1, y1, z1) = lo, hi
    faces = [
        quad((x0, y0, z1), (x1, y0, z1), (x1, y1, z1), (x0, y1, z1)),
        quad((x0, y0, z0), (x1, y0, z0), (x1, y0, z1), (x0, y0, z1)),
        quad((x1, y0, z0), (x1, y1, z0), (x1, y1, z1), (x1, y0, z1)),
        quad((x1, y1, z0), (x0, y1, z0), (x0, y1, z1), (x1, y1, z1)),
        quad((x0, y1, z0), (x0, y0, z0), (x0, y0, z1), (x0, y1, z1)),
    ]
    if bottom:
        faces.append(quad((x0, y0, z0), (x0, y1, z0), (x1, y1, z0), (x1, y0, z0)))
    return np.concatenate(faces)


def unit_cube() -> np.ndarray:
    """12 triangles of the cube [-0.5, 0.5]^3."""
    return box_triangles((-0.5, -0.5, -0.5), (0.5, 0.5, 0.5))


def _rect_xy(x0, x1, y0, y1, z) -> np.ndarray:
    return quad((x0, y0, z), (x1, y0, z), (x1, y1, z), (x0, y1, z))


def _ring(o, i, h) -> list[np.ndarray]:
    """Flat-roofed ring of buildings over [-o, o]^2 minus [-i, i]^2 (24 triangles)."""
    parts = [
        _rect_xy(-o, o, i, o, h), _rect_xy(-o, o, -o, -i, h),
        _rect_xy(i, o, -i, i, h), _rect_xy(-o, -i, -i, i, h),
    ]
    for s in (o, i):
        parts += [
            quad((-s, -s, 0), (s, -s, 0), (s, -s, h), (-s, -s, h)),
            quad((s, -s, 0), (s, s, 0), (s, s, h), (s, -s, h)),
            quad((s, s, 0), (-s, s, 0), (-s, s, h), (s, s, h)),
            quad((-s, s, 0), (-s, -s, 0), (-s, -s, h), (-s, s, h)),
        ]
    return parts


def _ground_ring(a, b) -> list[np.ndarray]:
    return [_rect_xy(-b, b, a, b, 0), _rect_xy(-b, b, -b, -a, 0),
            _rect_xy(a, b, -a, a, 0), _rect_xy(-b, -a, -a, a, 0)]


def courtyard_mesh(outer: float = 12.0, inner: float = 5.0, height: float = 12.0, street: float = 8.0,
                   neighbor_depth: float = 8.0, neighbor_height: float = 12.0, ground: float = 38.0) -> np.ndarray:
    """A ring of buildings around an inner court inside a city block.

    The ring spans [-outer, outer]^2 around a court of [-inner, inner]^2.
    Across a street of width ``street`` it is enclosed by a second ring of
    neighbouring buildings, ``neighbor_depth`` deep. Those neighbours hide
    the lower outer facades from anything flying above the roofs, the way
    the opposite wing hides the lower inner facades. Ground under buildings
    is omitted. Always ``COURTYARD_TRIANGLES`` (66) triangles: two rings of
    24, the court floor (2), the street (8) and the outer ground (8).
    """
    n0 = outer + street
    n1 = n0 + neighbor_depth
    if not 0 < inner < outer < n0 < n1 < ground:
        raise ValueError("courtyard dimensions must nest: 0 < inner < outer < outer+street < neighbours < ground")
    parts = (_ring(outer, inner, height) + _ring(n1, n0, neighbor_height)
             + [_rect_xy(-inner, inner, -inner, inner, 0)]
             + _ground_ring(outer, n0) + _ground_ring(n1, ground))
    tris = np.concatenate(parts) + _SHIFT
    assert len(tris) == COURTYARD_TRIANGLES
    return tris


def courtyard_config(outer: float = 12.0, height: float = 12.0, ground: float = 38.0,
                     neighbor_height: float = 12.0) -> dict:
    s = _SHIFT
    m = outer + 2.0
    top = 3.0 * max(height, neighbor_height)
    return {
        "roi": {"min": [-m + s[0], -m + s[1], -0.4 + s[2]], "max": [m + s[0], m + s[1], height + 1.0 + s[2]]},
        "allowed_space": {"min": [-ground + s[0], -ground + s[1], -0.4 + s[2]],
                          "max": [ground + s[0], ground + s[1], top + s[2]]},
        "no_fly_zones": [],
    }


def courtyard_scene(**kwargs) -> Scene:
    geo = {k: kwargs[k] for k in ("outer", "inner", "height", "street", "neighbor_depth", "neighbor_height",
                                  "ground") if k in kwargs}
    cfg = {k: kwargs[k] for k in ("outer", "height", "ground", "neighbor_height") if k in kwargs}
    return scene_from_triangles(courtyard_mesh(**geo), courtyard_config(**cfg), "courtyard")


def wall_mesh(x: float = 10.0, half: float = 1e4) -> np.ndarray:
    """A huge square wall in the plane x = const, facing -x."""
    return quad((x, -half, -half), (x, half, -half), (x, half, half), (x, -half, half))


SCENES = {"courtyard": courtyard_scene}
