import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from helpers import free_map, segment_voxels_exact, set_voxel
from viewplan.geometry import Box, CameraIntrinsics, Viewpoint, pixel_rays
from viewplan.occupancy import OccupancyMap, logit
from viewplan.procedural import wall_mesh
from viewplan.scene import scene_from_triangles
from viewplan.visibility import (InformationParams, ViewpointObservation, compute_observation, decode_keys,
                                 encode_keys, incidence_factor, information_values, load_observations,
                                 lowres_observation_set, matchable, projected_pixels, resolution_factor,
                                 save_observations, visible_voxels, voxel_information)

P1 = InformationParams(xi=1.0)
BOUNDS = Box((-2.0, -6.0, -6.0), (12.0, 6.0, 6.0))


def wall_map(x_cell=25):
    """Free space with an occupied wall one voxel thick at cell x = x_cell (x in [5.0, 5.2))."""
    occ = free_map(BOUNDS)
    g = x_cell - occ.offset[0]
    occ.log_odds[g] = logit(0.97)
    occ._changed()
    return occ


def test_flat_response_below_threshold():
    assert np.all(incidence_factor(np.linspace(0, 25, 51), P1) == 1.0)
    assert np.all(resolution_factor(np.linspace(0, 6, 25), P1) == 1.0)


def test_incidence_fifty_degrees():
    assert incidence_factor(50.0, P1) == pytest.approx(math.exp(-1), abs=1e-12)


def test_resolution_nine_pixels():
    assert resolution_factor(9.0, P1) == pytest.approx(math.exp(-1), abs=1e-12)


def test_one_pixel_at_seventy_meters():
    assert 0.95 <= projected_pixels(70.0, P1, 0.2) <= 1.05


def test_fronto_parallel_close_voxel_gets_inverse_xi():
    params = InformationParams()
    vp = Viewpoint((0.1, 0.1, 0.1), 0.0, 0.0)
    key = (100, 0, 0)              # 20 m ahead, px = 3.45 <= 6
    vi = voxel_information(key, vp, normal=(-1, 0, 0), hit_distance_to_mesh=20.0, params=params)
    assert vi == pytest.approx(1 / params.xi)


def test_unknown_normal_uses_crease_fallback():
    params = InformationParams()
    vi = voxel_information((100, 0, 0), Viewpoint((0.1, 0.1, 0.1)), params=params)
    assert vi == pytest.approx(0.2 / params.xi)


@given(st.floats(0, 180), st.floats(0, 180), st.floats(0.01, 50), st.floats(0.01, 50))
def test_monotone_factors(g1, g2, p1, p2):
    params = InformationParams()
    lo_g, hi_g = sorted((g1, g2))
    lo_p, hi_p = sorted((p1, p2))
    assert incidence_factor(hi_g, params) <= incidence_factor(lo_g, params)
    assert resolution_factor(hi_p, params) <= resolution_factor(lo_p, params)


def test_information_bounded_on_grid():
    params = InformationParams()
    rng = np.random.default_rng(0)
    centers = rng.uniform(-30, 30, (2000, 3))
    normals = rng.normal(size=(2000, 3))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    dist = np.linalg.norm(centers, axis=1)
    mesh = np.where(rng.random(2000) < 0.5, dist + rng.normal(0, 0.3, 2000), np.inf)
    vi = information_values(centers, np.zeros(3), normals, mesh, params)
    assert np.all(vi > 0) and np.all(vi <= 1 / params.xi)


def test_key_codes_round_trip():
    keys = np.array([[0, 0, 0], [-5, 7, 1 << 19], [-(1 << 20), (1 << 20) - 1, 3]])
    assert np.array_equal(decode_keys(encode_keys(keys)), keys)


def test_wall_occludes_everything_behind():
    occ = wall_map()
    vp = Viewpoint((0.1, 0.1, 0.1), 0.0, 0.0)
    vis = visible_voxels(occ, vp, CameraIntrinsics(30, 20, 20.0))
    assert len(vis.keys) == 600
    assert np.all(vis.keys[:, 0] == 25)


def test_frontier_unknown_voxels_appear():
    occ = OccupancyMap(BOUNDS)
    occ.carve_box(Box((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0)))
    vis = visible_voxels(occ, Viewpoint((0.1, 0.1, 0.1), 0.0, -0.2), CameraIntrinsics(16, 12, 10.0))
    assert len(vis.keys)
    assert all(occ.classify(k).value == "unknown" for k in vis.keys)


def _march_first_nonfree(occ, o, d, max_len):
    for k in segment_voxels_exact(o, d, max_len, occ.voxel_size):
        if not occ.is_free(k) or occ._index(k) is None:
            return k if occ._index(k) is not None else None
    return None


def test_visible_set_matches_exact_march():
    rng = np.random.default_rng(2)
    occ = free_map(BOUNDS)
    for _ in range(400):
        set_voxel(occ, tuple(rng.integers([0, -25, -25], [55, 25, 25])), rng.choice([0.0, logit(0.9)]))
    vp = Viewpoint((-1.0, 0.3, 0.2), 0.1, -0.1)
    intr = CameraIntrinsics(24, 18, 14.0)
    vis = visible_voxels(occ, vp, intr)
    got = {int(p): tuple(k) for p, k in zip(vis.pixel, vis.keys.tolist())}
    rays = pixel_rays(vp, intr).reshape(-1, 3)
    for i, d in enumerate(rays):
        ref = _march_first_nonfree(occ, vp.p, d, 30.0)
        assert got.get(i) == ref


def test_flat_wall_uses_true_normals():
    tris = wall_mesh(5.05)
    cfg = {"roi": {"min": [4.8, -3, -3], "max": [5.4, 3, 3]}, "allowed_space": {"min": [-2, -6, -6], "max": [12, 6, 6]}}
    scene = scene_from_triangles(tris, cfg)
    occ = wall_map()
    params = InformationParams()
    vp = Viewpoint((0.1, 0.1, 0.1), 0.0, 0.0)
    ob = compute_observation(scene, occ, vp, CameraIntrinsics(30, 20, 20.0), params)
    assert len(ob)
    centers = (ob.keys + 0.5) * 0.2
    r = vp.p - centers
    gamma = np.degrees(np.arccos(-r[:, 0] / np.linalg.norm(r, axis=1)))     # normal is -x
    px = projected_pixels(np.linalg.norm(r, axis=1), params)
    expect = incidence_factor(gamma, params) * resolution_factor(px, params) / params.xi
    assert np.allclose(ob.vi, expect)
    fallback = 0.2 * resolution_factor(px, params) / params.xi
    assert np.all(ob.vi > fallback)     # never the crease fallback here


def test_observation_without_mesh_behind_uses_fallback():
    occ = wall_map()
    empty = scene_from_triangles(np.zeros((0, 3, 3)), {"roi": {"min": [4, -3, -3], "max": [6, 3, 3]},
                                                       "allowed_space": {"min": [-2, -6, -6], "max": [12, 6, 6]}})
    ob = compute_observation(empty, occ, Viewpoint((0.1, 0.1, 0.1)), CameraIntrinsics(12, 8, 8.0))
    r = np.linalg.norm((ob.keys + 0.5) * 0.2 - 0.1, axis=1)
    expect = 0.2 * resolution_factor(projected_pixels(r, ob_params := InformationParams()), ob_params) / 0.25
    assert np.allclose(ob.vi, expect)


def test_lowres_set_is_subset_of_full_resolution():
    rng = np.random.default_rng(4)
    occ = free_map(BOUNDS)
    for _ in range(300):
        set_voxel(occ, tuple(rng.integers([0, -25, -25], [55, 25, 25])), logit(0.9))
    vp = Viewpoint((-1.0, 0.3, 0.2), 0.05, -0.05)
    full = CameraIntrinsics(600, 450, 345.0)
    low = lowres_observation_set(occ, vp, full.scaled(0.1))
    hi = set(encode_keys(visible_voxels(occ, vp, full).keys).tolist())
    assert low and low <= hi
    assert low == lowres_observation_set(occ, vp, full.scaled(0.1))


def test_empty_map_gives_frontier():
    occ = OccupancyMap(BOUNDS)
    assert lowres_observation_set(occ, Viewpoint((0.1, 0.1, 0.1)), CameraIntrinsics(6, 4, 4.0))


def test_matchable_examples():
    a = set(range(100))
    assert matchable(a, a, 1.0)
    assert matchable(set(range(100)), set(range(60, 160)), 0.4)
    assert not matchable(set(range(100)), set(range(61, 161)), 0.4)
    assert not matchable({1, 2}, {3, 4}, 0.4)


@given(st.sets(st.integers(0, 40)), st.sets(st.integers(0, 40)), st.floats(0, 1))
def test_matchable_symmetric(a, b, alpha):
    assert matchable(a, b, alpha) == matchable(b, a, alpha)


def test_observation_cache_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    keys = rng.integers(-100, 100, (50, 3))
    keys = keys[np.argsort(encode_keys(keys))]
    obs = [ViewpointObservation(0, keys, rng.uniform(0.1, 4, 50), frozenset(encode_keys(keys[:7]).tolist())),
           ViewpointObservation(1, np.zeros((0, 3), np.int64), np.zeros(0))]
    save_observations(tmp_path / "o.bin", obs)
    back = load_observations(tmp_path / "o.bin")
    assert [b.viewpoint_id for b in back] == [0, 1]
    assert np.array_equal(back[0].keys, keys)
    assert np.allclose(back[0].vi, obs[0].vi, rtol=1e-6)
    assert back[0].lowres == obs[0].lowres
    assert len(back[1]) == 0
