import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from viewplan.evaluation import (FusionParams, MetricsReport, back_project, f_score, format_table,
                                 fuse_depth_maps, parse_table, precision_recall_f1, simulate_capture,
                                 support_counts)
from viewplan.geometry import CameraIntrinsics, Viewpoint
from viewplan.planner import Trajectory, TrajectoryEntry
from viewplan.procedural import wall_mesh
from viewplan.scene import render_depth_normal, scene_from_triangles

WALL_CFG = {"roi": {"min": [0, -100, -100], "max": [20, 100, 100]},
            "allowed_space": {"min": [-20, -200, -200], "max": [30, 200, 200]}}


@pytest.fixture(scope="module")
def wall():
    return scene_from_triangles(wall_mesh(10.0), WALL_CFG)


def test_f_score_table_rows():
    assert f_score(97.22, 62.53) == pytest.approx(76.11, abs=0.01)
    assert f_score(96.56, 67.16) == pytest.approx(79.22, abs=0.01)
    assert f_score(0.0, 0.0) == 0.0


def test_identical_clouds_score_perfectly():
    pts = np.random.default_rng(0).uniform(0, 5, (500, 3))
    rep = precision_recall_f1(pts, pts)
    assert (rep.precision, rep.recall, rep.f_score) == (100.0, 100.0, 100.0)


def test_empty_cloud_flagged():
    rep = precision_recall_f1(np.zeros((0, 3)), np.ones((3, 3)))
    assert rep.empty and rep.f_score == 0.0


def test_threshold_is_inclusive():
    a = np.array([[0.0, 0.0, 0.0]])
    b = np.array([[0.1, 0.0, 0.0]])
    assert precision_recall_f1(a, b, 0.1).precision == 100.0
    assert precision_recall_f1(a, b, 0.0999).precision == 0.0


def brute_pr(rec, gt, delta):
    d = np.linalg.norm(rec[:, None] - gt[None], axis=2)
    return 100.0 * np.mean(d.min(axis=1) <= delta), 100.0 * np.mean(d.min(axis=0) <= delta)


@given(st.integers(0, 10_000), st.floats(0.01, 1.0))
def test_metrics_match_brute_force_and_swap(seed, delta):
    rng = np.random.default_rng(seed)
    rec = rng.uniform(0, 3, (int(rng.integers(1, 80)), 3))
    gt = rng.uniform(0, 3, (int(rng.integers(1, 80)), 3))
    rep = precision_recall_f1(rec, gt, delta)
    p, r = brute_pr(rec, gt, delta)
    assert rep.precision == pytest.approx(p) and rep.recall == pytest.approx(r)
    swapped = precision_recall_f1(gt, rec, delta)
    assert (swapped.precision, swapped.recall) == (rep.recall, rep.precision)
    assert rep.f_score == pytest.approx(f_score(rep.precision, rep.recall))


@given(st.integers(0, 10_000), st.floats(0.01, 0.5), st.floats(0.0, 0.5))
def test_delta_monotone(seed, d1, extra):
    rng = np.random.default_rng(seed)
    rec, gt = rng.uniform(0, 3, (60, 3)), rng.uniform(0, 3, (70, 3))
    a, b = precision_recall_f1(rec, gt, d1), precision_recall_f1(rec, gt, d1 + extra)
    assert b.precision >= a.precision and b.recall >= a.recall


def test_support_counts_match_brute_force():
    pts = np.random.default_rng(1).uniform(0, 1, (400, 3))
    d = np.linalg.norm(pts[:, None] - pts[None], axis=2)
    ref = (d <= 0.1).sum(axis=1)
    got = support_counts(pts, 0.1, 10 ** 6)
    assert np.array_equal(got, ref)
    # counts below the threshold are exact, the rest at least the threshold
    got3 = support_counts(pts, 0.1, 3)
    assert np.all((got3 == ref) | ((got3 >= 3) & (ref >= 3)))


def test_single_wall_image_all_pixels_survive(wall):
    intr = CameraIntrinsics(40, 30, 30.0)
    img = render_depth_normal(wall, Viewpoint((0.0, 0.0, 0.0)), intr)
    cloud = fuse_depth_maps([img], FusionParams(min_support=1, fusion_voxel=1e-4))
    assert len(cloud) == intr.width * intr.height
    assert np.allclose(cloud[:, 0], 10.0)


def test_sparse_patch_removed_by_support():
    # two far-apart views whose pixels land far from each other: support 1 < 3
    scene = scene_from_triangles(wall_mesh(10.0), WALL_CFG)
    intr = CameraIntrinsics(4, 3, 2.0)
    imgs = [render_depth_normal(scene, Viewpoint((0.0, y, 0.0)), intr) for y in (0.0, 0.37)]
    assert len(fuse_depth_maps(imgs, FusionParams(min_support=1))) == 24
    assert len(fuse_depth_maps(imgs, FusionParams(min_support=3))) == 0


def test_grazing_pixels_filtered(wall):
    vp = Viewpoint((0.0, 0.0, 0.0), math.radians(60.0), 0.0)   # wall seen at 30-90 deg incidence
    img = render_depth_normal(wall, vp, CameraIntrinsics(60, 10, 20.0))
    pts = back_project(img, max_incidence=70.0)
    rays = (pts - vp.p) / np.linalg.norm(pts - vp.p, axis=1, keepdims=True)
    assert 0 < len(pts) < img.valid.sum()
    assert np.all(np.degrees(np.arccos(rays[:, 0])) <= 70.0 + 1e-9)


def test_lower_support_keeps_superset(wall):
    rng = np.random.default_rng(0)
    imgs = [render_depth_normal(wall, Viewpoint((0.0, *rng.uniform(-2, 2, 2))), CameraIntrinsics(30, 20, 15.0))
            for _ in range(4)]
    prev = None
    for s in (6, 4, 3, 2, 1):
        out = {tuple(p) for p in fuse_depth_maps(imgs, FusionParams(min_support=s, fusion_voxel=1e-6))}
        if prev is not None:
            assert prev <= out
        prev = out


def test_capture_one_image_per_entry(wall):
    vps = [Viewpoint((0.0, 0.0, 0.0)), Viewpoint((1.0, 0.5, 0.0), 0.2, -0.1)]
    traj = Trajectory([TrajectoryEntry(None, "selected", v) for v in vps])
    intr = CameraIntrinsics(8, 6, 5.0)
    imgs = simulate_capture(wall, traj, intr)
    assert len(imgs) == 2
    for im, v in zip(imgs, vps):
        assert np.array_equal(im.depth, render_depth_normal(wall, v, intr).depth)
    assert len(simulate_capture(wall, traj.entries[:1] and [vps[0]], intr)) == 1


def test_table_round_trip():
    reps = [MetricsReport(96.56, 67.16, f_score(96.56, 67.16), method="recursive_greedy", score=1234.5,
                          budget_cost=899.9, images=61),
            MetricsReport(97.22, 62.53, f_score(97.22, 62.53), method="circle", images=20)]
    text = format_table(reps)
    back = parse_table(text)
    for a, b in zip(reps, back):
        assert (a.method, a.precision, a.recall, a.f_score, a.score, a.budget_cost, a.images) == \
               (b.method, b.precision, b.recall, b.f_score, b.score, b.budget_cost, b.images)
    with pytest.raises(ValueError):
        parse_table("not a table")
