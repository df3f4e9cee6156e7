"""Synthetic scenes: ray casting, lidar and radar sampling, frame generation."""

import math

import numpy as np
import pytest

from radardepth.geometry import RigidTransform, project_points
from radardepth.metrics import count_points
from radardepth.radar import accumulate_frames, intrinsic_error, render_sparse_depth
from radardepth.synth import (Box, RadarModel, Scene, SequenceConfig, cast_rays, default_intrinsics,
                              generate_frame, radar_azimuths, render_gt_depth, render_guide, sample_lidar,
                              sample_radar, street_scene)

WALL = Scene(ground_height=1000.0, obstacles=(Box((0.0, 0.0, 12.5), (1000.0, 4000.0, 1.0)),))
QUIET = dict(depth_noise_sigma=0.0, range_noise_frac=0.0, dropout_prob=0.0, clutter_prob=0.0)


def test_wall_fills_view():
    depth = render_gt_depth(WALL, default_intrinsics())
    assert np.all(depth == 12.0)


def test_ground_plane_rows():
    intr = default_intrinsics()
    depth = render_gt_depth(Scene(ground_height=1.5), intr)
    for v in range(intr.height):
        expected = intr.fy * 1.5 / (v - intr.cy) if v > intr.cy else 0.0
        if expected > 80.0:            # beyond the far plane
            expected = 0.0
        np.testing.assert_allclose(depth[v], expected, rtol=1e-12)
    assert not depth[:46].any()        # horizon row and sky


def test_far_plane_and_pose():
    intr = default_intrinsics()
    wall = Scene(ground_height=1000.0, obstacles=(Box((0.0, 0.0, 90.5), (1000.0, 1000.0, 1.0)),))
    assert not render_gt_depth(wall, intr).any()
    moved = render_gt_depth(wall, intr, RigidTransform.from_translation(0, 0, 20))
    np.testing.assert_allclose(moved, 70.0)


def test_parallel_rays_are_handled():
    scene = Scene(obstacles=(Box((0.0, 0.0, 10.0), (2.0, 2.0, 2.0)),))
    dirs = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]])
    with np.errstate(all="raise"):
        t, hit = cast_rays(scene, np.zeros(3), dirs)
    assert t[0] == 9.0 and hit[0] == 1
    assert t[2] == 1.5 and hit[2] == 0
    assert hit[1] == -1 and hit[3] == -1 and np.isinf(t[1])


def test_scene_validation():
    with pytest.raises(ValueError):
        Box((0, 0, 5), (1, 0, 1))
    with pytest.raises(ValueError):
        Scene(obstacles=(Box((0, 0, -5), (1, 1, 1)),))
    with pytest.raises(ValueError):
        Scene(ground_height=0.0)
    with pytest.raises(ValueError):
        RadarModel(dropout_prob=1.5)


def test_guide_is_in_unit_range():
    g = render_guide(street_scene(), default_intrinsics())
    assert g.min() >= 0.0 and g.max() <= 1.0
    assert len(np.unique(np.round(g, 3))) > 5


# --- lidar ----------------------------------------------------------------------------

def test_full_density_is_identity():
    gt = render_gt_depth(street_scene(), default_intrinsics())
    np.testing.assert_array_equal(sample_lidar(gt, 1.0, seed=3), gt)


def test_lidar_density_and_row_structure():
    gt = np.full((100, 100), 20.0)
    counts = []
    for seed in range(20):
        lidar = sample_lidar(gt, 0.05, seed=seed)
        counts.append(count_points(lidar))
        assert np.all((lidar == 0) | (lidar == gt))
        assert np.count_nonzero(lidar.any(axis=1)) <= 32
    assert all(450 <= c <= 550 for c in counts)


def test_lidar_determinism():
    gt = render_gt_depth(street_scene(), default_intrinsics())
    np.testing.assert_array_equal(sample_lidar(gt, 0.05, 11), sample_lidar(gt, 0.05, 11))
    assert not np.array_equal(sample_lidar(gt, 0.05, 11), sample_lidar(gt, 0.05, 12))
    with pytest.raises(ValueError):
        sample_lidar(gt, 0.0)


# --- radar ----------------------------------------------------------------------------

def test_noise_free_wall_depths():
    frame = sample_radar(WALL, default_intrinsics(), RadarModel(**QUIET))
    assert len(frame.points) == len(radar_azimuths(default_intrinsics(), RadarModel()))
    np.testing.assert_allclose(frame.points.xyz[:, 2], 12.0, rtol=0, atol=1e-12)
    np.testing.assert_allclose(frame.points.xyz[:, 1], WALL.ground_height - 0.5)


def test_forty_beams_with_half_dropout_give_about_twenty_points():
    intr = default_intrinsics()
    fov = 2 * math.atan(intr.cx / intr.fx)
    model = RadarModel(azimuth_step=fov / 39.5)
    assert len(radar_azimuths(intr, model)) == 40
    counts = [len(sample_radar(street_scene(), intr, model, rng=np.random.default_rng(s)).points)
              for s in range(200)]
    assert 17.0 <= np.mean(counts) <= 23.0
    assert min(counts) >= 5 and max(counts) <= 35


def test_radar_range_noise_rmse():
    # Gaussian range noise of 2 m gives a depth (z) error of noise * cos(azimuth),
    # about 0.9 * 2 m over a +-45 degree fan. A wall keeps pixel quantization at
    # depth edges out of the estimate; the camera creeps toward it from 25 m.
    scene = Scene(ground_height=1.5, obstacles=(Box((0.0, 0.0, 25.5), (200.0, 20.0, 1.0)),))
    intr = default_intrinsics()
    cfg = SequenceConfig(frames=100, ego_step=0.1, radar=RadarModel(
        depth_noise_sigma=2.0, range_noise_frac=0.0, dropout_prob=0.0, clutter_prob=0.0))
    sq, n = 0.0, 0
    for i in range(cfg.frames):
        f = generate_frame(scene, intr, cfg, i)
        cloud = accumulate_frames([f.radar], RigidTransform())
        rep = intrinsic_error(render_sparse_depth(cloud, intr), f.gt)
        sq += rep.rmse ** 2 * rep.point_count
        n += rep.point_count
    rmse = math.sqrt(sq / n)
    assert abs(rmse - 2.0) <= 0.2 * 2.0


def test_noise_free_radar_agrees_with_gt():
    # the camera ray through each point's continuous projection hits the same
    # surface at the same depth, unless something nearer blocks the camera's
    # (higher) line of sight
    scene, intr = street_scene(), default_intrinsics()
    cfg = SequenceConfig(frames=5, radar=RadarModel(**QUIET))
    agree = total = 0
    for i in range(cfg.frames):
        f = generate_frame(scene, intr, cfg, i)
        xyz = f.radar.points.xyz
        xyz = xyz[xyz[:, 2] < scene.far_plane]
        t, _ = cast_rays(scene, f.pose.translation, xyz / xyz[:, 2:3])
        assert np.all(t <= xyz[:, 2] + 1e-6)
        agree += int(np.sum(np.abs(t - xyz[:, 2]) <= 1e-6))
        total += len(xyz)
        # and the rendered map puts every visible point on its floor pixel
        u, v, z = project_points(xyz, intr)
        depth = render_sparse_depth(xyz, intr)
        assert np.all(depth[v, u] <= z)
    assert agree >= 0.9 * total


def test_frame_determinism():
    scene, intr = street_scene(), default_intrinsics()
    cfg = SequenceConfig(seed=5)
    a, b = generate_frame(scene, intr, cfg, 3), generate_frame(scene, intr, cfg, 3)
    np.testing.assert_array_equal(a.radar.points.xyz, b.radar.points.xyz)
    for name in ("gt", "lidar", "guide"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    c = generate_frame(scene, intr, SequenceConfig(seed=6), 3)
    assert not np.array_equal(a.radar.points.xyz, c.radar.points.xyz)


def test_frames_move_forward():
    cfg = SequenceConfig()
    f = generate_frame(street_scene(), default_intrinsics(), cfg, 4)
    np.testing.assert_allclose(f.pose.translation, [0, 0, 4.0])
    assert f.timestamp == pytest.approx(0.3)
