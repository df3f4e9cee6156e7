"""Parametric street scenes for desk-scale experiments.

A scene is a flat ground plane plus axis-aligned boxes, expressed in a world
frame that coincides with the camera frame at the identity pose (+x right,
+y down, +z forward). The camera sits ``ground_height`` meters above the
ground, so the ground is the plane ``y = ground_height``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import CameraIntrinsics, PointCloud, RigidTransform
from .radar import RadarFrame

SKY_LUMINANCE = 0.9
GROUND_LUMINANCE = 0.35


@dataclass(frozen=True)
class Box:
    center: tuple[float, float, float]
    extent: tuple[float, float, float]   # full side lengths along x, y, z

    def __post_init__(self):
        if len(self.center) != 3 or len(self.extent) != 3:
            raise ValueError("box center and extent need three values each")
        if min(self.extent) <= 0:
            raise ValueError(f"box extents must be positive, got {self.extent}")

    @property
    def lower(self) -> np.ndarray:
        return np.asarray(self.center, dtype=np.float64) - np.asarray(self.extent, dtype=np.float64) / 2

    @property
    def upper(self) -> np.ndarray:
        return np.asarray(self.center, dtype=np.float64) + np.asarray(self.extent, dtype=np.float64) / 2


@dataclass(frozen=True)
class Scene:
    ground_height: float = 1.5
    obstacles: tuple[Box, ...] = ()
    far_plane: float = 80.0

    def __post_init__(self):
        if not self.ground_height > 0:
            raise ValueError("camera must be above the ground (ground_height > 0)")
        if not self.far_plane > 0:
            raise ValueError("far_plane must be positive")
        for b in self.obstacles:
            if b.upper[2] <= 0:
                raise ValueError(f"obstacle at {b.center} lies behind the camera")
        object.__setattr__(self, "obstacles", tuple(self.obstacles))


@dataclass(frozen=True)
class RadarModel:
    """Planar radar sensor model.

    Range error is Gaussian along the beam with standard deviation
    ``depth_noise_sigma + range_noise_frac * range``. With probability
    ``clutter_prob`` a return is replaced by a spurious one at a uniform
    random range up to ``max_range``.
    """

    plane_height: float = 0.5
    depth_noise_sigma: float = 0.5
    azimuth_step: float = math.radians(2.0)
    dropout_prob: float = 0.5
    seed: int = 0
    range_noise_frac: float = 0.05
    clutter_prob: float = 0.15
    max_range: float = 100.0
    fov: float | None = None             # radians; None means the camera's horizontal FOV

    def __post_init__(self):
        if self.depth_noise_sigma < 0 or self.range_noise_frac < 0:
            raise ValueError("noise levels must be non-negative")
        if not self.azimuth_step > 0:
            raise ValueError("azimuth_step must be positive")
        for name in ("dropout_prob", "clutter_prob"):
            p = getattr(self, name)
            if not 0 <= p <= 1:
                raise ValueError(f"{name} must be within [0, 1], got {p}")
        if not self.max_range > 0:
            raise ValueError("max_range must be positive")


def street_scene() -> Scene:
    """Default street: building rows, parked cars, poles and traffic ahead."""
    boxes = [
        Box((-10.0, -4.5, 100.0), (4.0, 12.0, 220.0)),
        Box((10.5, -6.0, 100.0), (4.0, 15.0, 220.0)),
    ]
    car = (1.8, 1.5, 4.4)
    for i, z in enumerate(range(8, 150, 9)):
        side = -1 if i % 2 else 1
        if i % 3 != 2:
            boxes.append(Box((side * 4.6, 0.75, float(z)), car))
    for z in range(12, 150, 15):
        boxes.append(Box((-6.8, -1.0, float(z)), (0.3, 5.0, 0.3)))
        boxes.append(Box((7.2, -1.0, float(z) + 6.0), (0.3, 5.0, 0.3)))
    boxes += [
        Box((0.8, 0.75, 24.0), car),
        Box((-1.7, 0.0, 41.0), (2.5, 3.0, 9.0)),
        Box((1.5, 0.75, 63.0), car),
        Box((-1.0, 0.75, 88.0), car),
        Box((1.2, -0.5, 118.0), (2.5, 4.0, 10.0)),
    ]
    return Scene(ground_height=1.5, obstacles=tuple(boxes), far_plane=80.0)


def default_intrinsics() -> CameraIntrinsics:
    return CameraIntrinsics(fx=100.0, fy=100.0, cx=100.0, cy=45.0, width=200, height=100)


def _box_arrays(scene: Scene):
    if not scene.obstacles:
        return np.zeros((0, 3)), np.zeros((0, 3))
    lo = np.stack([b.lower for b in scene.obstacles])
    hi = np.stack([b.upper for b in scene.obstacles])
    return lo, hi


def cast_rays(scene: Scene, origin: np.ndarray, dirs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest hit along each ray.

    Args:
        origin: ray origin in world coordinates, shape (3,).
        dirs: ray directions in world coordinates, shape (N, 3); need not be unit.

    Returns:
        ``(t, hit_id)`` with ray parameter of the nearest hit (inf when nothing
        is hit) and the hit object: -1 nothing, 0 ground, i + 1 obstacle i.
    """
    dirs = np.asarray(dirs, dtype=np.float64)
    n = len(dirs)
    best = np.full(n, np.inf)
    hit = np.full(n, -1, dtype=np.int64)

    with np.errstate(divide="ignore", invalid="ignore"):
        t_ground = (scene.ground_height - origin[1]) / dirs[:, 1]
    ok = (dirs[:, 1] > 0) & (t_ground > 0)
    best[ok] = t_ground[ok]
    hit[ok] = 0

    lo, hi = _box_arrays(scene)
    par = dirs == 0
    safe = np.where(par, 1.0, dirs)
    for i in range(len(lo)):
        t1 = (lo[i] - origin) / safe
        t2 = (hi[i] - origin) / safe
        # axis-parallel rays: inside the slab -> unbounded, outside -> miss
        inside = (origin >= lo[i]) & (origin <= hi[i])
        tmin = np.where(par, np.where(inside, -np.inf, np.inf), np.minimum(t1, t2))
        tmax = np.where(par, np.where(inside, np.inf, -np.inf), np.maximum(t1, t2))
        t_near = tmin.max(axis=1)
        t_far = tmax.min(axis=1)
        t_hit = np.where(t_near > 0, t_near, t_far)
        ok = (t_near <= t_far) & (t_far > 0) & (t_hit < best)
        best[ok] = t_hit[ok]
        hit[ok] = i + 1
    return best, hit


def _pixel_rays(intr: CameraIntrinsics) -> np.ndarray:
    v, u = np.mgrid[0:intr.height, 0:intr.width].astype(np.float64)
    d = np.stack([(u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, np.ones_like(u)], axis=-1)
    return d.reshape(-1, 3)


def _cast_camera(scene: Scene, intr: CameraIntrinsics, world_from_camera: RigidTransform | None):
    pose = world_from_camera or RigidTransform()
    dirs_cam = _pixel_rays(intr)
    t, hit = cast_rays(scene, pose.translation, dirs_cam @ pose.rotation.T)
    # camera-frame direction has unit z, so the ray parameter is the depth
    depth = np.where(np.isfinite(t) & (t <= scene.far_plane), t, 0.0)
    hit = np.where(depth > 0, hit, -1)
    return depth.reshape(intr.shape), hit.reshape(intr.shape)


def render_gt_depth(scene: Scene, intr: CameraIntrinsics,
                    world_from_camera: RigidTransform | None = None) -> np.ndarray:
    """Ray-cast depth per pixel; nothing hit within ``far_plane`` gives 0."""
    return _cast_camera(scene, intr, world_from_camera)[0]


def object_luminance(ids: np.ndarray) -> np.ndarray:
    """Flat shade per object: sky bright, ground mid grey, boxes spread over [0.05, 0.75]."""
    golden = (np.sqrt(5.0) - 1.0) / 2.0
    box = 0.05 + 0.7 * np.mod(ids * golden, 1.0)
    return np.where(ids < 0, SKY_LUMINANCE, np.where(ids == 0, GROUND_LUMINANCE, box))


def render_guide(scene: Scene, intr: CameraIntrinsics,
                 world_from_camera: RigidTransform | None = None) -> np.ndarray:
    """Luminance image in [0, 1] used as interpolation guidance."""
    return _shade(*_cast_camera(scene, intr, world_from_camera))


def _shade(depth: np.ndarray, ids: np.ndarray) -> np.ndarray:
    lum = object_luminance(ids)
    # mild distance shading so large surfaces are not perfectly flat
    shade = np.where(depth > 0, 0.1 * np.exp(-depth / 30.0), 0.0)
    return np.clip(lum + shade, 0.0, 1.0)


def sample_lidar(gt, density: float, seed: int = 0, n_beams: int = 32) -> np.ndarray:
    """Row-banded subsample of a dense depth map mimicking a spinning lidar.

    Beams are evenly spaced image rows with a random phase. Inside the beam
    rows each valid pixel is kept with the probability that makes the
    expected total ``density`` times the number of valid pixels; when the
    beam rows cannot supply that many, more rows are added.
    """
    if not 0 < density <= 1:
        raise ValueError(f"density must be within (0, 1], got {density}")
    gt = np.asarray(gt, dtype=np.float64)
    rng = np.random.default_rng(seed)
    h = gt.shape[0]
    valid = gt > 0
    target = density * valid.sum()
    per_row = valid.sum(axis=1)
    phase = rng.random()
    k = min(h, n_beams)
    while True:
        rows = np.unique(np.floor((np.arange(k) + phase) * h / k).astype(np.int64))
        available = per_row[rows].sum()
        if available >= target or k >= h:
            break
        k = min(h, 2 * k)
    keep_prob = 1.0 if available == 0 else min(1.0, target / available)
    in_beam = np.zeros_like(valid)
    in_beam[rows] = True
    draw = rng.random(gt.shape)
    keep = valid & in_beam & (draw < keep_prob)
    return np.where(keep, gt, 0.0)


def radar_azimuths(intr: CameraIntrinsics, model: RadarModel) -> np.ndarray:
    fov = model.fov
    if fov is None:
        fov = 2.0 * math.atan(max(intr.cx, intr.width - intr.cx) / intr.fx)
    n = int(math.floor(fov / model.azimuth_step)) + 1
    return (np.arange(n) - (n - 1) / 2.0) * model.azimuth_step


def sample_radar(scene: Scene, intr: CameraIntrinsics, model: RadarModel,
                 world_from_ego: RigidTransform | None = None, timestamp: float = 0.0,
                 rng: np.random.Generator | None = None) -> RadarFrame:
    """Simulate one planar radar sweep.

    Beams fan out horizontally at ``plane_height`` above the ground, one per
    ``azimuth_step``. Returned points are in the sensor frame, which here
    coincides with the ego (and camera) axes and origin.
    """
    pose = world_from_ego or RigidTransform()
    if rng is None:
        rng = np.random.default_rng(model.seed)
    az = radar_azimuths(intr, model)
    y_plane = scene.ground_height - model.plane_height
    dirs = np.stack([np.sin(az), np.zeros_like(az), np.cos(az)], axis=1)
    origin = pose.apply(np.array([0.0, y_plane, 0.0]))[0]
    t, hit = cast_rays(scene, origin, dirs @ pose.rotation.T)

    # draw every random number for every beam so streams stay aligned
    noise = rng.standard_normal(len(az))
    drop = rng.random(len(az))
    clutter = rng.random(len(az))
    clutter_range = rng.uniform(1.0, model.max_range, len(az))

    rng_range = np.where(hit > 0, t, np.inf)
    ok = np.isfinite(rng_range) & (rng_range <= model.max_range)
    measured = rng_range + noise * (model.depth_noise_sigma + model.range_noise_frac * np.where(ok, rng_range, 0.0))
    is_clutter = clutter < model.clutter_prob
    measured = np.where(is_clutter, clutter_range, measured)
    ok = (ok | is_clutter) & (drop >= model.dropout_prob) & (measured > 0)

    xyz = np.stack([dirs[ok, 0] * measured[ok],
                    np.full(ok.sum(), y_plane),
                    dirs[ok, 2] * measured[ok]], axis=1)
    return RadarFrame(points=PointCloud(xyz, frame="radar"), timestamp=timestamp,
                      sensor_to_ego=RigidTransform(), ego_to_global=pose)


@dataclass
class SynthFrame:
    index: int
    timestamp: float
    pose: RigidTransform
    radar: RadarFrame
    gt: np.ndarray
    lidar: np.ndarray
    guide: np.ndarray


@dataclass
class SequenceConfig:
    frames: int = 50
    seed: int = 0
    ego_step: float = 1.0                # meters travelled along +z per frame
    frame_period: float = 0.075          # seconds between radar sweeps
    lidar_density: float = 0.05
    radar: RadarModel = field(default_factory=RadarModel)


def generate_frame(scene: Scene, intr: CameraIntrinsics, cfg: SequenceConfig, index: int) -> SynthFrame:
    """One frame of a straight-driving sequence; depends only on (cfg, index)."""
    pose = RigidTransform.from_translation(0.0, 0.0, cfg.ego_step * index)
    ts = cfg.frame_period * index
    rng = np.random.default_rng([cfg.seed, cfg.radar.seed, index])
    radar = sample_radar(scene, intr, cfg.radar, pose, ts, rng)
    gt, ids = _cast_camera(scene, intr, pose)
    lidar = sample_lidar(gt, cfg.lidar_density, seed=int(rng.integers(2 ** 31)))
    guide = _shade(gt, ids)
    return SynthFrame(index, ts, pose, radar, gt, lidar, guide)
