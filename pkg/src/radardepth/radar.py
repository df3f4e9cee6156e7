"""Radar preprocessing: multi-frame accumulation, projection, height extension,
ratio filtering against a reference depth, and intrinsic error measurement."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (CameraIntrinsics, PointCloud, RigidTransform, check_depth_map,
                       check_same_shape, compose, project_continuous, project_points,
                       transform_points)
from .metrics import count_points, threshold_ratio

UP = np.array([0.0, -1.0, 0.0])  # camera +y points down


class EmptyOverlapError(ValueError):
    """Raised when radar and reference share no valid pixel."""


@dataclass
class RadarFrame:
    points: PointCloud
    timestamp: float
    sensor_to_ego: RigidTransform = field(default_factory=RigidTransform)
    ego_to_global: RigidTransform = field(default_factory=RigidTransform)


@dataclass(frozen=True)
class HeightExtensionConfig:
    h_min: float = 0.25
    h_max: float = 2.0
    base_height: float = 0.5

    def __post_init__(self):
        if self.h_min > self.h_max:
            raise ValueError(f"height range inverted: h_min={self.h_min} > h_max={self.h_max}")
        if not (self.h_min <= self.base_height <= self.h_max):
            raise ValueError(f"base_height {self.base_height} outside [{self.h_min}, {self.h_max}]")


@dataclass(frozen=True)
class FilterConfig:
    ratio_threshold: float = 1.25 ** 2

    def __post_init__(self):
        if not self.ratio_threshold > 1:
            raise ValueError(f"ratio_threshold must exceed 1, got {self.ratio_threshold}")


@dataclass(frozen=True)
class IntrinsicErrorReport:
    delta1: float
    rmse: float
    point_count: int
    retained_fraction: float


def accumulate_frames(frames: list[RadarFrame], camera_from_ego: RigidTransform,
                      target: int | None = None) -> PointCloud:
    """Merge radar frames into the camera frame of the target (default: last) frame.

    Each frame goes sensor -> ego -> global -> target ego -> camera. Points are
    concatenated in frame order without deduplication; moving objects are not
    compensated.
    """
    if not frames:
        raise ValueError("need at least one radar frame")
    if target is None:
        target = len(frames) - 1
    if not 0 <= target < len(frames):
        raise ValueError(f"target index {target} out of range for {len(frames)} frames")
    stamps = [f.timestamp for f in frames]
    if any(b <= a for a, b in zip(stamps, stamps[1:])):
        raise ValueError("frame timestamps must strictly increase")

    camera_from_global = compose(camera_from_ego, frames[target].ego_to_global.inverse())
    clouds = []
    for f in frames:
        t = compose(camera_from_global, compose(f.ego_to_global, f.sensor_to_ego))
        clouds.append(transform_points(f.points, t, frame="camera"))
    return PointCloud.concatenate(clouds, frame="camera")


def splat_min(u: np.ndarray, v: np.ndarray, depth: np.ndarray, shape) -> np.ndarray:
    """Rasterize samples keeping the nearest depth per pixel; empty pixels are 0."""
    out = np.full(shape, np.inf)
    np.minimum.at(out, (v, u), depth)
    out[np.isinf(out)] = 0.0
    return out


def render_sparse_depth(points, intr: CameraIntrinsics) -> np.ndarray:
    u, v, z = project_points(points, intr)
    return splat_min(u, v, z, intr.shape)


def _segment_samples(xyz: np.ndarray, intr: CameraIntrinsics, cfg: HeightExtensionConfig,
                     ground_y: float, up: np.ndarray) -> np.ndarray:
    """Sample every point's vertical segment densely enough for 1-row spacing."""
    height = xyz @ up + ground_y          # height above ground of each point
    lo = xyz + np.outer(cfg.h_min - height, up)
    hi = xyz + np.outer(cfg.h_max - height, up)
    _, v_lo, z_lo = project_continuous(lo, intr)
    _, v_hi, z_hi = project_continuous(hi, intr)

    # v(t) along a 3D segment is projective; its slope varies at most by the
    # ratio of the end depths, so scaling the row span by it bounds the spacing
    with np.errstate(divide="ignore", invalid="ignore"):
        span = np.abs(v_hi - v_lo) * np.maximum(z_lo / z_hi, z_hi / z_lo)
    ok = (z_lo > 0) & (z_hi > 0) & np.isfinite(span)
    # cap keeps near-camera points from exploding the sample count
    n_samples = np.where(ok, np.minimum(np.ceil(span), 4 * (intr.height + intr.width)), 0).astype(np.int64) + 1

    own = (height >= cfg.h_min) & (height <= cfg.h_max)
    chunks = [xyz[own]]                   # the point itself lies on its segment
    for n in np.unique(n_samples):
        sel = n_samples == n
        t = np.linspace(0.0, 1.0, n)
        seg = lo[sel, None, :] + t[None, :, None] * (hi[sel] - lo[sel])[:, None, :]
        chunks.append(seg.reshape(-1, 3))
    return np.concatenate(chunks) if chunks else np.zeros((0, 3))


def extend_height(points, intr: CameraIntrinsics, cfg: HeightExtensionConfig, ground_y: float,
                  up=UP) -> np.ndarray:
    """Render points as vertical segments spanning ``[h_min, h_max]`` above ground.

    Args:
        points: PointCloud or (N, 3) array in the camera frame.
        intr: camera intrinsics.
        cfg: height range of the extension.
        ground_y: camera height above the ground plane, i.e. the ground's
            offset along ``-up`` in the camera frame (the ground's y coordinate
            for an upright camera).
        up: unit vector pointing up, in the camera frame.

    Returns:
        Sparse depth map. Each sample carries its own camera-frame depth and the
        nearest sample wins on pixel collisions.
    """
    if not isinstance(cfg, HeightExtensionConfig):
        raise TypeError("cfg must be a HeightExtensionConfig")
    xyz = points.xyz if isinstance(points, PointCloud) else np.asarray(points, dtype=np.float64).reshape(-1, 3)
    up = np.asarray(up, dtype=np.float64)
    up = up / np.linalg.norm(up)
    if len(xyz) == 0:
        return np.zeros(intr.shape)
    samples = _segment_samples(xyz, intr, cfg, ground_y, up)
    return render_sparse_depth(samples, intr)


def filter_by_ratio(radar, reference, cfg: FilterConfig | None = None) -> np.ndarray:
    """Zero radar pixels whose depth ratio to the reference is not below the threshold."""
    cfg = cfg or FilterConfig()
    radar = check_depth_map(radar, "radar depth")
    reference = check_depth_map(reference, "reference depth")
    check_same_shape(radar, reference, ("radar depth", "reference depth"))
    keep = (radar > 0) & (reference > 0) & (threshold_ratio(radar, reference) < cfg.ratio_threshold)
    return np.where(keep, radar, 0.0)


def intrinsic_error(radar, reference, baseline_count: int | None = None) -> IntrinsicErrorReport:
    """Error of radar depth against a reference over pixels valid in both.

    ``point_count`` counts every valid radar pixel; ``retained_fraction`` is
    that count over ``baseline_count`` (1.0 when no baseline is given).

    Raises:
        EmptyOverlapError: no pixel is valid in both maps.
    """
    radar = check_depth_map(radar, "radar depth")
    reference = check_depth_map(reference, "reference depth")
    check_same_shape(radar, reference, ("radar depth", "reference depth"))
    both = (radar > 0) & (reference > 0)
    if not both.any():
        raise EmptyOverlapError("radar and reference have no valid pixel in common")
    r, g = radar[both], reference[both]
    diff = r - g
    count = count_points(radar)
    if baseline_count is None:
        retained = 1.0
    elif baseline_count <= 0:
        raise ValueError("baseline_count must be positive")
    else:
        retained = count / baseline_count
    return IntrinsicErrorReport(
        delta1=float(np.mean(threshold_ratio(r, g) < 1.25)),
        rmse=float(math.sqrt(np.mean(diff * diff))),
        point_count=count,
        retained_fraction=float(retained),
    )
