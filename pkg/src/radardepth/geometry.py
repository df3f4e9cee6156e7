"""Pinhole camera model, rigid transforms and point projection.

Camera frame convention: +z forward along the optical axis, +x right, +y down.
Depth maps are 2D float arrays of shape (height, width) in meters, with 0.0
marking pixels that carry no measurement.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Continuous pixel coordinates within this distance below an integer are
# snapped up before flooring, so backprojected pixel centers survive the
# floating point roundtrip.
_PIXEL_SNAP = 1e-9


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image size must be positive, got {self.width}x{self.height}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError(
                f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height} image")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class RigidTransform:
    """SE(3) pose mapping points of a source frame into a target frame."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        trans = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(rot)) and np.all(np.isfinite(trans))):
            raise ValueError("transform contains non-finite values")
        if not np.allclose(rot.T @ rot, np.eye(3), rtol=0.0, atol=1e-9):
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(rot) - 1.0) > 1e-9:
            raise ValueError("rotation determinant is not +1")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @classmethod
    def identity(cls) -> RigidTransform:
        return cls()

    @classmethod
    def from_translation(cls, x: float, y: float, z: float) -> RigidTransform:
        return cls(np.eye(3), np.array([x, y, z], dtype=np.float64))

    @classmethod
    def from_matrix(cls, matrix) -> RigidTransform:
        """Build from a 3x4 or 4x4 matrix (or 12 row-major numbers)."""
        m = np.asarray(matrix, dtype=np.float64)
        if m.size == 12:
            m = m.reshape(3, 4)
        elif m.size == 16:
            m = m.reshape(4, 4)[:3]
        else:
            raise ValueError(f"expected 12 or 16 matrix entries, got {m.size}")
        return cls(m[:, :3], m[:, 3])

    @classmethod
    def from_yaw(cls, yaw: float, translation=(0.0, 0.0, 0.0)) -> RigidTransform:
        """Rotation about the camera y axis (vertical, pointing down)."""
        c, s = np.cos(yaw), np.sin(yaw)
        rot = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
        return cls(rot, np.asarray(translation, dtype=np.float64))

    @property
    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, xyz: np.ndarray) -> np.ndarray:
        xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
        return xyz @ self.rotation.T + self.translation

    def inverse(self) -> RigidTransform:
        rot_t = self.rotation.T
        return RigidTransform(rot_t, -rot_t @ self.translation)

    def __matmul__(self, other: RigidTransform) -> RigidTransform:
        return compose(self, other)


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Return the transform that applies ``b`` first, then ``a``."""
    rot = a.rotation @ b.rotation
    # re-orthonormalise so long chains stay within the validation tolerance
    u, _, vt = np.linalg.svd(rot)
    rot = u @ vt
    return RigidTransform(rot, a.rotation @ b.translation + a.translation)


@dataclass
class PointCloud:
    """3D points of shape (N, 3) in a named frame plus optional per-point arrays."""

    xyz: np.ndarray
    frame: str = "camera"
    attributes: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.xyz = np.asarray(self.xyz, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(self.xyz)):
            raise ValueError("point coordinates must be finite")
        for name, values in self.attributes.items():
            values = np.asarray(values, dtype=np.float64).reshape(-1)
            if len(values) != len(self.xyz):
                raise ValueError(f"attribute {name!r} has {len(values)} entries for {len(self.xyz)} points")
            self.attributes[name] = values

    def __len__(self) -> int:
        return len(self.xyz)

    @classmethod
    def empty(cls, frame: str = "camera") -> PointCloud:
        return cls(np.zeros((0, 3)), frame)

    @classmethod
    def concatenate(cls, clouds: list[PointCloud], frame: str | None = None) -> PointCloud:
        if not clouds:
            return cls.empty(frame or "camera")
        # only attributes shared by every cloud survive the merge
        names = set(clouds[0].attributes)
        for c in clouds[1:]:
            names &= set(c.attributes)
        attrs = {n: np.concatenate([c.attributes[n] for c in clouds]) for n in sorted(names)}
        return cls(np.concatenate([c.xyz for c in clouds]), frame or clouds[0].frame, attrs)


def transform_points(points: PointCloud, t: RigidTransform, frame: str | None = None) -> PointCloud:
    attrs = {k: v.copy() for k, v in points.attributes.items()}
    return PointCloud(t.apply(points.xyz), frame or points.frame, attrs)


def project_continuous(xyz: np.ndarray, intr: CameraIntrinsics) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Continuous pixel coordinates (u, v) and depth of camera-frame points.

    No visibility test is applied; points with z <= 0 give meaningless (u, v).
    """
    xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
    z = xyz[:, 2]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        u = intr.fx * xyz[:, 0] / z + intr.cx
        v = intr.fy * xyz[:, 1] / z + intr.cy
    return u, v, z


def project_points(points, intr: CameraIntrinsics, return_index: bool = False):
    """Project camera-frame points to integer pixels.

    Points behind the camera or falling outside ``[0, width) x [0, height)``
    are dropped. Pixel indices are the floor of the continuous coordinates.

    Args:
        points: PointCloud or (N, 3) array in the camera frame.
        intr: camera intrinsics.
        return_index: also return the indices of the kept input points.

    Returns:
        Tuple ``(u, v, depth)`` of integer column, integer row and float depth
        arrays, followed by the kept indices when ``return_index`` is set.
    """
    xyz = points.xyz if isinstance(points, PointCloud) else np.asarray(points, dtype=np.float64).reshape(-1, 3)
    u, v, z = project_continuous(xyz, intr)
    with np.errstate(invalid="ignore"):
        uf = np.floor(u + _PIXEL_SNAP)
        vf = np.floor(v + _PIXEL_SNAP)
        keep = (z > 0) & (uf >= 0) & (uf < intr.width) & (vf >= 0) & (vf < intr.height)
    idx = np.flatnonzero(keep)
    out = (uf[idx].astype(np.int64), vf[idx].astype(np.int64), z[idx].copy())
    if return_index:
        return out + (idx,)
    return out


def backproject(u, v, depth, intr: CameraIntrinsics) -> np.ndarray:
    """Lift pixel coordinates with depth back to camera-frame points.

    Scalars give a length-3 vector, arrays give an (N, 3) array.
    """
    depth_arr = np.asarray(depth, dtype=np.float64)
    if np.any(~(depth_arr > 0)):
        raise ValueError("depth must be positive for backprojection")
    u, v, depth_arr = np.broadcast_arrays(np.asarray(u, dtype=np.float64),
                                          np.asarray(v, dtype=np.float64), depth_arr)
    return np.stack([(u - intr.cx) * depth_arr / intr.fx,
                     (v - intr.cy) * depth_arr / intr.fy,
                     depth_arr], axis=-1)


def check_depth_map(depth: np.ndarray, name: str = "depth map") -> np.ndarray:
    """Validate a depth raster and return it as a float64 array."""
    d = np.asarray(depth, dtype=np.float64)
    if d.ndim != 2:
        raise ValueError(f"{name} must be 2D, got shape {d.shape}")
    if not np.all(np.isfinite(d)) or np.any(d < 0):
        raise ValueError(f"{name} must hold finite, non-negative depths")
    return d


def check_same_shape(a: np.ndarray, b: np.ndarray, names=("first map", "second map")) -> None:
    if np.shape(a) != np.shape(b):
        raise ValueError(f"{names[0]} has shape {np.shape(a)} but {names[1]} has shape {np.shape(b)}")
