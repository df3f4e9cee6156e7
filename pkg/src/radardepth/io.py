"""File formats: PFM/PNG depth maps, CSV point clouds, calibration, poses,
scene descriptions and key-value configuration files."""

from __future__ import annotations

import csv
import re
from pathlib import Path

import numpy as np

from .geometry import CameraIntrinsics, PointCloud, RigidTransform
from .synth import Box, Scene

POINT_COLUMNS = ("x", "y", "z")
OPTIONAL_POINT_COLUMNS = ("rcs", "vx", "vy")


class FormatError(ValueError):
    """Malformed input file; carries the path, line number and offending key."""

    def __init__(self, message: str, path=None, line: int | None = None, key: str | None = None):
        where = str(path) if path is not None else "<input>"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}")
        self.path = path
        self.line = line
        self.key = key


# --- depth maps -------------------------------------------------------------

def write_pfm(path, data: np.ndarray) -> None:
    """Write a single-channel little-endian PFM; rows are stored bottom to top."""
    data = np.asarray(data)
    if data.ndim != 2:
        raise ValueError(f"PFM writer expects a 2D array, got shape {data.shape}")
    h, w = data.shape
    body = np.flipud(data).astype("<f4").tobytes()
    with open(path, "wb") as f:
        f.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        f.write(body)


def read_pfm(path) -> np.ndarray:
    """Read a PFM file into a float64 array (color files are rejected)."""
    with open(path, "rb") as f:
        raw = f.read()
    # header: three whitespace-separated tokens after the magic
    m = re.match(rb"(P[fF])\s+(\d+)\s+(\d+)\s+(\S+)\s", raw)
    if not m:
        raise FormatError("not a PFM file (bad header)", path, 1)
    if m.group(1) != b"Pf":
        raise FormatError("only grayscale PFM ('Pf') is supported", path, 1)
    w, h = int(m.group(2)), int(m.group(3))
    try:
        scale = float(m.group(4))
    except ValueError:
        raise FormatError(f"bad scale {m.group(4)!r}", path, 3) from None
    dtype = "<f4" if scale < 0 else ">f4"
    body = raw[m.end():]
    if len(body) < w * h * 4:
        raise FormatError(f"truncated raster: expected {w * h * 4} bytes, found {len(body)}", path)
    data = np.frombuffer(body, dtype=dtype, count=w * h).reshape(h, w)
    return np.flipud(data).astype(np.float64)


def write_png16(path, depth: np.ndarray) -> None:
    """16-bit PNG with depth * 256 (KITTI convention); 0 stays invalid."""
    from PIL import Image

    q = np.clip(np.round(np.asarray(depth, dtype=np.float64) * 256.0), 0, 65535).astype(np.uint16)
    Image.fromarray(q).save(path)


def read_png16(path) -> np.ndarray:
    from PIL import Image

    return np.asarray(Image.open(path), dtype=np.float64) / 256.0


def read_depth(path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".png":
        return read_png16(path)
    return read_pfm(path)


def write_depth(path, depth: np.ndarray, png16: bool = False) -> list[Path]:
    """Write ``depth`` as PFM, plus a 16-bit PNG sibling when requested."""
    path = Path(path)
    write_pfm(path, depth)
    written = [path]
    if png16:
        png = path.with_suffix(".png")
        write_png16(png, depth)
        written.append(png)
    return written


def read_guide(path) -> np.ndarray:
    """Guidance luminance from a PFM (values in [0, 1]) or any Pillow-readable image."""
    path = Path(path)
    if path.suffix.lower() == ".pfm":
        return read_pfm(path)
    from PIL import Image

    from .interp import luminance

    img = np.asarray(Image.open(path).convert("RGB"))
    return luminance(img)


# --- point clouds -----------------------------------------------------------

def write_points(path, cloud: PointCloud) -> None:
    cols = list(POINT_COLUMNS) + [c for c in OPTIONAL_POINT_COLUMNS if c in cloud.attributes]
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(cols)
        extra = [cloud.attributes[c] for c in cols[3:]]
        for i, p in enumerate(cloud.xyz):
            writer.writerow([repr(float(v)) for v in p] + [repr(float(a[i])) for a in extra])


def read_points(path, frame: str = "sensor") -> PointCloud:
    """Read a header-lined CSV point cloud (``x,y,z[,rcs,vx,vy]``)."""
    with open(path, newline="") as f:
        lines = f.read().splitlines()
    if not lines or not lines[0].strip():
        raise FormatError("missing header row", path, 1)
    header = [h.strip() for h in lines[0].split(",")]
    if tuple(header[:3]) != POINT_COLUMNS:
        raise FormatError(f"header must start with x,y,z, got {','.join(header)}", path, 1)
    for h in header[3:]:
        if h not in OPTIONAL_POINT_COLUMNS:
            raise FormatError(f"unknown column {h!r}", path, 1, key=h)
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) != len(header):
            raise FormatError(f"expected {len(header)} fields, found {len(fields)}", path, lineno)
        try:
            values = [float(x) for x in fields]
        except ValueError:
            raise FormatError(f"non-numeric value in {line!r}", path, lineno) from None
        if not all(np.isfinite(values)):
            raise FormatError("non-finite value", path, lineno)
        rows.append(values)
    arr = np.array(rows, dtype=np.float64).reshape(-1, len(header))
    attrs = {name: arr[:, i] for i, name in enumerate(header) if i >= 3}
    return PointCloud(arr[:, :3], frame, attrs)


# --- line-oriented key/value files --------------------------------------------

def read_keyvalue(path) -> dict[str, tuple[list[str], int]]:
    """Parse ``key value...`` lines; ``#`` starts a comment.

    Returns a mapping from key to (value tokens, line number).
    """
    out: dict[str, tuple[list[str], int]] = {}
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            tokens = line.split("#", 1)[0].split()
            if not tokens:
                continue
            key = tokens[0]
            if key in out:
                raise FormatError(f"duplicate key {key!r}", path, lineno, key=key)
            out[key] = (tokens[1:], lineno)
    return out


def _numbers(tokens, n, path, lineno, key):
    if len(tokens) != n:
        raise FormatError(f"key {key!r} expects {n} value(s), found {len(tokens)}", path, lineno, key=key)
    try:
        vals = [float(t) for t in tokens]
    except ValueError:
        raise FormatError(f"key {key!r} has a non-numeric value", path, lineno, key=key) from None
    if not all(np.isfinite(vals)):
        raise FormatError(f"key {key!r} has a non-finite value", path, lineno, key=key)
    return vals


CALIB_KEYS = ("fx", "fy", "cx", "cy", "width", "height")


def read_calibration(path) -> tuple[CameraIntrinsics, RigidTransform]:
    """Intrinsics plus the optional ``extrinsic`` (ego -> camera, 3x4 row-major)."""
    kv = read_keyvalue(path)
    for key in kv:
        if key not in CALIB_KEYS + ("extrinsic",):
            raise FormatError(f"unknown calibration key {key!r}", path, kv[key][1], key=key)
    vals = {}
    for key in CALIB_KEYS:
        if key not in kv:
            raise FormatError(f"missing calibration key {key!r}", path, key=key)
        tokens, lineno = kv[key]
        vals[key] = _numbers(tokens, 1, path, lineno, key)[0]
    for key in ("width", "height"):
        if vals[key] != int(vals[key]):
            raise FormatError(f"key {key!r} must be an integer", path, kv[key][1], key=key)
    checks = [("fx", vals["fx"] > 0, "must be positive"), ("fy", vals["fy"] > 0, "must be positive"),
              ("width", vals["width"] >= 1, "must be at least 1"), ("height", vals["height"] >= 1, "must be at least 1"),
              ("cx", 0 <= vals["cx"] < vals["width"], "must lie in [0, width)"),
              ("cy", 0 <= vals["cy"] < vals["height"], "must lie in [0, height)")]
    for key, ok, why in checks:
        if not ok:
            raise FormatError(f"key {key!r} {why}, got {vals[key]!r}", path, kv[key][1], key=key)
    intr = CameraIntrinsics(vals["fx"], vals["fy"], vals["cx"], vals["cy"],
                            int(vals["width"]), int(vals["height"]))
    extrinsic = RigidTransform()
    if "extrinsic" in kv:
        tokens, lineno = kv["extrinsic"]
        nums = _numbers(tokens, 12, path, lineno, "extrinsic")
        try:
            extrinsic = RigidTransform.from_matrix(nums)
        except ValueError as e:
            raise FormatError(f"key 'extrinsic': {e}", path, lineno, key="extrinsic") from None
    return intr, extrinsic


def _fmt(x: float) -> str:
    return repr(float(x))


def write_calibration(path, intr: CameraIntrinsics, extrinsic: RigidTransform | None = None) -> None:
    lines = [f"fx {_fmt(intr.fx)}", f"fy {_fmt(intr.fy)}", f"cx {_fmt(intr.cx)}", f"cy {_fmt(intr.cy)}",
             f"width {intr.width}", f"height {intr.height}"]
    if extrinsic is not None:
        m = extrinsic.matrix[:3].reshape(-1)
        lines.append("extrinsic " + " ".join(_fmt(v) for v in m))
    Path(path).write_text("\n".join(lines) + "\n")


def read_poses(path) -> list[RigidTransform]:
    """One ego-to-global pose per line, 12 row-major numbers."""
    poses = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            tokens = line.split("#", 1)[0].split()
            if not tokens:
                continue
            nums = _numbers(tokens, 12, path, lineno, "pose")
            try:
                poses.append(RigidTransform.from_matrix(nums))
            except ValueError as e:
                raise FormatError(str(e), path, lineno) from None
    return poses


def write_poses(path, poses: list[RigidTransform]) -> None:
    with open(path, "w") as f:
        for p in poses:
            f.write(" ".join(_fmt(v) for v in p.matrix[:3].reshape(-1)) + "\n")


def read_scene(path) -> Scene:
    """Parse ``ground <h>``, ``box <cx> <cy> <cz> <ex> <ey> <ez>`` and ``far <m>`` records."""
    ground, far = None, 80.0
    boxes = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            tokens = line.split("#", 1)[0].split()
            if not tokens:
                continue
            kind, args = tokens[0], tokens[1:]
            if kind == "ground":
                ground = _numbers(args, 1, path, lineno, kind)[0]
            elif kind == "far":
                far = _numbers(args, 1, path, lineno, kind)[0]
            elif kind == "box":
                v = _numbers(args, 6, path, lineno, kind)
                try:
                    boxes.append(Box(tuple(v[:3]), tuple(v[3:])))
                except ValueError as e:
                    raise FormatError(str(e), path, lineno, key=kind) from None
            else:
                raise FormatError(f"unknown record {kind!r}", path, lineno, key=kind)
    if ground is None:
        raise FormatError("missing 'ground' record", path, key="ground")
    try:
        return Scene(ground_height=ground, obstacles=tuple(boxes), far_plane=far)
    except ValueError as e:
        raise FormatError(str(e), path) from None


def write_scene(path, scene: Scene) -> None:
    lines = [f"ground {_fmt(scene.ground_height)}", f"far {_fmt(scene.far_plane)}"]
    for b in scene.obstacles:
        lines.append("box " + " ".join(_fmt(v) for v in tuple(b.center) + tuple(b.extent)))
    Path(path).write_text("\n".join(lines) + "\n")
