"""On-disk synthetic datasets: one directory per sequence.

Layout::

    scene.txt  calib.txt  poses.txt  timestamps.txt  manifest.json
    radar/000000.csv  gt/000000.pfm  lidar/000000.pfm  guide/000000.pfm  ...

Radar CSV points are stored in the ego frame; ``calib.txt`` carries the
ego-to-camera extrinsic.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io
from .geometry import CameraIntrinsics, RigidTransform
from .radar import RadarFrame
from .synth import Scene, SequenceConfig, generate_frame

THREADS_ENV = "RADARDEPTH_THREADS"


def thread_count() -> int:
    """Worker threads for frame-parallel loops; ``RADARDEPTH_THREADS`` overrides the default of 1."""
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return 1
    if raw.lower() == "max":
        return os.cpu_count() or 1
    n = int(raw)
    if n < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer or 'max'")
    return n


def parallel_map(fn, items, threads: int | None = None) -> list:
    """Order-preserving map, threaded when more than one worker is requested."""
    threads = threads or thread_count()
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def frame_name(i: int) -> str:
    return f"{i:06d}"


def write_dataset(out_dir, scene: Scene, intr: CameraIntrinsics, cfg: SequenceConfig,
                  threads: int | None = None) -> list[Path]:
    """Generate ``cfg.frames`` frames and write them; returns the written paths."""
    out = Path(out_dir)
    for sub in ("radar", "gt", "lidar", "guide"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    io.write_scene(out / "scene.txt", scene)
    io.write_calibration(out / "calib.txt", intr, RigidTransform())

    def one(i):
        f = generate_frame(scene, intr, cfg, i)
        name = frame_name(i)
        io.write_points(out / "radar" / f"{name}.csv", f.radar.points)
        io.write_pfm(out / "gt" / f"{name}.pfm", f.gt)
        io.write_pfm(out / "lidar" / f"{name}.pfm", f.lidar)
        io.write_pfm(out / "guide" / f"{name}.pfm", f.guide)
        return f.pose, f.timestamp

    results = parallel_map(one, range(cfg.frames), threads)
    io.write_poses(out / "poses.txt", [p for p, _ in results])
    with open(out / "timestamps.txt", "w") as fh:
        fh.writelines(f"{ts!r}\n" for _, ts in results)
    return sorted(p for p in out.rglob("*") if p.is_file())


@dataclass
class Dataset:
    root: Path
    scene: Scene | None
    intr: CameraIntrinsics
    camera_from_ego: RigidTransform
    poses: list[RigidTransform]
    timestamps: list[float]

    def __len__(self) -> int:
        return len(self.poses)

    def radar_frame(self, i: int) -> RadarFrame:
        pts = io.read_points(self.root / "radar" / f"{frame_name(i)}.csv", frame="ego")
        return RadarFrame(pts, self.timestamps[i], RigidTransform(), self.poses[i])

    def radar_frames(self, last: int, count: int) -> list[RadarFrame]:
        """Up to ``count`` frames ending at ``last`` (fewer at the sequence start)."""
        return [self.radar_frame(j) for j in range(max(0, last - count + 1), last + 1)]

    def depth(self, kind: str, i: int) -> np.ndarray:
        return io.read_pfm(self.root / kind / f"{frame_name(i)}.pfm")


def load_dataset(root, require_scene: bool = False) -> Dataset:
    """Open a frame directory: ``calib.txt`` and ``poses.txt`` are mandatory."""
    root = Path(root)
    if not root.is_dir():
        raise io.FormatError("dataset directory does not exist", root)
    intr, extrinsic = io.read_calibration(root / "calib.txt")
    poses = io.read_poses(root / "poses.txt")
    ts_path = root / "timestamps.txt"
    if ts_path.exists():
        timestamps = []
        for lineno, line in enumerate(ts_path.read_text().splitlines(), start=1):
            if line.strip():
                try:
                    timestamps.append(float(line))
                except ValueError:
                    raise io.FormatError(f"bad timestamp {line!r}", ts_path, lineno) from None
        if len(timestamps) != len(poses):
            raise io.FormatError(f"{len(timestamps)} timestamps for {len(poses)} poses", ts_path)
    else:
        timestamps = [float(i) for i in range(len(poses))]
    scene_path = root / "scene.txt"
    scene = io.read_scene(scene_path) if scene_path.exists() else None
    if require_scene and scene is None:
        raise io.FormatError("dataset has no scene.txt", scene_path)
    return Dataset(root, scene, intr, extrinsic, poses, timestamps)
