"""Intrinsic radar error experiment over a dataset, report tables and figures."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset, parallel_map
from .geometry import RigidTransform
from .interp import InterpolationConfig, interpolate_dense
from .metrics import EvalReport, count_points
from .radar import (UP, EmptyOverlapError, FilterConfig, HeightExtensionConfig, accumulate_frames,
                    extend_height, filter_by_ratio, intrinsic_error, render_sparse_depth)

logger = logging.getLogger(__name__)

TABLE1_COLUMNS = ("modality", "threshold", "delta1", "rmse", "points", "retained_pct")
TABLE2_COLUMNS = ("method", "delta1", "rmse", "abs_rel")


@dataclass
class Table1Config:
    accumulate: int = 5
    extension: HeightExtensionConfig = field(default_factory=HeightExtensionConfig)
    filter: FilterConfig = field(default_factory=FilterConfig)
    interpolation: InterpolationConfig = field(default_factory=InterpolationConfig)


@dataclass(frozen=True)
class Table1Row:
    modality: str
    threshold: str
    delta1: float
    rmse: float
    points: float
    retained_pct: float
    frames: int = 0  # frames that contributed delta1/rmse

    def cells(self) -> list[str]:
        return [self.modality, self.threshold, f"{self.delta1:.3f}", f"{self.rmse:.3f}",
                f"{self.points:.1f}", f"{self.retained_pct:.1f}"]


def ground_in_camera(ground_height: float, camera_from_ego: RigidTransform) -> tuple[np.ndarray, float]:
    """Up vector and ground offset in the camera frame, for an ego frame with +y down."""
    up = camera_from_ego.rotation @ UP
    return up, float(ground_height - up @ camera_from_ego.translation)


def frame_errors(ds: Dataset, i: int, cfg: Table1Config, ground_height: float) -> dict:
    """Per-frame intrinsic errors for the four Table 1 rows."""
    pc = accumulate_frames(ds.radar_frames(i, cfg.accumulate), ds.camera_from_ego)
    reference = interpolate_dense(ds.depth("lidar", i), ds.depth("guide", i), cfg.interpolation)
    up, ground_y = ground_in_camera(ground_height, ds.camera_from_ego)
    maps = {
        "raw": render_sparse_depth(pc, ds.intr),
        "extended": extend_height(pc, ds.intr, cfg.extension, ground_y, up),
    }
    out = {}
    for name, depth in maps.items():
        n = count_points(depth)
        out[name] = _errors(depth, reference, n)
        out[name + "+filter"] = _errors(filter_by_ratio(depth, reference, cfg.filter), reference, n)
    return out


def _errors(depth, reference, baseline: int) -> tuple[float, float, int, float]:
    """(delta1, rmse, points, retained fraction); NaN where undefined."""
    n = count_points(depth)
    retained = n / baseline if baseline else np.nan
    try:
        rep = intrinsic_error(depth, reference)
    except EmptyOverlapError:
        return np.nan, np.nan, n, retained
    return rep.delta1, rep.rmse, n, retained


def run_table1(ds: Dataset, cfg: Table1Config | None = None, threads: int | None = None) -> list[Table1Row]:
    """Average intrinsic radar error over every frame of a dataset.

    Each frame accumulates itself with up to ``cfg.accumulate - 1`` previous
    frames and is compared with the dense depth interpolated from that
    frame's lidar. Point counts average over all frames; delta1 and RMSE over
    frames with at least one radar pixel; the retained percentage is the mean
    per-frame ratio of filtered to unfiltered points.
    """
    cfg = cfg or Table1Config()
    if len(ds) == 0:
        raise ValueError("dataset has no frames")
    if ds.scene is None:
        raise ValueError("dataset needs scene.txt for the ground height")
    per_frame = parallel_map(lambda i: frame_errors(ds, i, cfg, ds.scene.ground_height), range(len(ds)), threads)

    labels = [("raw", "radar1", "-"), ("raw+filter", "radar1", "delta2"),
              ("extended", "radar2", "-"), ("extended+filter", "radar2", "delta2")]
    rows = []
    for key, modality, threshold in labels:
        vals = np.array([f[key] for f in per_frame], dtype=np.float64)
        ok = ~np.isnan(vals[:, 1])
        ret = vals[:, 3]
        rows.append(Table1Row(
            modality=modality, threshold=threshold,
            delta1=float(np.mean(vals[ok, 0])) if ok.any() else float("nan"),
            rmse=float(np.mean(vals[ok, 1])) if ok.any() else float("nan"),
            points=float(np.mean(vals[:, 2])),
            retained_pct=float(100.0 * np.mean(ret[~np.isnan(ret)])) if (~np.isnan(ret)).any() else float("nan"),
            frames=int(ok.sum()),
        ))
    return rows


def format_table(header, rows: list[list[str]]) -> str:
    widths = [max(len(str(h)), *(len(r[i]) for r in rows)) if rows else len(str(h))
              for i, h in enumerate(header)]
    lines = ["  ".join(str(h).ljust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in rows]
    return "\n".join(lines)


def format_table1(rows: list[Table1Row]) -> str:
    return format_table(("modality", "threshold", "delta1", "RMSE", "#points", "(%)"), [r.cells() for r in rows])


def table2_cells(method: str, rep: EvalReport) -> list[str]:
    return [method, f"{rep.delta1:.3f}", f"{rep.rmse:.3f}", f"{rep.abs_rel:.3f}"]


def write_table1_csv(path, rows: list[Table1Row]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(TABLE1_COLUMNS)
        for r in rows:
            w.writerow(r.cells())


def write_table2_csv(path, rows: list[tuple[str, EvalReport]]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(TABLE2_COLUMNS + ("delta2", "delta3", "valid_pixel_count"))
        for method, rep in rows:
            w.writerow(table2_cells(method, rep) + [f"{rep.delta2:.3f}", f"{rep.delta3:.3f}",
                                                    str(rep.valid_pixel_count)])


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path) -> None:
    # no software/date stamps so repeated runs give identical bytes
    fig.savefig(path, dpi=100, metadata={"Software": None})


def plot_table1(path, rows: list[Table1Row]) -> None:
    """Bar chart of RMSE and point count per Table 1 row."""
    plt = _pyplot()
    labels = [f"{r.modality}\n{r.threshold}" for r in rows]
    colors = ["#4c72b0", "#8fa9d6", "#dd8452", "#efb993"][:len(rows)]
    fig, (ax_rmse, ax_pts) = plt.subplots(1, 2, figsize=(8, 3.2))
    x = np.arange(len(rows))
    ax_rmse.bar(x, [r.rmse for r in rows], color=colors)
    ax_rmse.set_ylabel("RMSE [m]")
    ax_pts.bar(x, [r.points for r in rows], color=colors)
    ax_pts.set_ylabel("#points")
    ax_pts.set_yscale("log")
    for ax in (ax_rmse, ax_pts):
        ax.set_xticks(x)
        ax.set_xticklabels(labels, fontsize=8)
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)


def plot_depth(path, depth: np.ndarray, title: str = "", max_depth: float = 80.0) -> None:
    """Depth map preview; invalid pixels are left white."""
    plt = _pyplot()
    h, w = depth.shape
    fig, ax = plt.subplots(figsize=(max(3.0, w / 50), max(2.0, h / 50)))
    masked = np.ma.masked_where(depth <= 0, depth)
    im = ax.imshow(masked, cmap="turbo", vmin=0.0, vmax=max_depth, interpolation="nearest")
    ax.set_axis_off()
    if title:
        ax.set_title(title, fontsize=9)
    fig.colorbar(im, ax=ax, fraction=0.03, label="depth [m]")
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)
