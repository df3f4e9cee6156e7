"""Masked depth evaluation metrics (threshold accuracy, RMSE, AbsRel)."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .geometry import check_depth_map, check_same_shape

DEFAULT_DEPTH_RANGE = (1.0, 80.0)


class EmptyMaskError(ValueError):
    """Raised when no pixel survives the evaluation mask."""


@dataclass(frozen=True)
class EvalReport:
    delta1: float
    delta2: float
    delta3: float
    rmse: float
    abs_rel: float
    valid_pixel_count: int

    def as_dict(self) -> dict:
        return asdict(self)

    def row(self) -> str:
        """The three headline columns formatted like a results table."""
        return f"{self.delta1:.3f}  {self.rmse:.3f}  {self.abs_rel:.3f}"


def evaluation_mask(gt: np.ndarray, depth_range=DEFAULT_DEPTH_RANGE) -> np.ndarray:
    lo, hi = depth_range
    return (gt > 0) & (gt >= lo) & (gt <= hi)


def threshold_ratio(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """max(pred/gt, gt/pred); a zero on either side gives +inf."""
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.maximum(pred / gt, gt / pred)
    return np.where(np.isnan(ratio), np.inf, ratio)


def evaluate(pred, gt, depth_range=DEFAULT_DEPTH_RANGE) -> EvalReport:
    """Compare a predicted depth map against ground truth.

    Only pixels where ``gt`` is valid and inside ``depth_range`` (inclusive)
    count. Predictions are used as-is, without clamping. A delta threshold is
    met only when the ratio is strictly below ``1.25 ** i``.

    Raises:
        EmptyMaskError: if no ground-truth pixel passes the mask.
    """
    pred = check_depth_map(pred, "prediction")
    gt = check_depth_map(gt, "ground truth")
    check_same_shape(pred, gt, ("prediction", "ground truth"))
    lo, hi = depth_range
    if not lo < hi:
        raise ValueError(f"depth range must satisfy min < max, got {depth_range}")

    mask = evaluation_mask(gt, depth_range)
    n = int(mask.sum())
    if n == 0:
        raise EmptyMaskError("no ground-truth pixels inside the evaluation range")
    p = pred[mask]
    g = gt[mask]
    ratio = threshold_ratio(p, g)
    diff = p - g
    return EvalReport(
        delta1=float(np.mean(ratio < 1.25)),
        delta2=float(np.mean(ratio < 1.25 ** 2)),
        delta3=float(np.mean(ratio < 1.25 ** 3)),
        rmse=float(np.sqrt(np.mean(diff * diff))),
        abs_rel=float(np.mean(np.abs(diff) / g)),
        valid_pixel_count=n,
    )


def count_points(depth) -> int:
    """Number of pixels holding a measurement."""
    return int(np.count_nonzero(np.asarray(depth) > 0))
