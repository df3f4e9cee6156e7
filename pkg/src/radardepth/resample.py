"""Cropping and block downsampling of depth rasters."""

from __future__ import annotations

import numpy as np


def crop_depth(depth: np.ndarray, top: int, left: int, height: int, width: int) -> np.ndarray:
    h, w = depth.shape
    if top < 0 or left < 0 or height < 1 or width < 1 or top + height > h or left + width > w:
        raise ValueError(f"crop ({top}, {left}, {height}, {width}) does not fit a {h}x{w} map")
    return depth[top:top + height, left:left + width].copy()


def downsample_depth(depth: np.ndarray, factor: int) -> np.ndarray:
    """Shrink by an integer factor keeping the nearest valid depth of each block.

    Trailing rows and columns that do not fill a whole block are dropped.
    """
    if factor < 1:
        raise ValueError("downsampling factor must be at least 1")
    if factor == 1:
        return depth.copy()
    h, w = depth.shape[0] // factor, depth.shape[1] // factor
    if h == 0 or w == 0:
        raise ValueError(f"factor {factor} leaves nothing of a {depth.shape} map")
    blocks = depth[:h * factor, :w * factor].reshape(h, factor, w, factor)
    blocks = np.where(blocks > 0, blocks, np.inf).min(axis=(1, 3))
    return np.where(np.isinf(blocks), 0.0, blocks)
