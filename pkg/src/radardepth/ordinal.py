"""Spacing-increasing discretization and the ordinal regression loss.

Depth in ``[alpha, beta]`` is split into ``K`` log-uniform bins. A pixel with
bin label ``l`` is encoded as ``K`` binary events "depth exceeds bin k",
true for ``k < l``. Predictions are per-bin probabilities ``P_k`` of those
events, either given directly or produced from score pairs ``(s_k0, s_k1)``
through a two-way softmax.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_CLAMP_EPS = 1e-7


class EmptyInputError(ValueError):
    """Raised when a reduction would run over zero valid pixels."""


@dataclass(frozen=True)
class SidConfig:
    alpha: float = 1.0
    beta: float = 80.0
    K: int = 80

    def __post_init__(self):
        if not (0 < self.alpha < self.beta):
            raise ValueError(f"need 0 < alpha < beta, got alpha={self.alpha}, beta={self.beta}")
        if int(self.K) != self.K or self.K < 1:
            raise ValueError(f"bin count must be a positive integer, got {self.K}")


def sid_thresholds(cfg: SidConfig) -> np.ndarray:
    """Return the K+1 bin edges ``t_i = exp(ln a + i (ln b - ln a) / K)``."""
    i = np.arange(cfg.K + 1, dtype=np.float64)
    la, lb = np.log(cfg.alpha), np.log(cfg.beta)
    t = np.exp(la + i * (lb - la) / cfg.K)
    # pin the endpoints; exp(log(x)) is not always exact
    t[0], t[-1] = cfg.alpha, cfg.beta
    return t


def depth_to_label(depth, cfg: SidConfig) -> tuple[np.ndarray, np.ndarray]:
    """Encode depths into bin labels.

    Bins are left-closed, ``[t_i, t_{i+1})``, except that ``beta`` falls in the
    top bin. Valid depths are clamped into ``[alpha, beta]`` first.

    Returns:
        ``(labels, mask)``: integer labels (0 where invalid) and the boolean
        validity mask, both shaped like ``depth``.
    """
    depth = np.asarray(depth, dtype=np.float64)
    mask = depth > 0
    t = sid_thresholds(cfg)
    d = np.clip(np.where(mask, depth, cfg.alpha), cfg.alpha, cfg.beta)
    labels = np.searchsorted(t, d, side="right") - 1
    labels = np.clip(labels, 0, cfg.K - 1)
    return np.where(mask, labels, 0).astype(np.int64), mask


def ideal_probs(labels, K: int) -> np.ndarray:
    """Hard probability vectors: 1 for bins below the label, 0 elsewhere."""
    labels = np.asarray(labels)
    return (np.arange(K) < labels[..., None]).astype(np.float64)


def decode_probs(probs, cfg: SidConfig) -> np.ndarray:
    """Decode ordinal probabilities (last axis of length K) to depth.

    The label estimate is the number of bins with ``P_k >= 0.5``; the depth is
    the arithmetic midpoint of that bin, which collapses to ``beta`` when all
    K bins are confident.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape[-1] != cfg.K:
        raise ValueError(f"expected {cfg.K} probabilities per pixel, got {probs.shape[-1]}")
    t = sid_thresholds(cfg)
    count = np.sum(probs >= 0.5, axis=-1)
    upper = np.minimum(count + 1, cfg.K)
    return (t[count] + t[upper]) / 2.0


def _flatten(labels, mask, K):
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if mask is None:
        mask = np.ones(labels.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool).reshape(-1)
    if np.any(labels[mask] < 0) or np.any(labels[mask] >= K):
        raise ValueError(f"labels must lie in [0, {K})")
    return labels, mask


def ordinal_loss(probs, labels, mask=None, clamp_eps: float = DEFAULT_CLAMP_EPS) -> float:
    """Mean ordinal regression loss over valid pixels.

    Per pixel ``L = -sum_{k<l} ln P_k - sum_{k>=l} ln(1 - P_k)``, with the
    probabilities clamped into ``[clamp_eps, 1 - clamp_eps]``.

    Args:
        probs: array of shape (..., K).
        labels: integer labels shaped like ``probs[..., 0]``.
        mask: optional boolean validity mask of the same shape as ``labels``.
        clamp_eps: probability floor applied before taking logs.
    """
    probs = np.asarray(probs, dtype=np.float64)
    K = probs.shape[-1]
    p = probs.reshape(-1, K)
    labels, mask = _flatten(labels, mask, K)
    if len(labels) != len(p):
        raise ValueError("labels and probabilities disagree on the pixel count")
    n = int(mask.sum())
    if n == 0:
        raise EmptyInputError("ordinal loss needs at least one valid pixel")
    p = np.clip(p[mask], clamp_eps, 1.0 - clamp_eps)
    target = np.arange(K) < labels[mask][:, None]
    per_pixel = -np.sum(np.where(target, np.log(p), np.log1p(-p)), axis=1)
    return float(np.sum(per_pixel) / n)


def scores_to_probs(scores) -> np.ndarray:
    """Two-way softmax over the last axis of (..., K, 2) scores; returns P(label > k)."""
    scores = np.asarray(scores, dtype=np.float64)
    return 1.0 / (1.0 + np.exp(scores[..., 0] - scores[..., 1]))


def _log_probs(scores):
    # log P and log(1 - P) computed stably from the score difference
    diff = scores[..., 1] - scores[..., 0]
    log_p = -np.logaddexp(0.0, -diff)
    log_q = -np.logaddexp(0.0, diff)
    return log_p, log_q


def ordinal_loss_from_scores(scores, labels, mask=None) -> float:
    """Mean ordinal loss with probabilities from score pairs (no clamping needed).

    All-masked input gives 0.0 so that the gradient of an empty batch is defined.
    """
    scores = np.asarray(scores, dtype=np.float64)
    K = scores.shape[-2]
    s = scores.reshape(-1, K, 2)
    labels, mask = _flatten(labels, mask, K)
    n = int(mask.sum())
    if n == 0:
        return 0.0
    log_p, log_q = _log_probs(s[mask])
    target = np.arange(K) < labels[mask][:, None]
    return float(-np.sum(np.where(target, log_p, log_q)) / n)


def ordinal_loss_grad(scores, labels, mask=None) -> np.ndarray:
    """Analytic gradient of :func:`ordinal_loss_from_scores` w.r.t. the scores.

    For each bin, ``dL/ds_k1 = (P_k - y_k) / n`` and ``dL/ds_k0 = -(P_k - y_k) / n``
    where ``y_k`` is the binary target and ``n`` the number of valid pixels.
    Masked pixels receive zero gradient.
    """
    scores = np.asarray(scores, dtype=np.float64)
    K = scores.shape[-2]
    s = scores.reshape(-1, K, 2)
    labels, mask = _flatten(labels, mask, K)
    grad = np.zeros_like(s)
    n = int(mask.sum())
    if n == 0:
        return grad.reshape(scores.shape)
    p = scores_to_probs(s[mask])
    target = (np.arange(K) < labels[mask][:, None]).astype(np.float64)
    g1 = (p - target) / n
    grad[mask, :, 1] = g1
    grad[mask, :, 0] = -g1
    return grad.reshape(scores.shape)
