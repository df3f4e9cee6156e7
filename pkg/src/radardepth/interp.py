"""Guided dense depth interpolation by colorization-style optimization.

Unknown pixels are chosen so that each one is close to the weighted mean of
its neighbours, with weights that fall off across luminance edges of a
guidance image:

    minimize  sum_{r free} (D(r) - sum_{s in N(r)} w_rs D(s))^2
    subject to D(r) = seed(r) at seed pixels

Seeds are eliminated from the unknowns, which leaves a least-squares problem
``min ||A x - b||`` over the free pixels. Its normal equations are symmetric
positive definite and solved with conjugate gradients, right-preconditioned
by an incomplete LU factorization of the free-pixel system (or plain Jacobi).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import check_depth_map, check_same_shape

logger = logging.getLogger(__name__)

_OFFSETS = {
    4: [(-1, 0), (1, 0), (0, -1), (0, 1)],
    8: [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)],
}


class ConvergenceError(RuntimeError):
    def __init__(self, residual: float, iterations: int):
        super().__init__(f"solver did not converge after {iterations} iterations "
                         f"(relative residual {residual:.3e})")
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class InterpolationConfig:
    neighborhood: int = 8
    epsilon_var: float = 1e-4
    solver_tolerance: float = 1e-10
    max_iterations: int | None = None  # None means 10 x pixel count
    preconditioner: str = "ilu"        # "ilu" or "jacobi"

    def __post_init__(self):
        if self.neighborhood not in _OFFSETS:
            raise ValueError(f"neighborhood must be 4 or 8, got {self.neighborhood}")
        if not self.solver_tolerance > 0:
            raise ValueError("solver_tolerance must be positive")
        if not self.epsilon_var > 0:
            raise ValueError("epsilon_var must be positive")
        if self.preconditioner not in ("ilu", "jacobi"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass
class SolveInfo:
    iterations: int
    residual: float


def luminance(rgb) -> np.ndarray:
    """Rec. 601 luma of an (H, W, 3) image; uint8 input is rescaled to [0, 1]."""
    rgb = np.asarray(rgb)
    scale = 255.0 if rgb.dtype == np.uint8 else 1.0
    rgb = rgb.astype(np.float64) / scale
    return rgb[..., 0] * 0.299 + rgb[..., 1] * 0.587 + rgb[..., 2] * 0.114


def check_guide(guide, shape) -> np.ndarray:
    g = np.asarray(guide, dtype=np.float64)
    if g.shape != tuple(shape):
        raise ValueError(f"guidance image has shape {g.shape}, expected {tuple(shape)}")
    if not np.all(np.isfinite(g)) or g.min(initial=0.0) < 0 or g.max(initial=0.0) > 1:
        raise ValueError("guidance luminance must be finite and within [0, 1]")
    return g


def affinity_matrix(guide: np.ndarray, neighborhood: int = 8, epsilon_var: float = 1e-4) -> sp.csr_matrix:
    """Row-normalized neighbour weights ``W`` as an (n, n) sparse matrix.

    ``w_rs`` is proportional to ``exp(-(Y_r - Y_s)^2 / (2 var_r))``, where
    ``var_r`` is the luminance variance over r and its in-image neighbours,
    floored at ``epsilon_var``.
    """
    h, w = guide.shape
    n = h * w
    offsets = _OFFSETS[neighborhood]
    idx = np.arange(n).reshape(h, w)
    padded = np.pad(guide, 1, constant_values=np.nan)

    # window statistics over the center plus valid neighbours
    shifted = [padded[1 + dy:1 + dy + h, 1 + dx:1 + dx + w] for dy, dx in offsets]
    stack = np.stack([guide] + shifted)
    valid = ~np.isnan(stack)
    count = valid.sum(axis=0)
    vals = np.where(valid, stack, 0.0)
    mean = vals.sum(axis=0) / count
    var = np.where(valid, (vals - mean) ** 2, 0.0).sum(axis=0) / count
    var = np.maximum(var, epsilon_var)

    rows, cols, data = [], [], []
    for (dy, dx), nb in zip(offsets, shifted):
        ok = ~np.isnan(nb)
        r = idx[ok]
        s = idx[ok] + dy * w + dx
        wt = np.exp(-((guide[ok] - nb[ok]) ** 2) / (2.0 * var[ok]))
        rows.append(r)
        cols.append(s)
        data.append(wt)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    data = np.concatenate(data)
    rowsum = np.bincount(rows, weights=data, minlength=n)
    data = data / rowsum[rows]
    return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


def _system(seeds: np.ndarray, guide: np.ndarray, cfg: InterpolationConfig):
    W = affinity_matrix(guide, cfg.neighborhood, cfg.epsilon_var)
    A = (sp.identity(W.shape[0], format="csr") - W).tocsr()
    known = seeds.reshape(-1) > 0
    return A, known


def conjugate_gradient(matvec, b: np.ndarray, x0: np.ndarray, precond, tol: float,
                       max_iterations: int) -> tuple[np.ndarray, SolveInfo]:
    """Preconditioned conjugate gradients for an SPD operator.

    ``precond`` applies an SPD approximation of the inverse operator. Stops
    when ``||b - A x|| <= tol * ||b||``.

    Raises:
        ConvergenceError: if the tolerance is not met within ``max_iterations``.
    """
    x = x0.copy()
    r = b - matvec(x)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        bnorm = 1.0
    rel = np.linalg.norm(r) / bnorm
    if rel <= tol:
        return x, SolveInfo(0, float(rel))
    z = precond(r)
    p = z.copy()
    rz = r @ z
    for it in range(1, max_iterations + 1):
        Ap = matvec(p)
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        rel = np.linalg.norm(r) / bnorm
        if rel <= tol:
            return x, SolveInfo(it, float(rel))
        z = precond(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(float(rel), max_iterations)


def _solve_free(rows: sp.csr_matrix, b: np.ndarray, x0: np.ndarray, cfg: InterpolationConfig):
    """Minimize ||rows x - b|| through CG on the normal equations."""
    AT = rows.T.tocsr()
    ilu = None
    if cfg.preconditioner == "ilu":
        try:
            ilu = spla.spilu(rows.tocsc(), drop_tol=1e-3, fill_factor=10)
        except RuntimeError:
            logger.warning("incomplete LU failed; falling back to Jacobi preconditioning")
    if ilu is not None:
        # right preconditioning: CG on (A P)^T (A P) y = (A P)^T b, x = P y,
        # with P the incomplete-LU inverse; the operator stays SPD
        def matvec(y):
            return ilu.solve(AT @ (rows @ ilu.solve(y)), trans="T")

        rhs = ilu.solve(AT @ b, trans="T")
        y, info = conjugate_gradient(matvec, rhs, np.zeros_like(x0), lambda v: v,
                                     cfg.solver_tolerance, cfg.max_iterations)
        x = ilu.solve(y)
    else:
        diag = np.asarray(rows.multiply(rows).sum(axis=0)).reshape(-1)
        inv_diag = 1.0 / diag
        x, info = conjugate_gradient(lambda v: AT @ (rows @ v), AT @ b, x0, lambda v: inv_diag * v,
                                     cfg.solver_tolerance, cfg.max_iterations)
    # report the residual of the unpreconditioned normal equations
    atb = np.linalg.norm(AT @ b)
    info.residual = float(np.linalg.norm(AT @ (b - rows @ x)) / (atb if atb > 0 else 1.0))
    return x, info


def interpolate_dense(seeds, guide, cfg: InterpolationConfig | None = None,
                      return_info: bool = False):
    """Fill every pixel of a sparse depth map guided by a luminance image.

    Args:
        seeds: sparse (H, W) depth map; pixels > 0 are hard constraints.
        guide: (H, W) luminance in [0, 1].
        cfg: solver and weighting options.
        return_info: also return a :class:`SolveInfo`.

    Returns:
        Dense (H, W) depth map equal to ``seeds`` at every seed pixel.

    Raises:
        ValueError: no seed pixels or mismatched shapes.
        ConvergenceError: the iterative solve did not reach the tolerance.
    """
    cfg = cfg or InterpolationConfig()
    seeds = check_depth_map(seeds, "seed depth")
    guide = check_guide(guide, seeds.shape)
    A, known = _system(seeds, guide, cfg)
    if not known.any():
        raise ValueError("interpolation needs at least one seed pixel")
    out = seeds.reshape(-1).copy()
    free = ~known
    if not free.any():
        info = SolveInfo(0, 0.0)
        return (seeds.copy(), info) if return_info else seeds.copy()
    if cfg.max_iterations is None:
        cfg = replace(cfg, max_iterations=10 * seeds.size)

    rows = A[free][:, free].tocsr()      # objective rows: free pixels only
    b = -(A[free][:, known] @ out[known])
    x0 = np.full(int(free.sum()), float(np.mean(out[known])))
    x, info = _solve_free(rows, b, x0, cfg)
    out[free] = x
    logger.debug("interpolation converged in %d iterations (residual %.2e)", info.iterations, info.residual)
    dense = out.reshape(seeds.shape)
    return (dense, info) if return_info else dense


def system_residual(seeds, guide, candidate, cfg: InterpolationConfig | None = None) -> float:
    """Objective value of ``candidate``; rows at seed pixels are excluded."""
    cfg = cfg or InterpolationConfig()
    seeds = check_depth_map(seeds, "seed depth")
    guide = check_guide(guide, seeds.shape)
    candidate = np.asarray(candidate, dtype=np.float64)
    check_same_shape(seeds, candidate, ("seed depth", "candidate"))
    A, known = _system(seeds, guide, cfg)
    e = (A @ candidate.reshape(-1))[~known]
    return float(e @ e)


def seed_mismatch(seeds, candidate) -> float:
    """Largest absolute deviation of ``candidate`` from the seed values."""
    seeds = np.asarray(seeds, dtype=np.float64)
    candidate = np.asarray(candidate, dtype=np.float64)
    check_same_shape(seeds, candidate, ("seed depth", "candidate"))
    known = seeds > 0
    if not known.any():
        return 0.0
    return float(np.max(np.abs(candidate[known] - seeds[known])))
