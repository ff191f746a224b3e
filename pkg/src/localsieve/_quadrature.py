"""Shell quadrature in log-radius and the trend tests built on it.

Integrals over annuli ``{2^k < |x| < 2^(k+1)}`` are computed in polar form with
Gauss-Legendre nodes in ``s = log(rho)``, where ``dx = rho^n ds dsigma``.  The
angular rule pairs every direction with its antipode so that odd integrands
cancel pairwise, in exact arithmetic and in floating point.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

LOG2 = math.log(2.0)


def sphere_area(dim: int) -> float:
    """Surface measure of the unit sphere ``S^(dim-1)`` (counting measure 2 for dim 1)."""
    return 2.0 * math.pi ** (dim / 2) / math.gamma(dim / 2)


def antipodal_directions(dim: int, count: int = 64):
    """Unit directions and weights, arranged as ``[D, -D]``.

    Returns ``(dirs, weights)`` with ``dirs`` of shape ``(2m, dim)`` where the
    second half is the exact negation of the first.  Weights sum to the sphere
    area.
    """
    if dim == 1:
        half = np.array([[1.0]])
    else:
        m = max(count // 2, 1)
        theta = (np.arange(m) + 0.5) * math.pi / m
        half = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    dirs = np.concatenate([half, -half], axis=0)
    weights = np.full(len(dirs), sphere_area(dim) / len(dirs))
    return dirs, weights


def random_directions(rng: np.random.Generator, dim: int, size: int) -> np.ndarray:
    if dim == 1:
        return rng.choice([-1.0, 1.0], size=(size, 1))
    v = rng.standard_normal((size, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def log_shell_nodes(k_lo: int, k_hi: int, order: int = 12):
    """Gauss-Legendre nodes for the dyadic shells ``k_lo <= k < k_hi``.

    Returns ``(rho, w)`` of shape ``(k_hi - k_lo, order)``; ``w`` are weights in
    ``log(rho)``.
    """
    t, wt = np.polynomial.legendre.leggauss(order)
    k = np.arange(k_lo, k_hi)[:, None]
    s = (k + 0.5 + 0.5 * t[None, :]) * LOG2
    return np.exp(s), np.broadcast_to(0.5 * LOG2 * wt, s.shape).copy()


def shell_integrals(
    func: Callable[[np.ndarray], np.ndarray],
    dim: int,
    k_lo: int,
    k_hi: int,
    order: int = 12,
    n_dirs: int = 64,
) -> np.ndarray:
    """``int_{2^k < |x| < 2^(k+1)} func(x) dx`` for each ``k`` in ``[k_lo, k_hi)``.

    Values at ``x`` and ``-x`` are added before any other summation.
    """
    rho, w = log_shell_nodes(k_lo, k_hi, order)
    dirs, dw = antipodal_directions(dim, n_dirs)
    m = len(dirs) // 2
    pts = rho[..., None, None] * dirs[None, None, :, :]
    vals = np.asarray(func(pts), dtype=float)
    paired = vals[..., :m] + vals[..., m:]
    ang = paired @ dw[:m]
    return (ang * rho**dim * w).sum(axis=1)


def geometric_decay(increments, factor: float = 0.9, last: int = 4, floor: float = 1e-12) -> bool:
    """Trend test for convergence of a series of nonnegative shell increments.

    Each of the final ``last`` increments must be at most ``factor`` times its
    predecessor, or below the absolute ``floor``.
    """
    d = np.abs(np.asarray(increments, dtype=float))
    if d.size < last + 1 or not np.all(np.isfinite(d)):
        return False
    for i in range(d.size - last, d.size):
        if d[i] > floor and d[i] > factor * d[i - 1]:
            return False
    return True


def relative_change(a: float, b: float, floor: float = 1e-12) -> float:
    """``|a - b| / max(|a|, |b|)``, zero when both are below ``floor``."""
    scale = max(abs(a), abs(b))
    if scale <= floor:
        return 0.0
    return abs(a - b) / scale
