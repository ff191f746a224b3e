"""Truncated singular integrals, the two localizations and the error kernel.

Every spatial operator here is a discrete truncated convolution

    (T f)(x_i) = h^n * sum_{|x_i - x_j| >= eps} K(x_i - x_j) f(x_j),

with ``f`` extended by zero outside the box.  The kernel is sampled once on
the lattice of grid differences and the sum is carried out as a linear
convolution (direct summation in 1D, FFT convolution in 2D).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import signal

from ._quadrature import geometric_decay
from .exceptions import GridMismatchError
from .grid import (
    Grid,
    GridFunction,
    check_support_margin,
    fourier_multiply,
    frequencies,
    integrate,
)
from .kernels import ConvolutionKernel, Localizer, localize

__all__ = [
    "TruncatedOperator",
    "ErrorKernelResult",
    "difference_lattice",
    "sample_on_differences",
    "apply_pv",
    "apply_localized",
    "mollify",
    "apply_fourier_localized",
    "adjoint_apply",
    "error_kernel_star",
    "local_riesz_goldberg",
    "hilbert_multiplier",
    "riesz_multiplier",
    "dyadic_eps_list",
]

_DIRECT_2D_MAX_N = 32


def _check_eps(grid: Grid, eps: Optional[float]) -> float:
    h = grid.spacing
    eps = h if eps is None else float(eps)
    if eps < 0.5 * h * (1 - 1e-12):
        raise ValueError(f"truncation radius {eps:g} is below half the grid spacing {h / 2:g}")
    return eps


def difference_lattice(grid: Grid) -> np.ndarray:
    """Points ``m h`` for ``|m_k| <= N - 1``, shape ``(2N-1,)*dim + (dim,)``."""
    m = np.arange(-(grid.n - 1), grid.n) * grid.spacing
    return np.stack(np.meshgrid(*([m] * grid.dim), indexing="ij"), axis=-1)


@lru_cache(maxsize=16)
def _sampled(func, grid: Grid, eps: float, outer: float, singular: bool) -> np.ndarray:
    d = difference_lattice(grid)
    r = np.sqrt((d * d).sum(axis=-1))
    tol = 1e-9 * grid.spacing
    mask = (r >= eps - tol) & (r < outer - tol)
    out = np.zeros(r.shape)
    if mask.any():
        out[mask] = func(d[mask])
    if not singular:
        out[r < tol] = func(d[r < tol])
    out.flags.writeable = False
    return out


def sample_on_differences(func, grid: Grid, eps: float = 0.0, outer: float = math.inf,
                          singular: bool = True) -> np.ndarray:
    """Sample ``func`` on the difference lattice where ``eps <= |d| < outer``.

    With ``singular=False`` the origin is sampled as well (for bounded
    functions such as mollifiers).
    """
    return _sampled(func, grid, float(eps), float(outer), bool(singular))


def _lattice_convolve(kd: np.ndarray, f: GridFunction) -> np.ndarray:
    g = f.grid
    n = g.n
    sl = (slice(n - 1, 2 * n - 1),) * g.dim
    if g.dim == 1:
        full = np.convolve(f.values, kd)
    elif n <= _DIRECT_2D_MAX_N:
        full = signal.convolve2d(f.values, kd, mode="full")
    else:
        full = signal.fftconvolve(f.values, kd, mode="full")
    return full[sl] * g.cell_volume


@dataclass(frozen=True)
class TruncatedOperator:
    """``f -> sum_{|x-y| >= eps} K(x-y) f(y) h^n``; ``eps`` defaults to the grid spacing."""

    kernel: ConvolutionKernel
    epsilon: Optional[float] = None

    def __call__(self, f: GridFunction) -> GridFunction:
        return apply_pv(self.kernel, f, self.epsilon)

    def adjoint(self, g: GridFunction) -> GridFunction:
        return adjoint_apply(self.kernel, g, self.epsilon)


def apply_pv(kernel: ConvolutionKernel, f: GridFunction, eps: Optional[float] = None,
             outer: float = math.inf) -> GridFunction:
    """Discrete principal-value operator with truncation radius ``eps``.

    Parameters
    ----------
    kernel : ConvolutionKernel
    f : GridFunction
        Extended by zero outside the box.
    eps : float, optional
        Pairs with ``|x_i - x_j| < eps`` are excluded; default ``h``; must be at
        least ``h / 2``.
    outer : float
        Pairs with ``|x_i - x_j| >= outer`` are also excluded (annulus sums).
    """
    if kernel.dim != f.grid.dim:
        raise GridMismatchError(f"kernel dim {kernel.dim} != grid dim {f.grid.dim}")
    eps = _check_eps(f.grid, eps)
    kd = sample_on_differences(kernel, f.grid, eps, outer)
    return f.with_values(_lattice_convolve(kd, f))


def apply_localized(kernel: ConvolutionKernel, eta: Localizer, f: GridFunction,
                    eps: Optional[float] = None) -> GridFunction:
    """``T_eta f``: the truncated operator with kernel ``K eta``."""
    if eta.dim != f.grid.dim or kernel.dim != f.grid.dim:
        raise GridMismatchError("kernel, localizer and grid dimensions differ")
    return apply_pv(localize(kernel, eta), f, eps)


def mollify(psi: Localizer, f: GridFunction) -> GridFunction:
    """Grid convolution ``h^n sum_j psi(x_i - x_j) f(x_j)`` (zero extension)."""
    if psi.dim != f.grid.dim:
        raise GridMismatchError("localizer and grid dimensions differ")
    kd = sample_on_differences(psi, f.grid, 0.0, math.inf, singular=False)
    return f.with_values(_lattice_convolve(kd, f))


def apply_fourier_localized(kernel: ConvolutionKernel, psi: Localizer, f: GridFunction,
                            eps: Optional[float] = None, padding: float = 4.0) -> GridFunction:
    """``T^psi f = T(f - psi * f)`` with the same truncated back end as :func:`apply_pv`.

    Raises :class:`~localsieve.exceptions.PaddingContractError` when the
    support of ``f`` reaches beyond ``L / padding``.
    """
    check_support_margin(f, padding)
    g = f - mollify(psi, f)
    return apply_pv(kernel, g, eps)


def adjoint_apply(kernel: ConvolutionKernel, g: GridFunction, eps: Optional[float] = None) -> GridFunction:
    """Transpose of :func:`apply_pv`: the truncated operator with kernel ``K(-x)``."""
    return apply_pv(kernel.reflected(), g, eps)


def dyadic_eps_list(grid: Grid, top: float = 1.0) -> List[float]:
    """``[top, top/2, ..., >= h]``, decreasing."""
    out = []
    e = float(top)
    while e >= grid.spacing * (1 - 1e-12):
        out.append(e)
        e /= 2
    return out


@dataclass
class ErrorKernelResult:
    """The sampled maximal error kernel and its mass profile.

    ``shell_profile`` lists ``(R, mass within |x| <= R)`` for dyadic ``R``.
    The supremum over truncation radii is taken over the finite list
    ``eps_list`` only, so ``k_star`` is a lower bound for the continuum
    supremum.
    """

    k_star: GridFunction
    l1_norm: float
    shell_profile: List[Tuple[float, float]]
    eps_list: List[float] = field(default_factory=list)

    def shell_increments(self) -> np.ndarray:
        mass = np.array([m for _, m in self.shell_profile])
        return np.diff(mass)

    def tail_decays(self, factor: float = 0.9, last: int = 4) -> bool:
        return geometric_decay(self.shell_increments(), factor, last, floor=1e-14)


def error_kernel_star(kernel: ConvolutionKernel, eta: Localizer, psi: Localizer, grid: Grid,
                      eps_list: Optional[Sequence[float]] = None) -> ErrorKernelResult:
    """Sample ``K_* = max_eps |(K eta)_eps - K_eps + K_eps * psi|`` on the doubled box.

    The error kernel acts on differences of points of ``grid``, so it is
    sampled on ``grid.doubled_box()`` (same spacing, twice the half width).
    ``K_eps * psi`` is the discrete truncated convolution of ``K`` with
    ``psi`` sampled on that box, which keeps the sharp truncation.
    """
    dg = grid.doubled_box()
    eps_list = dyadic_eps_list(grid) if eps_list is None else sorted(map(float, eps_list), reverse=True)
    for e in eps_list:
        _check_eps(dg, e)
    pts = dg.points
    r = np.sqrt((pts * pts).sum(axis=-1))
    k_vals = kernel(pts)
    keta_vals = k_vals * eta(pts)
    psi_gf = GridFunction(dg, psi(pts))
    best = np.zeros(dg.shape)
    for e in eps_list:
        outside = r > e
        term = np.where(outside, keta_vals - k_vals, 0.0) + apply_pv(kernel, psi_gf, e).values
        np.maximum(best, np.abs(term), out=best)
    k_star = GridFunction(dg, best)
    radii = []
    R = 2.0 ** math.floor(math.log2(dg.spacing * 4))
    while R <= dg.half_width * (1 + 1e-12):
        radii.append(R)
        R *= 2
    profile = [(Rk, float(best[r <= Rk].sum() * dg.cell_volume)) for Rk in radii]
    return ErrorKernelResult(k_star, integrate(k_star), profile, list(eps_list))


def hilbert_multiplier(xi: np.ndarray) -> np.ndarray:
    """``-i sgn(xi)``: multiplier of convolution with ``1/(pi x)``."""
    return -1j * np.sign(xi[0])


def riesz_multiplier(j: int) -> Callable[[np.ndarray], np.ndarray]:
    """``i xi_j / |xi|`` with value 0 at the origin (one-based ``j``)."""

    def m(xi):
        mag = np.sqrt((xi * xi).sum(axis=0))
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(mag > 0, 1j * xi[j - 1] / np.where(mag > 0, mag, 1.0), 0.0)
        return out

    return m


def local_riesz_goldberg(j: int, phi, f: GridFunction, strict: bool = True,
                         padding: float = 4.0, tol: float = 1e-6) -> GridFunction:
    """Fourier-localized Riesz transform with multiplier ``(1 - phi(xi)) i xi_j / |xi|``.

    Parameters
    ----------
    j : int
        One-based axis.
    phi : callable or float
        Cutoff evaluated on the frequency array of shape ``(dim,) + shape``.
    f : GridFunction
    strict : bool
        Require ``phi`` within ``tol`` of 1 on the lowest nonzero discrete
        frequencies (the cutoff must equal one near the origin).  Pass
        ``False`` to obtain the unlocalized transform with ``phi = 0``.
    """
    if not 1 <= j <= f.grid.dim:
        raise ValueError("axis out of range")
    check_support_margin(f, padding)
    phi_fn = phi if callable(phi) else (lambda xi, c=float(phi): np.full(xi.shape[1:], c))
    xi = frequencies(f.grid)
    if strict:
        mag = np.sqrt((xi * xi).sum(axis=0))
        lowest = (mag > 0) & (mag <= (1 + 1e-9) / (2 * f.grid.half_width))
        vals = np.asarray(phi_fn(xi))[lowest]
        if np.any(np.abs(vals - 1.0) > tol):
            raise ValueError("phi must equal 1 near the origin (checked on the lowest frequencies)")
    base = riesz_multiplier(j)
    return fourier_multiply(f, lambda x: (1.0 - phi_fn(x)) * base(x))
