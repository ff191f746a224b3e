"""Sampled functions on uniform cell-centred grids.

Everything in the package (inputs ``f``, oscillating symbols ``b``, atoms,
operator outputs) is carried by a :class:`GridFunction`: values sampled at the
cell centres of a box ``[-L, L]^dim`` split into ``N`` cells per axis.  Cell
centres never coincide with the origin, so kernels singular at ``0`` can be
evaluated on differences of grid points without special cases.

Spatial operators treat the function as zero outside the box.  Fourier-side
operators use the periodic discrete transform and therefore require the
function to be supported well inside the box; see :func:`check_support_margin`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .exceptions import GridMismatchError, PaddingContractError

__all__ = [
    "Grid",
    "GridFunction",
    "Ball",
    "BallComplement",
    "integrate",
    "lp_norm",
    "fourier_multiply",
    "frequencies",
    "restrict_to_ball",
    "check_support_margin",
    "unit_ball_volume",
    "save_gfn",
    "load_gfn",
]


def unit_ball_volume(dim: int) -> float:
    """Lebesgue measure of the unit ball in ``R^dim``."""
    return math.pi ** (dim / 2) / math.gamma(dim / 2 + 1)


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centred grid on ``[-half_width, half_width]^dim``.

    Parameters
    ----------
    dim : int
        Spatial dimension, 1 or 2.
    half_width : float
        Half side length ``L`` of the box.
    n : int
        Cells per axis; a power of two, at least 8.
    """

    dim: int
    half_width: float
    n: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.n < 8 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 8, got {self.n}")
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")
        object.__setattr__(self, "half_width", float(self.half_width))

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.n

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @property
    def axis(self) -> np.ndarray:
        """Cell-centre coordinates along one axis."""
        return -self.half_width + (np.arange(self.n) + 0.5) * self.spacing

    @property
    def points(self) -> np.ndarray:
        """Array of shape ``shape + (dim,)`` holding every cell centre."""
        axes = np.meshgrid(*([self.axis] * self.dim), indexing="ij")
        return np.stack(axes, axis=-1)

    def distance_from(self, center) -> np.ndarray:
        """Euclidean distance of every cell centre from ``center``."""
        c = np.asarray(center, dtype=float).reshape(self.dim)
        return np.linalg.norm(self.points - c, axis=-1)

    def refine(self) -> "Grid":
        """Same box with twice as many cells per axis."""
        return Grid(self.dim, self.half_width, 2 * self.n)

    def doubled_box(self) -> "Grid":
        """Box of twice the half width at the same spacing.

        Its cell centres contain every difference ``x_i - x_j`` shifted by half a
        cell, which is where error kernels are sampled.
        """
        return Grid(self.dim, 2 * self.half_width, 2 * self.n)

    def nearest_index(self, point) -> tuple:
        p = np.asarray(point, dtype=float).reshape(self.dim)
        idx = np.floor((p + self.half_width) / self.spacing).astype(int)
        return tuple(np.clip(idx, 0, self.n - 1))

    def sample(self, func: Callable[[np.ndarray], np.ndarray]) -> "GridFunction":
        """Evaluate ``func`` (taking points of shape ``(..., dim)``) at the cell centres."""
        return GridFunction(self, func(self.points))

    def zeros(self) -> "GridFunction":
        return GridFunction(self, np.zeros(self.shape))

    def constant(self, value: float) -> "GridFunction":
        return GridFunction(self, np.full(self.shape, float(value)))


class GridFunction:
    """Real values sampled at the cell centres of a :class:`Grid`.

    Values are stored with shape ``grid.shape`` and are read-only after
    construction.  ``values.ravel()`` gives the row-major flat layout used on
    disk.
    """

    __array_priority__ = 1000

    def __init__(self, grid: Grid, values):
        arr = np.array(values, dtype=float)
        if arr.size != grid.n**grid.dim:
            raise ValueError(
                f"expected {grid.n ** grid.dim} values for {grid}, got {arr.size}"
            )
        arr = arr.reshape(grid.shape)
        if not np.all(np.isfinite(arr)):
            raise ValueError("grid function values must be finite")
        arr.flags.writeable = False
        self.grid = grid
        self.values = arr

    def __repr__(self):
        return f"GridFunction(dim={self.grid.dim}, n={self.grid.n}, L={self.grid.half_width})"

    def _other_values(self, other):
        if isinstance(other, GridFunction):
            if other.grid != self.grid:
                raise GridMismatchError(f"{self.grid} != {other.grid}")
            return other.values
        return other

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.grid, values)

    def __add__(self, other):
        return self.with_values(self.values + self._other_values(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self.with_values(self.values - self._other_values(other))

    def __rsub__(self, other):
        return self.with_values(self._other_values(other) - self.values)

    def __mul__(self, other):
        return self.with_values(self.values * self._other_values(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self.with_values(self.values / self._other_values(other))

    def __neg__(self):
        return self.with_values(-self.values)

    def __abs__(self):
        return self.with_values(np.abs(self.values))

    def __pow__(self, p):
        return self.with_values(self.values**p)

    def support_mask(self, rtol: float = 0.0) -> np.ndarray:
        """Cells where ``|f| > rtol * max|f|`` (exact nonzeros when ``rtol == 0``)."""
        a = np.abs(self.values)
        if rtol == 0.0:
            return a > 0
        return a > rtol * a.max()


@dataclass(frozen=True)
class Ball:
    """Closed ball ``B(center, radius)``; cell centres with ``|x - x0| <= r`` belong to it.

    Averages over a ball are discrete: sums over member cells divided by the
    member count, so that normalized indicators integrate to one exactly.
    """

    center: tuple
    radius: float

    def __post_init__(self):
        c = tuple(float(v) for v in np.atleast_1d(np.asarray(self.center, dtype=float)))
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def is_small(self) -> bool:
        return self.radius < 1.0

    def __invert__(self) -> "BallComplement":
        return BallComplement(self)

    def dilate(self, factor: float) -> "Ball":
        return Ball(self.center, factor * self.radius)

    def mask(self, grid: Grid) -> np.ndarray:
        # small slack so that dyadic radii hit boundary cells deterministically
        return grid.distance_from(self.center) <= self.radius * (1 + 1e-12)

    def cell_count(self, grid: Grid) -> int:
        return int(self.mask(grid).sum())

    def measure(self, grid: Grid) -> float:
        """Discrete measure ``h^dim * #cells``."""
        return self.cell_count(grid) * grid.cell_volume

    def volume(self) -> float:
        """Exact Lebesgue measure."""
        return unit_ball_volume(self.dim) * self.radius**self.dim

    def inside_box(self, grid: Grid, margin: float = 0.0) -> bool:
        c = np.asarray(self.center)
        return bool(np.all(np.abs(c) + self.radius + margin <= grid.half_width))

    def mean(self, f: GridFunction) -> float:
        m = self.mask(f.grid)
        if not m.any():
            raise ValueError(f"{self} contains no grid cells")
        return float(f.values[m].mean())

    def c_b(self, b: GridFunction) -> float:
        """The ball constant: mean of ``b`` over small balls, zero for ``r >= 1``."""
        return self.mean(b) if self.is_small else 0.0


@dataclass(frozen=True)
class BallComplement:
    ball: Ball

    def mask(self, grid: Grid) -> np.ndarray:
        return ~self.ball.mask(grid)


Region = Union[Ball, BallComplement, None]


def _region_mask(grid: Grid, region: Region) -> Optional[np.ndarray]:
    if region is None:
        return None
    return region.mask(grid)


def integrate(f: GridFunction, region: Region = None) -> float:
    """Midpoint rule ``h^dim * sum(values)``, optionally over a ball or its complement."""
    m = _region_mask(f.grid, region)
    vals = f.values if m is None else f.values[m]
    return float(vals.sum() * f.grid.cell_volume)


def lp_norm(f: GridFunction, p: float, region: Region = None) -> float:
    """Midpoint-rule ``L^p`` norm; ``p = inf`` gives the grid maximum of ``|f|``."""
    if p < 1:
        raise ValueError("p must be >= 1")
    m = _region_mask(f.grid, region)
    vals = np.abs(f.values if m is None else f.values[m])
    if vals.size == 0:
        return 0.0
    if np.isinf(p):
        return float(vals.max())
    if p == 1:
        return float(vals.sum() * f.grid.cell_volume)
    if p == 2:
        return float(np.sqrt((vals * vals).sum() * f.grid.cell_volume))
    scale = vals.max()
    if scale == 0:
        return 0.0
    return float(scale * (((vals / scale) ** p).sum() * f.grid.cell_volume) ** (1.0 / p))


def frequencies(grid: Grid) -> np.ndarray:
    """Discrete frequencies (cycles per unit length), shape ``(dim,) + grid.shape``.

    The transform convention is ``f^(xi) = int f(x) exp(-2 pi i x.xi) dx``, for
    which the kernel ``1/(pi x)`` has multiplier ``-i sgn(xi)``.
    """
    k = np.fft.fftfreq(grid.n, d=grid.spacing)
    return np.stack(np.meshgrid(*([k] * grid.dim), indexing="ij"), axis=0)


def fourier_multiply(f: GridFunction, multiplier: Callable[[np.ndarray], np.ndarray]) -> GridFunction:
    """Apply ``multiplier(xi)`` on the Fourier side of the periodic extension of ``f``.

    ``multiplier`` receives the array from :func:`frequencies` and must return
    finite values of shape ``grid.shape``.  The real part of the inverse
    transform is returned; multipliers of real operators are Hermitian so the
    discarded imaginary part is rounding noise.
    """
    xi = frequencies(f.grid)
    m = np.broadcast_to(np.asarray(multiplier(xi)), f.grid.shape)
    if not np.all(np.isfinite(m)):
        raise ValueError("multiplier is not finite at every discrete frequency")
    out = np.fft.ifftn(np.fft.fftn(f.values) * m)
    return f.with_values(out.real)


def restrict_to_ball(f: GridFunction, ball: Ball) -> GridFunction:
    """Zero ``f`` outside ``ball``."""
    m = ball.mask(f.grid)
    if not m.any():
        raise ValueError(f"{ball} does not meet the grid box")
    return f.with_values(np.where(m, f.values, 0.0))


def check_support_margin(f: GridFunction, factor: float = 4.0, rtol: float = 1e-10) -> float:
    """Enforce the padding contract for periodic (Fourier-side) operators.

    The numerical support (cells with ``|f| > rtol * max|f|``) must lie in the
    cube ``|x|_inf <= L / factor``.  Returns the support half-width; raises
    :class:`PaddingContractError` otherwise.
    """
    mask = f.support_mask(rtol)
    if not mask.any():
        return 0.0
    extent = float(np.abs(f.grid.points[mask]).max())
    limit = f.grid.half_width / factor
    if extent > limit + 1e-12:
        raise PaddingContractError(
            f"support extends to {extent:.4g}; padding factor {factor} allows {limit:.4g}"
        )
    return extent


def save_gfn(f: GridFunction, path: Union[str, Path]) -> None:
    """Write ``f`` as ``.gfn``: ASCII header ``dim N L`` then little-endian float64 values."""
    header = f"{f.grid.dim} {f.grid.n} {f.grid.half_width!r}\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def load_gfn(path: Union[str, Path]) -> GridFunction:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        if len(header) != 3:
            raise ValueError(f"{path}: malformed .gfn header {header!r}")
        dim, n, half_width = int(header[0]), int(header[1]), float(header[2])
        grid = Grid(dim, half_width, n)
        raw = fh.read()
    expected = 8 * n**dim
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} payload bytes, found {len(raw)}")
    return GridFunction(grid, np.frombuffer(raw, dtype="<f8"))


def gaussian(grid: Grid, sigma: float = 1.0, center: Sequence[float] = None, normalized=False) -> GridFunction:
    """Sampled ``exp(-|x - c|^2 / (2 sigma^2))``, optionally scaled to unit mass."""
    c = np.zeros(grid.dim) if center is None else np.asarray(center, dtype=float)
    r2 = ((grid.points - c) ** 2).sum(axis=-1)
    vals = np.exp(-r2 / (2 * sigma**2))
    if normalized:
        vals = vals / (2 * math.pi * sigma**2) ** (grid.dim / 2)
    return GridFunction(grid, vals)
