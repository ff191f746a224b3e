"""Oscillation norms and maximal functions over finite families of balls.

Every supremum over "all balls" or "all test functions" is replaced by a
maximum over a finite :class:`BallFamily` or :class:`TestDictionary`, so each
value computed here is a lower bound for its continuum counterpart.  Ball
averages are discrete: sums over member cells divided by the member count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy import signal

from ._quadrature import geometric_decay
from .exceptions import GridMismatchError
from .grid import Ball, Grid, GridFunction, integrate, unit_ball_volume

__all__ = [
    "BallFamily",
    "OscillationReport",
    "TestDictionary",
    "TailReport",
    "oscillation_report",
    "bmo_norm",
    "lmo_norms",
    "ball_commutator_maximal",
    "hl_maximal",
    "commutator_maximal_lower",
    "grand_maximal_lower",
    "h1_norm_estimate",
    "mean_bound_ratio",
    "weighted_tail_ratio",
    "default_scales",
]

_SLACK = 1 + 1e-12


def _same_grid(*fs: GridFunction) -> Grid:
    g = fs[0].grid
    for f in fs[1:]:
        if f.grid != g:
            raise GridMismatchError(f"{g} != {f.grid}")
    return g


def _offsets(grid: Grid, radius: float) -> np.ndarray:
    """Integer offsets ``o`` with ``|o| h <= radius``, in row-major order."""
    m = int(math.floor(radius / grid.spacing * _SLACK))
    ax = np.arange(-m, m + 1)
    o = np.stack(np.meshgrid(*([ax] * grid.dim), indexing="ij"), axis=-1).reshape(-1, grid.dim)
    dist = np.sqrt((o.astype(float) ** 2).sum(axis=1)) * grid.spacing
    return o[dist <= radius * _SLACK]


class BallFamily:
    """Finite family of balls standing in for "all balls".

    Parameters
    ----------
    grid : Grid
    stride : int
        Centres are the cell centres whose indices are congruent to ``N/2``
        modulo ``stride`` along every axis.
    r_max : float, optional
        Largest radius; defaults to the largest power of two not exceeding
        ``L/2``.
    radii : sequence of float, optional
        Explicit radii, replacing the dyadic set ``{2^k h : k >= min_level}``.
    extra_radii : sequence of float
        Added to the dyadic set.
    centers : array, optional
        Explicit centre indices of shape ``(m, dim)``.

    Balls that leave the box are dropped, not clipped.
    """

    def __init__(self, grid: Grid, stride: int = 4, r_max: Optional[float] = None,
                 radii: Optional[Sequence[float]] = None, extra_radii: Sequence[float] = (),
                 min_level: int = 2, centers: Optional[np.ndarray] = None):
        self.grid = grid
        self.stride = int(stride)
        if r_max is None:
            r_max = 2.0 ** math.floor(math.log2(grid.half_width / 2))
        self.r_max = float(r_max)
        if radii is None:
            rs = []
            k = min_level
            while grid.spacing * 2**k <= self.r_max * _SLACK:
                rs.append(grid.spacing * 2**k)
                k += 1
        else:
            rs = [float(r) for r in radii]
        rs = sorted(set(rs) | {float(r) for r in extra_radii})
        if not rs:
            raise ValueError("ball family has no radii")
        self.radii = np.array(rs)
        if centers is None:
            start = (grid.n // 2) % self.stride
            ax = np.arange(start, grid.n, self.stride)
            centers = np.stack(np.meshgrid(*([ax] * grid.dim), indexing="ij"), axis=-1).reshape(-1, grid.dim)
        self.center_indices = np.asarray(centers, dtype=int).reshape(-1, grid.dim)
        self._cache: Dict[float, Tuple[np.ndarray, np.ndarray]] = {}

    def __repr__(self):
        return f"BallFamily(stride={self.stride}, radii={len(self.radii)}, centers={len(self.center_indices)})"

    def center_coords(self, idx: np.ndarray) -> np.ndarray:
        return -self.grid.half_width + (idx + 0.5) * self.grid.spacing

    def windows(self, radius: float) -> Tuple[np.ndarray, np.ndarray]:
        """Centre indices ``(m, dim)`` and flat member indices ``(m, k)`` of in-box balls."""
        key = float(radius)
        if key not in self._cache:
            g = self.grid
            c = self.center_indices
            x = self.center_coords(c)
            keep = np.all(np.abs(x) + radius <= g.half_width * _SLACK, axis=1)
            c = c[keep]
            o = _offsets(g, radius)
            members = c[:, None, :] + o[None, :, :]
            flat = np.ravel_multi_index(tuple(np.moveaxis(members, -1, 0)), g.shape)
            self._cache[key] = (c, flat)
        return self._cache[key]

    def balls(self) -> Iterator[Ball]:
        for r in self.radii:
            c, _ = self.windows(r)
            for xc in self.center_coords(c):
                yield Ball(tuple(xc), r)

    def __len__(self) -> int:
        return sum(len(self.windows(r)[0]) for r in self.radii)

    def contains_ball(self, ball: Ball) -> bool:
        idx = np.array(self.grid.nearest_index(ball.center))
        on_center = np.allclose(self.center_coords(idx), ball.center)
        has_r = np.any(np.isclose(self.radii, ball.radius, rtol=1e-12))
        listed = np.any(np.all(self.center_indices == idx, axis=1))
        return bool(on_center and has_r and listed and ball.inside_box(self.grid))

    def including(self, balls: Sequence[Ball]) -> "BallFamily":
        """A copy whose centres and radii also cover the given balls."""
        idx = [self.center_indices]
        rs = list(self.radii)
        for b in balls:
            idx.append(np.array([self.grid.nearest_index(b.center)]))
            rs.append(b.radius)
        cs = np.unique(np.concatenate(idx, axis=0), axis=0)
        return BallFamily(self.grid, self.stride, max(rs), radii=rs, centers=cs)


@dataclass
class OscillationReport:
    """Suprema of mean oscillations over a ball family.

    ``bmo_p`` maps ``p`` in ``{1, 2, 6}`` to the bmo-type norm with the ball
    constant rule; ``lmo_loc``/``lmo`` and their ``_2`` variants use
    ``log(1 + 1/r)`` weights on small balls.  ``argmax`` records the maximizing
    ball for each named quantity and ``per_radius`` lists, for every radius,
    whether the mean or zero rule was applied and the sup of the p=1 quantity.
    """

    p: int
    bmo_p: Dict[int, float]
    bmo_loc: float
    bmo_loc_2: float
    lmo_loc: float
    lmo_loc_2: float
    large_mean: float
    argmax: Dict[str, Optional[Ball]] = field(default_factory=dict)
    per_radius: List[dict] = field(default_factory=list)

    @property
    def bmo(self) -> float:
        return self.bmo_p[1]

    @property
    def value(self) -> float:
        return self.bmo_p[self.p]

    @property
    def lmo(self) -> float:
        return self.lmo_loc + self.large_mean

    def to_dict(self) -> dict:
        def ball(b):
            return None if b is None else {"center": list(b.center), "radius": b.radius}

        return {
            "p": self.p,
            "bmo": self.bmo,
            "bmo_p": {str(k): v for k, v in sorted(self.bmo_p.items())},
            "bmo_loc": self.bmo_loc,
            "bmo_loc_2": self.bmo_loc_2,
            "lmo_loc": self.lmo_loc,
            "lmo_loc_2": self.lmo_loc_2,
            "lmo": self.lmo,
            "large_mean": self.large_mean,
            "argmax": {k: ball(v) for k, v in sorted(self.argmax.items())},
            "per_radius": self.per_radius,
        }


def _power_mean(dev: np.ndarray, p: int) -> np.ndarray:
    """Row-wise ``(mean dev^p)^(1/p)``, scaled by the row max to avoid overflow."""
    s = dev.max(axis=1)
    safe = np.where(s > 0, s, 1.0)
    return s * ((dev / safe[:, None]) ** p).mean(axis=1) ** (1.0 / p)


def oscillation_report(b: GridFunction, family: BallFamily, p: int = 1) -> OscillationReport:
    """All oscillation suprema of ``b`` over ``family`` in one pass."""
    if p not in (1, 2, 6):
        raise ValueError("p must be 1, 2 or 6")
    if family.grid != b.grid:
        raise GridMismatchError("family and function live on different grids")
    vals = b.values.ravel()
    best = {k: (-math.inf, None) for k in ("bmo1", "bmo2", "bmo6", "loc1", "loc2", "lmo1", "lmo2", "large")}
    rows = []
    any_ball = False

    def update(key, arr, r, centers):
        if arr.size == 0:
            return
        i = int(np.argmax(arr))
        if arr[i] > best[key][0]:
            best[key] = (float(arr[i]), Ball(tuple(family.center_coords(centers[i])), r))

    for r in family.radii:
        c, idx = family.windows(r)
        if len(c) == 0:
            continue
        any_ball = True
        w = vals[idx]
        small = r < 1.0
        if small:
            mu = w.mean(axis=1)
            dev = np.abs(w - mu[:, None])
        else:
            dev = np.abs(w)
        o1 = dev.mean(axis=1)
        # the power-mean inequality holds exactly; the maxima guard against rounding
        o2 = np.maximum(_power_mean(dev, 2), o1)
        o6 = np.maximum(_power_mean(dev, 6), o2)
        update("bmo1", o1, r, c)
        update("bmo2", o2, r, c)
        update("bmo6", o6, r, c)
        if small:
            lg = math.log1p(1.0 / r)
            update("loc1", o1, r, c)
            update("loc2", o2, r, c)
            update("lmo1", lg * o1, r, c)
            update("lmo2", lg * o2, r, c)
        else:
            update("large", o1, r, c)
        rows.append({"radius": float(r), "rule": "mean" if small else "zero",
                     "balls": int(len(c)), "sup_oscillation": float(o1.max())})
    if not any_ball:
        raise ValueError("the ball family has no ball inside the box")

    def val(k):
        return max(best[k][0], 0.0)

    return OscillationReport(
        p=p,
        bmo_p={1: val("bmo1"), 2: val("bmo2"), 6: val("bmo6")},
        bmo_loc=val("loc1"),
        bmo_loc_2=val("loc2"),
        lmo_loc=val("lmo1"),
        lmo_loc_2=val("lmo2"),
        large_mean=val("large"),
        argmax={"bmo": best["bmo1"][1], "bmo_2": best["bmo2"][1], "bmo_6": best["bmo6"][1],
                "lmo_loc": best["lmo1"][1], "lmo_loc_2": best["lmo2"][1], "large": best["large"][1]},
        per_radius=rows,
    )


def bmo_norm(b: GridFunction, family: BallFamily, p: int = 1) -> OscillationReport:
    """``sup_B (mean_B |b - c_B|^p)^(1/p)`` over the family; read ``.value``."""
    return oscillation_report(b, family, p)


def lmo_norms(b: GridFunction, family: BallFamily) -> OscillationReport:
    """Logarithmic oscillation norms; read ``.lmo_loc`` and ``.lmo``."""
    return oscillation_report(b, family, 1)


def ball_commutator_maximal(b: GridFunction, f: GridFunction, family: BallFamily) -> GridFunction:
    """``M_b f(x) = max_{B contains x} mean_{y in B} |b(x) - b(y)| |f(y)|`` over the family.

    Only balls meeting the support of ``f`` contribute; the value is zero
    elsewhere.
    """
    g = _same_grid(b, f)
    bv = b.values.ravel()
    fv = np.abs(f.values.ravel())
    nz = fv > 0
    out = np.zeros(bv.size)
    for r in family.radii:
        _, idx = family.windows(r)
        if idx.size == 0:
            continue
        hit = nz[idx].any(axis=1)
        for row in idx[hit]:
            sel = row[nz[row]]
            bx = bv[row]
            vals = (np.abs(bx[:, None] - bv[sel][None, :]) @ fv[sel]) / row.size
            np.maximum.at(out, row, vals)
    return GridFunction(g, out.reshape(g.shape))


def hl_maximal(f: GridFunction, family: BallFamily) -> GridFunction:
    """Uncentred Hardy-Littlewood maximal function of ``|f|`` over the family."""
    g = f.grid
    fv = np.abs(f.values.ravel())
    out = np.zeros(fv.size)
    for r in family.radii:
        _, idx = family.windows(r)
        if idx.size == 0:
            continue
        means = fv[idx].mean(axis=1)
        np.maximum.at(out, idx, np.broadcast_to(means[:, None], idx.shape))
    return GridFunction(g, out.reshape(g.shape))


# ---------------------------------------------------------------- test dictionary


def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3 - 2 * t)


def _flat_top(u):
    rho = np.sqrt((u * u).sum(axis=-1))
    return (1.0 / 3.0) * _smoothstep((1.0 - rho) / 0.5)


_BUMP_C = 3 * math.sqrt(3) / 8  # makes max |grad| of c(1-|u|^2)^2 equal to one


def _poly_bump(u):
    rho2 = (u * u).sum(axis=-1)
    return _BUMP_C * np.clip(1.0 - rho2, 0.0, None) ** 2


def _odd_bump_scale(dim: int) -> float:
    # max of |grad(u1 (1 - |u|^2)^2)|, attained on the u1 axis at u1 = 0 in every dimension
    t = np.linspace(0, 1, 20001)
    d1 = np.abs((1 - t**2) ** 2 - 4 * t**2 * (1 - t**2))
    return 1.0 / float(d1.max())


def _make_odd_bump(dim: int):
    c = _odd_bump_scale(dim)

    def prof(u):
        rho2 = (u * u).sum(axis=-1)
        return c * u[..., 0] * np.clip(1.0 - rho2, 0.0, None) ** 2

    return prof


def default_scales(grid: Grid, count: int = 6) -> List[float]:
    """The ``count`` largest dyadic ``t`` with ``h < t < 1``, decreasing."""
    out = []
    t = 0.5
    while t > grid.spacing * _SLACK and len(out) < count:
        out.append(t)
        t /= 2
    return out


class TestDictionary:
    """Finite set of normalized ``C^1`` test functions, centred at every grid point.

    Member ``(P, t)`` centred at ``x`` is ``phi(y) = P((y - x)/t) / (v_n t^n)``
    where ``v_n`` is the unit-ball volume.  Profiles satisfy ``|P| <= 1``,
    ``|grad P| <= 1`` and vanish outside the unit ball, which gives
    ``|phi| <= |B(x,t)|^-1`` and ``|grad phi| <= (t |B(x,t)|)^-1``.  The default
    profiles are a flat-top plateau bump, a polynomial bump and a
    sign-changing bump; the constraints are checked numerically on
    construction.
    """

    __test__ = False  # not a pytest class

    def __init__(self, grid: Grid, scales: Optional[Sequence[float]] = None,
                 profiles: Optional[Dict[str, Callable]] = None, check: bool = True):
        self.grid = grid
        self.scales = sorted(default_scales(grid) if scales is None else [float(t) for t in scales],
                             reverse=True)
        if any(not (0 < t < 1) for t in self.scales):
            raise ValueError("dictionary scales must lie in (0, 1)")
        if profiles is None:
            profiles = {"flat": _flat_top, "bump": _poly_bump, "odd": _make_odd_bump(grid.dim)}
        self.profiles = dict(profiles)
        self._stencils: Dict[Tuple[str, float], np.ndarray] = {}
        self.normalization = self._verify() if check else {}

    def _verify(self) -> Dict[str, Tuple[float, float]]:
        n = self.grid.dim
        ax = np.linspace(-1.05, 1.05, 421 if n == 1 else 211)
        u = np.stack(np.meshgrid(*([ax] * n), indexing="ij"), axis=-1)
        step = ax[1] - ax[0]
        out = {}
        for name, P in self.profiles.items():
            v = P(u)
            grads = np.gradient(v, step)
            grads = [grads] if n == 1 else grads
            gmax = float(np.sqrt(sum(gk**2 for gk in grads)).max())
            vmax = float(np.abs(v).max())
            outside = np.sqrt((u * u).sum(axis=-1)) > 1.0
            if vmax > 1 + 1e-9 or gmax > 1 + 1e-2 or np.any(v[outside] != 0):
                raise ValueError(f"profile {name!r} violates the normalization (max {vmax}, grad {gmax})")
            out[name] = (vmax, gmax)
        return out

    def members(self) -> Iterator[Tuple[str, float]]:
        for t in self.scales:
            for name in self.profiles:
                yield name, t

    def __len__(self) -> int:
        return len(self.scales) * len(self.profiles)

    def stencil(self, name: str, t: float) -> np.ndarray:
        """Sampled member centred at the origin cell, on offsets ``|o| h <= t``."""
        key = (name, float(t))
        if key not in self._stencils:
            g = self.grid
            m = int(math.floor(t / g.spacing * _SLACK))
            ax = np.arange(-m, m + 1) * g.spacing
            y = np.stack(np.meshgrid(*([ax] * g.dim), indexing="ij"), axis=-1)
            vals = self.profiles[name](y / t) / (unit_ball_volume(g.dim) * t**g.dim)
            vals = np.where(np.sqrt((y * y).sum(axis=-1)) <= t * _SLACK, vals, 0.0)
            vals.flags.writeable = False
            self._stencils[key] = vals
        return self._stencils[key]

    def pair(self, f: np.ndarray, name: str, t: float) -> np.ndarray:
        """``<f, phi_x>`` for every centre ``x`` (direct correlation, zero extension)."""
        st = self.stencil(name, t)
        h = self.grid.cell_volume
        if self.grid.dim == 1:
            return np.correlate(f, st, mode="same") * h
        return signal.correlate(f, st, mode="same", method="direct") * h

    def plateau_height(self, t: float) -> float:
        return float(_flat_top(np.zeros((1, self.grid.dim)))[0]) / (unit_ball_volume(self.grid.dim) * t**self.grid.dim)


def commutator_maximal_lower(b: GridFunction, f: GridFunction, dictionary: TestDictionary) -> GridFunction:
    """``max_phi |int (b(x) - b(y)) f(y) phi(y) dy|`` over dictionary members centred at ``x``.

    A lower bound for the commutator maximal function.
    """
    g = _same_grid(b, f)
    if dictionary.grid != g:
        raise GridMismatchError("dictionary built for another grid")
    bv, fv = b.values, f.values
    bf = bv * fv
    out = np.zeros(g.shape)
    for name, t in dictionary.members():
        val = np.abs(bv * dictionary.pair(fv, name, t) - dictionary.pair(bf, name, t))
        np.maximum(out, val, out=out)
    return GridFunction(g, out)


def grand_maximal_lower(f: GridFunction, dictionary: TestDictionary) -> GridFunction:
    """``max_phi |<f, phi>|`` over dictionary members centred at each point."""
    if dictionary.grid != f.grid:
        raise GridMismatchError("dictionary built for another grid")
    out = np.zeros(f.grid.shape)
    for name, t in dictionary.members():
        np.maximum(out, np.abs(dictionary.pair(f.values, name, t)), out=out)
    return GridFunction(f.grid, out)


def _gaussian_profile(u):
    n = u.shape[-1]
    return (2 * math.pi) ** (-n / 2) * np.exp(-0.5 * (u * u).sum(axis=-1))


def h1_norm_estimate(f: GridFunction, scales: Optional[Sequence[float]] = None,
                     profile: Optional[Callable] = None) -> float:
    """``|| max_t |f * psi_t| ||_1`` over the given scales ``t`` in ``(h, 1)``.

    ``psi_t(x) = t^-n psi(x/t)``; the default ``psi`` is the unit-mass
    Gaussian.  Convolutions use the sampled kernel on the full difference
    lattice via FFT.
    """
    g = f.grid
    if scales is None:
        scales = default_scales(g, count=64)
    prof = _gaussian_profile if profile is None else profile
    from .operators import difference_lattice

    d = difference_lattice(g)
    n = g.n
    sl = (slice(n - 1, 2 * n - 1),) * g.dim
    best = np.zeros(g.shape)
    if not np.any(f.values):
        return 0.0
    for t in scales:
        kt = prof(d / t) / t**g.dim
        conv = signal.fftconvolve(f.values, kt, mode="full")[sl] * g.cell_volume
        np.maximum(best, np.abs(conv), out=best)
    return float(best.sum() * g.cell_volume)


def mean_bound_ratio(g: GridFunction, ball: Ball, scales: Optional[Sequence[float]] = None) -> float:
    """``|int g| log(1 + 1/r) / h1_norm_estimate(g)`` for ``g`` supported in ``ball``."""
    outside = ~ball.mask(g.grid)
    if np.any(g.values[outside] != 0):
        raise ValueError("g is not supported in the ball")
    mean = integrate(g)
    if mean == 0:
        return 0.0
    est = h1_norm_estimate(g, scales)
    if est == 0:
        raise ValueError("inconsistent: zero h1 estimate for a function with nonzero mean")
    return abs(mean) * math.log1p(1.0 / ball.radius) / est


@dataclass
class TailReport:
    ratio: float
    numerator: float
    bmo: float
    increments: List[float]
    converging: bool


def weighted_tail_ratio(b: GridFunction, ball: Ball, delta: float, p: float,
                        family: Optional[BallFamily] = None, bmo: Optional[float] = None) -> TailReport:
    """``r^delta int_{|x-x0|>r} |b - c_B|^p / |x-x0|^(n+delta)`` divided by ``||b||_bmo^p``.

    The integral is truncated at the box; its dyadic-shell increments and a
    geometric-decay verdict are reported alongside.  ``bmo`` defaults to the
    family estimate.
    """
    if delta <= 0 or p < 1:
        raise ValueError("need delta > 0 and p >= 1")
    g = b.grid
    r = ball.radius
    dist = g.distance_from(ball.center)
    outside = ~ball.mask(g)
    cb = ball.c_b(b)
    dev = np.abs(b.values - cb) ** p
    with np.errstate(divide="ignore"):
        w = np.where(outside, dev / np.where(outside, dist, 1.0) ** (g.dim + delta), 0.0)
    num = float(r**delta * w.sum() * g.cell_volume)
    incs = []
    k = 0
    far = dist.max()
    while r * 2**k < far:
        sh = outside & (dist > r * 2**k) & (dist <= r * 2 ** (k + 1))
        incs.append(float(r**delta * w[sh].sum() * g.cell_volume))
        k += 1
    if bmo is None:
        if family is None:
            family = BallFamily(g)
        bmo = bmo_norm(b, family).value
    if bmo == 0:
        if num > 0:
            raise ValueError("inconsistent: zero bmo estimate with a nonzero tail integral")
        ratio = 0.0
    else:
        ratio = num / bmo**p
    return TailReport(ratio, num, float(bmo), incs, geometric_decay(incs, floor=1e-14 + 1e-12 * num))
