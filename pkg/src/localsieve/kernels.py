"""Convolution kernels, localizers and their numerical certificates.

A kernel is a black-box evaluator ``K(x)`` on points of shape ``(..., dim)``
together with the constants it claims.  The certifiers do not trust those
claims: they sample the size, smoothness and annulus-cancellation quantities
and report what they observe, declaring a condition passed only when the
observed constant is finite and stable under doubling of the sample budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from ._quadrature import (
    geometric_decay,
    log_shell_nodes,
    antipodal_directions,
    random_directions,
    relative_change,
    shell_integrals,
)
from .grid import GridFunction, unit_ball_volume

__all__ = [
    "ConvolutionKernel",
    "Localizer",
    "KernelCertificate",
    "hilbert_kernel",
    "riesz_kernel",
    "power_kernel",
    "localize",
    "kernel_from_grid_function",
    "standard_bump",
    "constant_eta",
    "gaussian_psi",
    "zero_psi",
    "cell_delta_psi",
    "certify_delta_kernel",
    "certify_localizer_eta",
    "certify_localizer_psi",
    "builtin_kernel",
    "builtin_localizer",
]

STABILITY_TOL = 0.25
PSI_INTEGRAL_TOL = 1e-6


def _norm(x: np.ndarray) -> np.ndarray:
    return np.sqrt((x * x).sum(axis=-1))


@dataclass(frozen=True)
class ConvolutionKernel:
    """A kernel ``K(x)`` defined away from the origin, with its claimed constants.

    Parameters
    ----------
    evaluator : callable
        Maps points of shape ``(..., dim)`` to values of shape ``(...)``.
    dim : int
    delta : float
        Claimed smoothness exponent in ``(0, 1]``.
    size_constant : float
        Claimed ``C`` in ``|K(x)| <= C |x|^-n``.
    cancellation_bound : float
        Claimed bound on annulus integrals; ``inf`` when none is claimed.
    extra_decay : float or None
        Extra decay exponent at infinity for inhomogeneous use.
    odd_symmetric : bool
        Whether ``K(-x) = -K(x)``.
    """

    evaluator: Callable[[np.ndarray], np.ndarray]
    dim: int
    delta: float = 1.0
    size_constant: float = 1.0
    cancellation_bound: float = 0.0
    extra_decay: Optional[float] = None
    odd_symmetric: bool = False
    name: str = "kernel"

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            x = x[..., None] if self.dim == 1 else x
        return np.asarray(self.evaluator(x), dtype=float)

    def reflected(self) -> "ConvolutionKernel":
        """The kernel ``x -> K(-x)``."""
        ev = self.evaluator
        return replace(self, evaluator=lambda x: ev(-x), name=f"reflect({self.name})")

    def check_symmetry(self, samples: int = 1000, seed: int = 0) -> float:
        """Largest ``|K(x) + K(-x)|`` relative to ``|K(x)|`` over random points."""
        rng = np.random.default_rng(seed)
        x = (10 ** rng.uniform(-2, 2, samples))[:, None] * random_directions(rng, self.dim, samples)
        a, b = self(x), self(-x)
        scale = np.maximum(np.abs(a), 1e-300)
        return float(np.max(np.abs(a + b) / scale))


@dataclass(frozen=True)
class Localizer:
    """A spatial cutoff ``eta`` or a Fourier-side mollifier ``psi``.

    ``transform`` optionally gives the continuous Fourier transform (frequency
    in cycles) for use in oracles; ``support_radius`` is ``inf`` unless the
    function has compact support.
    """

    kind: str
    evaluator: Callable[[np.ndarray], np.ndarray]
    dim: int = 1
    delta: float = 1.0
    name: str = "localizer"
    even: bool = True
    support_radius: float = math.inf
    transform: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.kind not in ("eta", "psi"):
            raise ValueError(f"kind must be 'eta' or 'psi', got {self.kind!r}")

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.asarray(self.evaluator(x), dtype=float) * np.ones(x.shape[:-1])

    def scaled(self, factor: float) -> "Localizer":
        ev, tr = self.evaluator, self.transform
        return replace(
            self,
            evaluator=lambda x: factor * ev(x),
            transform=None if tr is None else (lambda xi: factor * tr(xi)),
            name=f"{factor:g}*{self.name}",
        )


@dataclass
class KernelCertificate:
    """Observed constants, per-condition verdicts and failing sample points."""

    observed: Dict[str, float] = field(default_factory=dict)
    passed: Dict[str, bool] = field(default_factory=dict)
    witnesses: List[dict] = field(default_factory=list)
    details: Dict[str, object] = field(default_factory=dict)

    @property
    def observed_size_constant(self) -> float:
        return self.observed.get("size", math.nan)

    @property
    def observed_smoothness_constant(self) -> float:
        return self.observed.get("smoothness", math.nan)

    @property
    def observed_cancellation(self) -> float:
        return self.observed.get("cancellation", math.nan)

    @property
    def ok(self) -> bool:
        return bool(self.passed) and all(self.passed.values())

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, (np.floating, float)):
                v = float(v)
                return v if math.isfinite(v) else str(v)
            if isinstance(v, np.ndarray):
                return [clean(t) for t in v.tolist()]
            if isinstance(v, (list, tuple)):
                return [clean(t) for t in v]
            if isinstance(v, dict):
                return {k: clean(t) for k, t in v.items()}
            if isinstance(v, np.bool_):
                return bool(v)
            return v

        return clean(
            {
                "observed": self.observed,
                "passed": self.passed,
                "ok": self.ok,
                "witnesses": self.witnesses,
                "details": self.details,
            }
        )


# ---------------------------------------------------------------- built-ins


def hilbert_kernel() -> ConvolutionKernel:
    """``K(x) = 1 / (pi x)`` on the line."""

    def ev(x):
        return 1.0 / (math.pi * x[..., 0])

    return ConvolutionKernel(ev, dim=1, delta=1.0, size_constant=1 / math.pi,
                             cancellation_bound=0.0, odd_symmetric=True, name="hilbert")


def riesz_kernel(j: int, n: int) -> ConvolutionKernel:
    """``K(x) = c_n x_j / |x|^(n+1)`` with ``c_n = Gamma((n+1)/2) / pi^((n+1)/2)``.

    ``j`` is one-based.  For ``n = 1`` this is the Hilbert kernel.  Under the
    transform convention of :func:`localsieve.grid.frequencies` the multiplier
    is ``-i xi_j / |xi|``.
    """
    if n not in (1, 2):
        raise ValueError("n must be 1 or 2")
    if not 1 <= j <= n:
        raise ValueError(f"axis index j must lie in 1..{n}")
    c = math.gamma((n + 1) / 2) / math.pi ** ((n + 1) / 2)
    axis = j - 1

    def ev(x):
        r = _norm(x)
        return c * x[..., axis] / r ** (n + 1)

    return ConvolutionKernel(ev, dim=n, delta=1.0, size_constant=c, cancellation_bound=0.0,
                             odd_symmetric=True, name=f"riesz{j}")


def power_kernel(dim: int = 1) -> ConvolutionKernel:
    """``K(x) = |x|^-n``: size and smoothness hold, annulus integrals grow."""

    def ev(x):
        return _norm(x) ** (-dim)

    return ConvolutionKernel(ev, dim=dim, delta=1.0, size_constant=1.0,
                             cancellation_bound=math.inf, name="power")


def localize(kernel: ConvolutionKernel, eta: Localizer, extra_decay: float = 1.0) -> ConvolutionKernel:
    """The product kernel ``K(x) eta(x)``.

    When ``eta`` has compact support of radius ``R`` the product also satisfies
    the inhomogeneous size bound with any extra decay ``epsilon``; the claimed
    constant is then ``C sup|eta| R^epsilon``.
    """
    if eta.kind != "eta":
        raise ValueError("localize expects an eta-kind localizer")
    if eta.dim != kernel.dim:
        raise ValueError("kernel and localizer dimensions differ")
    kev, eev = kernel.evaluator, eta.evaluator
    sup_eta = _sup_abs(eta)
    size = kernel.size_constant * sup_eta
    decay = None
    if math.isfinite(eta.support_radius):
        decay = extra_decay
        size *= max(eta.support_radius, 1.0) ** extra_decay

    def ev(x):
        return kev(x) * eev(x)

    return ConvolutionKernel(
        ev,
        dim=kernel.dim,
        delta=min(kernel.delta, eta.delta),
        size_constant=size,
        cancellation_bound=kernel.cancellation_bound,
        extra_decay=decay,
        odd_symmetric=kernel.odd_symmetric and eta.even,
        name=f"{kernel.name}*{eta.name}",
    )


def _sup_abs(loc: Localizer, samples: int = 4096) -> float:
    r = np.concatenate([[0.0], np.geomspace(1e-4, 1e4, samples)])
    dirs, _ = antipodal_directions(loc.dim, 16)
    pts = r[:, None, None] * dirs[None]
    return float(np.max(np.abs(loc(pts))))


def kernel_from_grid_function(gf: GridFunction, delta: float = 1.0, odd: bool = False,
                              name: str = "sampled") -> ConvolutionKernel:
    """Kernel given by linear interpolation of samples; zero outside the sampled box."""
    g = gf.grid
    interp = RegularGridInterpolator(
        (g.axis,) * g.dim, gf.values, method="linear", bounds_error=False, fill_value=None
    )
    half = g.half_width

    def ev(x):
        flat = x.reshape(-1, g.dim)
        vals = interp(np.clip(flat, -half, half))
        vals = np.where(np.all(np.abs(flat) <= half, axis=1), vals, 0.0)
        return vals.reshape(x.shape[:-1])

    return ConvolutionKernel(ev, dim=g.dim, delta=delta, size_constant=math.nan,
                             cancellation_bound=math.nan, odd_symmetric=odd, name=name)


def _smooth_step_weight(t):
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def standard_bump(dim: int = 1) -> Localizer:
    """Radial ``C^infinity`` cutoff: 1 on the unit ball, 0 outside radius 2."""

    def ev(x):
        rho = _norm(x)
        a = _smooth_step_weight(2.0 - rho)
        b = _smooth_step_weight(rho - 1.0)
        return a / (a + b)

    return Localizer("eta", ev, dim=dim, delta=1.0, name="bump", support_radius=2.0)


def constant_eta(value: float = 1.0, dim: int = 1) -> Localizer:
    def ev(x):
        return np.full(x.shape[:-1], float(value))

    return Localizer("eta", ev, dim=dim, delta=1.0, name=f"const{value:g}",
                     support_radius=math.inf if value else 0.0)


def gaussian_psi(dim: int = 1, sigma: float = 0.5) -> Localizer:
    """Unit-mass Gaussian ``(2 pi sigma^2)^(-n/2) exp(-|x|^2 / 2 sigma^2)``."""
    norm = (2 * math.pi * sigma**2) ** (-dim / 2)

    def ev(x):
        return norm * np.exp(-(x * x).sum(axis=-1) / (2 * sigma**2))

    def tr(xi):
        # xi has the frequency axis first, as produced by grid.frequencies
        return np.exp(-2 * math.pi**2 * sigma**2 * (xi * xi).sum(axis=0))

    return Localizer("psi", ev, dim=dim, delta=1.0, name=f"gauss{sigma:g}", transform=tr)


def zero_psi(dim: int = 1) -> Localizer:
    def ev(x):
        return np.zeros(x.shape[:-1])

    return Localizer("psi", ev, dim=dim, name="zero", support_radius=0.0,
                     transform=lambda xi: np.zeros(xi.shape[1:]))


def cell_delta_psi(spacing: float, dim: int = 1) -> Localizer:
    """Discrete identity for grid convolution: ``h^-n`` at the origin cell, zero elsewhere.

    Its lattice transform is identically one, so ``f - psi * f`` vanishes for
    every grid function.
    """
    peak = spacing ** (-dim)

    def ev(x):
        return np.where(_norm(x) < 0.5 * spacing, peak, 0.0)

    return Localizer("psi", ev, dim=dim, name="celldelta", support_radius=0.5 * spacing,
                     transform=lambda xi: np.ones(xi.shape[1:]))


def builtin_kernel(name: str, dim: int = 1) -> ConvolutionKernel:
    """Look up ``hilbert``, ``riesz1``, ``riesz2``, ``power`` or ``hilbert-local``."""
    key = name.lower()
    if key == "hilbert":
        return hilbert_kernel()
    if key.startswith("riesz") and key[5:].isdigit():
        return riesz_kernel(int(key[5:]), dim)
    if key == "power":
        return power_kernel(dim)
    if key in ("hilbert-local", "local-hilbert"):
        return localize(hilbert_kernel(), standard_bump(1))
    if key.startswith("riesz") and key.endswith("-local") and key[5:-6].isdigit():
        return localize(riesz_kernel(int(key[5:-6]), dim), standard_bump(dim))
    raise KeyError(f"unknown kernel {name!r}")


def builtin_localizer(name: str, dim: int = 1, spacing: float = None) -> Localizer:
    """Look up ``bump``, ``one``, ``zero-eta``, ``gaussian``, ``gaussian:<sigma>``, ``zero``."""
    key = name.lower()
    if key == "bump":
        return standard_bump(dim)
    if key == "one":
        return constant_eta(1.0, dim)
    if key == "zero-eta":
        return constant_eta(0.0, dim)
    if key == "gaussian":
        return gaussian_psi(dim)
    if key.startswith("gaussian:"):
        return gaussian_psi(dim, float(key.split(":", 1)[1]))
    if key == "zero":
        return zero_psi(dim)
    if key == "celldelta":
        if spacing is None:
            raise KeyError("celldelta needs the grid spacing")
        return cell_delta_psi(spacing, dim)
    raise KeyError(f"unknown localizer {name!r}")


# ---------------------------------------------------------------- sampling helpers


def _log_points(rng, dim, count, lo=-3.0, hi=3.0):
    r = 10 ** rng.uniform(lo, hi, count)
    return r[:, None] * random_directions(rng, dim, count), r


def _pair_offsets(rng, dim, x, r):
    """Offsets ``y`` with ``0 < 2|y| <= |x|``: log-uniform, uniform and boundary strata."""
    count = len(r)
    u = np.empty(count)
    q = count // 4
    u[: 2 * q] = 10 ** rng.uniform(-4, math.log10(0.5), 2 * q)
    u[2 * q: 3 * q] = rng.uniform(1e-6, 0.5, q)
    u[3 * q:] = 0.5
    u = u[rng.permutation(count)]
    return (u * r)[:, None] * random_directions(rng, dim, count), u * r


def _sup_with_witness(values, points, label, witnesses):
    finite = np.isfinite(values)
    if not finite.all():
        bad = int(np.flatnonzero(~finite)[0])
        witnesses.append({"condition": label, "point": np.atleast_1d(points[bad]).tolist()})
        return math.inf
    return float(values.max()) if values.size else 0.0


def _stable(a: float, b: float) -> bool:
    return math.isfinite(a) and math.isfinite(b) and relative_change(a, b) < STABILITY_TOL


def _annulus_sup(shells: np.ndarray) -> float:
    """``sup_{a<b} |sum_{a<=k<b} shells[k]|`` from cumulative sums."""
    c = np.concatenate([[0.0], np.cumsum(shells)])
    return float(c.max() - c.min())


def certify_delta_kernel(kernel: ConvolutionKernel, budget: int = 4000, seed: int = 0,
                         delta: Optional[float] = None, shells: int = 32) -> KernelCertificate:
    """Sample the size, smoothness and cancellation conditions of a convolution kernel.

    Parameters
    ----------
    kernel : ConvolutionKernel
    budget : int
        Number of random samples per condition (at least 1000).  The
        certificate is recomputed at twice the budget with nested samples;
        a condition passes only if its constant is finite and changes by less
        than 25%.
    seed : int
    delta : float, optional
        Smoothness exponent to test; defaults to ``kernel.delta``.
    shells : int
        Number of dyadic shells ``2^k < |x| < 2^(k+1)`` centred on ``k = 0``
        used for the cancellation estimate.  Cancellation fails when the
        annulus supremum over all shells exceeds 1.25 times the supremum over
        the central half, i.e. when it keeps growing with the shell count.

    Returns
    -------
    KernelCertificate
        ``observed`` holds ``size``, ``smoothness`` and ``cancellation``;
        ``details`` holds the doubled-budget values and the shell integrals.
    """
    if budget < 1000:
        raise ValueError("budget must be at least 1000")
    d = kernel.delta if delta is None else float(delta)
    n = kernel.dim
    rng = np.random.default_rng(seed)
    cert = KernelCertificate()
    total = 2 * budget

    x, r = _log_points(rng, n, total)
    size_vals = np.abs(kernel(x)) * r**n
    s1 = _sup_with_witness(size_vals[:budget], x, "size", cert.witnesses)
    s2 = _sup_with_witness(size_vals, x, "size", [])

    x, r = _log_points(rng, n, total)
    y, ry = _pair_offsets(rng, n, x, r)
    with np.errstate(all="ignore"):
        diff = np.abs(kernel(x - y) - kernel(x))
        smooth_vals = diff * r ** (n + d) / ry**d
    m1 = _sup_with_witness(smooth_vals[:budget], x, "smoothness", cert.witnesses)
    m2 = _sup_with_witness(smooth_vals, x, "smoothness", [])

    half = shells // 2
    n_dirs = 64
    with np.errstate(all="ignore"):
        full = shell_integrals(kernel, n, -half, half, n_dirs=n_dirs)
        full2 = shell_integrals(kernel, n, -half, half, n_dirs=2 * n_dirs)
    if np.all(np.isfinite(full)):
        canc = _annulus_sup(full)
        inner = _annulus_sup(full[half // 2: half + half // 2])
        canc2 = _annulus_sup(full2)
        grows = canc > 1.25 * inner + 1e-10
    else:
        bad = int(np.flatnonzero(~np.isfinite(full))[0]) - half
        cert.witnesses.append({"condition": "cancellation", "point": [2.0**bad]})
        canc = inner = canc2 = math.inf
        grows = True

    cert.observed = {"size": s1, "smoothness": m1, "cancellation": canc}
    cert.passed = {
        "size": _stable(s1, s2),
        "smoothness": _stable(m1, m2),
        "cancellation": (not grows) and _stable(canc, canc2) or (canc < 1e-12),
    }
    cert.passed["cancellation"] = bool(cert.passed["cancellation"] and math.isfinite(canc))
    cert.details = {
        "delta": d,
        "budget": budget,
        "doubled": {"size": s2, "smoothness": m2, "cancellation": canc2},
        "cancellation_inner_half": inner,
        "shell_integrals": full.tolist(),
        "shell_growth_ratio": (canc / inner) if inner > 0 else (0.0 if canc == 0 else math.inf),
    }
    return cert


def certify_localizer_eta(eta: Localizer, delta: Optional[float] = None, budget: int = 4000,
                          seed: int = 0, shells: int = 24) -> KernelCertificate:
    """Check boundedness, the local Lipschitz-ratio condition and the decay integrals of ``eta``.

    The decay integrals ``int_{|x|<1} |eta - 1| / |x|^n`` and
    ``int_{|x|>=1} |eta| / |x|^n`` are accumulated shell by shell (towards the
    origin and towards infinity respectively) and declared finite when the
    increments pass :func:`geometric_decay`.
    """
    if eta.kind != "eta":
        raise ValueError("certify_localizer_eta needs an eta-kind localizer")
    d = eta.delta if delta is None else float(delta)
    n = eta.dim
    rng = np.random.default_rng(seed)
    cert = KernelCertificate()
    total = 2 * budget

    x, r = _log_points(rng, n, total, -4, 4)
    bound_vals = np.abs(eta(x))
    b1 = _sup_with_witness(bound_vals[:budget], x, "bounded", cert.witnesses)
    b2 = max(b1, _sup_with_witness(bound_vals, x, "bounded", []))
    at_zero = float(eta(np.zeros((1, n)))[0])

    x, r = _log_points(rng, n, total, -4, 4)
    y, ry = _pair_offsets(rng, n, x, r)
    lip = np.abs(eta(x - y) - eta(x)) * r**d / ry**d
    l1 = _sup_with_witness(lip[:budget], x, "lipschitz", cert.witnesses)
    l2 = _sup_with_witness(lip, x, "lipschitz", [])

    def near(p):
        return np.abs(eta(p) - 1.0) / _norm(p) ** n

    def far(p):
        return np.abs(eta(p)) / _norm(p) ** n

    inner = shell_integrals(near, n, -shells, 0)[::-1]  # from |x|~1 towards 0
    outer = shell_integrals(far, n, 0, shells)
    inner_ok = geometric_decay(inner)
    outer_ok = geometric_decay(outer)

    cert.observed = {
        "sup": b1,
        "eta_at_zero": at_zero,
        "lipschitz": l1,
        "decay_inner": float(inner.sum()),
        "decay_outer": float(outer.sum()),
    }
    cert.passed = {
        "bounded": math.isfinite(b1) and math.isfinite(b2),
        "lipschitz": _stable(l1, l2),
        "decay": bool(inner_ok and outer_ok),
    }
    cert.details = {
        "delta": d,
        "doubled": {"sup": b2, "lipschitz": l2},
        "inner_increments": inner.tolist(),
        "outer_increments": outer.tolist(),
        "inner_converges": inner_ok,
        "outer_converges": outer_ok,
    }
    return cert


def _radial_moment(absfun, dim, lo, hi, n_sub=40, order=8, n_dirs=32):
    """``int_{lo < |y| < hi} absfun(y) dy`` for arrays ``lo``, ``hi`` (log-GL per point)."""
    t, wt = np.polynomial.legendre.leggauss(order)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    a, b = np.log(lo), np.log(hi)
    edges = a[:, None] + (b - a)[:, None] * np.arange(n_sub + 1)[None, :] / n_sub
    mid = 0.5 * (edges[:, 1:] + edges[:, :-1])
    half = 0.5 * (edges[:, 1:] - edges[:, :-1])
    s = mid[..., None] + half[..., None] * t
    w = half[..., None] * wt
    rho = np.exp(s)
    dirs, dw = antipodal_directions(dim, n_dirs)
    vals = absfun(rho[..., None, None] * dirs)
    ang = vals @ dw
    return (ang * rho**dim * w).sum(axis=(1, 2))


def certify_localizer_psi(psi: Localizer, delta: Optional[float] = None,
                          shells: int = 20, seed: int = 0) -> KernelCertificate:
    """Check unit mass, integrability and the two tail integrals required of ``psi``.

    ``observed['integral']`` is the quadrature value of ``int psi``; the unit
    mass condition passes when it is within 1e-6 of one.  The tail integrals
    (a decay integral built from the mass and first moment of ``|psi|`` on and
    off the ball ``|y| <= |x|/2``, and a smoothness integral of
    ``|psi(x - y) - psi(x)| / |y|^n``) are accumulated over dyadic shells
    ``|x| >= 1`` and must pass :func:`geometric_decay`.
    """
    if psi.kind != "psi":
        raise ValueError("certify_localizer_psi needs a psi-kind localizer")
    d = psi.delta if delta is None else float(delta)
    n = psi.dim
    cert = KernelCertificate()
    k_lo, k_hi = -40, 40

    sig = shell_integrals(psi, n, k_lo, k_hi)
    core = float(psi(np.zeros((1, n)))[0]) * unit_ball_volume(n) * 2.0 ** (k_lo * n)
    integral = float(sig.sum() + core)
    l1_sh = shell_integrals(lambda p: np.abs(psi(p)), n, k_lo, k_hi)
    l2_sh = shell_integrals(lambda p: psi(p) ** 2, n, k_lo, k_hi)

    def tails_ok(sh):
        return bool(np.all(np.isfinite(sh)) and geometric_decay(sh) and geometric_decay(sh[::-1]))

    absfun = lambda p: np.abs(psi(p))  # noqa: E731
    rho, w = log_shell_nodes(0, shells, 8)
    flat = rho.ravel()
    far_mass = _radial_moment(absfun, n, flat / 2, flat / 2 * 2.0**40)
    near_moment = _radial_moment(lambda p: _norm(p) ** d * absfun(p), n, flat / 2 * 2.0**-40, flat / 2)
    from ._quadrature import sphere_area

    integrand = far_mass / flat**n + near_moment / flat ** (n + d)
    decay_sh = (integrand.reshape(rho.shape) * sphere_area(n) * rho**n * w).sum(axis=1)

    # smoothness tail: x on shells, y in the ball |y| <= |x| / 2
    rho_s, w_s = log_shell_nodes(0, shells, 6)
    xdirs, xw = antipodal_directions(n, 8)
    ydirs, yw = antipodal_directions(n, 16)
    t, wt = np.polynomial.legendre.leggauss(6)
    n_sub = 30
    smooth_sh = np.zeros(shells)
    for k in range(shells):
        for q in range(rho_s.shape[1]):
            R = rho_s[k, q]
            x = R * xdirs  # (mx, n)
            edges = np.log(R / 2) - np.log(2.0) * np.arange(n_sub, -1, -1)
            mid = 0.5 * (edges[1:] + edges[:-1])
            hw = 0.5 * (edges[1:] - edges[:-1])
            s = (mid[:, None] + hw[:, None] * t).ravel()
            ws = (hw[:, None] * wt).ravel()
            tt = np.exp(s)
            y = tt[:, None, None] * ydirs[None]  # (ns, my, n)
            vals = np.abs(psi(x[:, None, None, :] - y[None]) - psi(x)[:, None, None])
            inner = (vals @ yw) @ ws  # d(log t) measure, |y|^-n cancels t^n
            smooth_sh[k] += (inner @ xw) * R**n * w_s[k, q]

    cert.observed = {
        "integral": integral,
        "l1": float(l1_sh.sum()),
        "l2": float(math.sqrt(max(l2_sh.sum(), 0.0))),
        "decay_integral": float(decay_sh.sum()),
        "smoothness_integral": float(smooth_sh.sum()),
    }
    cert.passed = {
        "unit_integral": abs(integral - 1.0) <= PSI_INTEGRAL_TOL,
        "l1": tails_ok(l1_sh),
        "l2": tails_ok(l2_sh),
        "decay": bool(np.all(np.isfinite(decay_sh)) and geometric_decay(decay_sh)),
        "smoothness": bool(np.all(np.isfinite(smooth_sh)) and geometric_decay(smooth_sh)),
    }
    cert.details = {
        "delta": d,
        "decay_increments": decay_sh.tolist(),
        "smoothness_increments": smooth_sh.tolist(),
    }
    return cert
