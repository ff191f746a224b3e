"""Commutators ``[b, T]`` on atoms, the per-ball adjoint ``T*_B(b)``, and the atom sweeps.

``T`` is an inhomogeneous operator with a two-argument kernel ``K(x, y)``.
Kernels of the form ``K0(x - y)`` take the convolution fast path of
:func:`localsieve.operators.apply_pv`; general kernels are summed directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy import stats

from ._parallel import pmap, trial_rng, trial_seed
from .atoms import (
    Atom,
    MoleculeCertificate,
    TAU_ATOM,
    decompose_approx_atom,
    make_approx_h1b_atom,
    make_h1_atom,
    sign_atom,
    validate_molecule,
)
from .exceptions import ConfigurationError, GridMismatchError
from .grid import Ball, Grid, GridFunction, integrate, lp_norm
from .kernels import ConvolutionKernel, builtin_kernel, builtin_localizer, localize
from .operators import _check_eps, apply_pv
from .report import ExperimentReport
from .spaces import (
    BallFamily,
    TestDictionary,
    ball_commutator_maximal,
    bmo_norm,
    commutator_maximal_lower,
    h1_norm_estimate,
)

__all__ = [
    "InhomogeneousKernel",
    "CommutatorCertificate",
    "TStarCondition",
    "apply_inhomogeneous",
    "commutator_apply",
    "commutator_split",
    "commutator_certificate",
    "commutator_l1_experiment",
    "t_star_pairing",
    "t_star_function",
    "t_star_b_condition",
    "commutator_molecule_check",
    "maximal_atom_experiment",
    "sign_atom_identity",
    "a_b_quantity",
    "builtin_b",
    "B_FAMILY",
    "default_inhomogeneous_kernel",
    "random_atom_balls",
]


@dataclass(frozen=True)
class InhomogeneousKernel:
    """Two-argument kernel ``K(x, y)`` with size, smoothness and extra decay.

    ``evaluator`` takes arrays ``x`` and ``y`` of shape ``(..., dim)``.  When
    ``convolution`` is set, ``K(x, y) = convolution(x - y)`` and operators use
    the lattice-convolution path.
    """

    evaluator: Callable[[np.ndarray, np.ndarray], np.ndarray]
    dim: int
    delta: float = 1.0
    extra_decay: float = 1.0
    size_constant: float = 1.0
    name: str = "kernel"
    convolution: Optional[ConvolutionKernel] = None

    @classmethod
    def from_convolution(cls, kernel: ConvolutionKernel) -> "InhomogeneousKernel":
        if kernel.extra_decay is None:
            raise ValueError(f"{kernel.name} has no extra decay; localize it first")
        return cls(lambda x, y, k=kernel: k(x - y), kernel.dim, kernel.delta, kernel.extra_decay,
                   kernel.size_constant, kernel.name, kernel)

    def __call__(self, x, y) -> np.ndarray:
        return self.evaluator(np.asarray(x, dtype=float), np.asarray(y, dtype=float))

    def transposed(self) -> "InhomogeneousKernel":
        """``K^t(x, y) = K(y, x)``."""
        conv = self.convolution.reflected() if self.convolution is not None else None
        ev = self.evaluator
        return InhomogeneousKernel(lambda x, y: ev(y, x), self.dim, self.delta, self.extra_decay,
                                   self.size_constant, f"{self.name}^t", conv)

    def size_check(self, samples: int = 4000, seed: int = 0, spread: float = 8.0) -> float:
        """Observed ``sup |K(x,y)| / min(|x-y|^-n, |x-y|^(-n-eps))`` over random pairs."""
        rng = np.random.default_rng(seed)
        x = rng.uniform(-spread, spread, (samples, self.dim))
        d = np.exp(rng.uniform(math.log(1e-3), math.log(4 * spread), samples))
        u = rng.standard_normal((samples, self.dim))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        y = x - d[:, None] * u
        envelope = np.minimum(d ** -self.dim, d ** (-self.dim - self.extra_decay))
        return float(np.max(np.abs(self(x, y)) / envelope))


def default_inhomogeneous_kernel(dim: int = 1, kernel: str = "hilbert", eta: str = "bump") -> InhomogeneousKernel:
    """The localized kernel ``K0(x - y) eta(x - y)`` (standard bump by default)."""
    base = builtin_kernel(kernel, dim)
    return InhomogeneousKernel.from_convolution(localize(base, builtin_localizer(eta, dim)))


def apply_inhomogeneous(K: InhomogeneousKernel, f: GridFunction, eps: Optional[float] = None) -> GridFunction:
    """``(Tf)(x_i) = h^n sum_{|x_i - x_j| >= eps} K(x_i, x_j) f(x_j)``."""
    g = f.grid
    if K.dim != g.dim:
        raise GridMismatchError(f"kernel dim {K.dim} != grid dim {g.dim}")
    eps = _check_eps(g, eps)
    if K.convolution is not None:
        return apply_pv(K.convolution, f, eps)
    pts = g.points.reshape(-1, g.dim)
    fv = f.values.ravel()
    src = np.flatnonzero(fv)
    out = np.zeros(pts.shape[0])
    if src.size:
        ys = pts[src]
        tol = 1e-9 * g.spacing
        block = max(1, 2**20 // src.size)
        for start in range(0, pts.shape[0], block):
            xs = pts[start:start + block]
            d = np.sqrt(((xs[:, None, :] - ys[None, :, :]) ** 2).sum(axis=-1))
            keep = d >= eps - tol
            kv = np.zeros(d.shape)
            xx = np.broadcast_to(xs[:, None, :], d.shape + (g.dim,))
            yy = np.broadcast_to(ys[None, :, :], d.shape + (g.dim,))
            kv[keep] = K(xx[keep], yy[keep])
            out[start:start + block] = kv @ fv[src]
    return f.with_values(out.reshape(g.shape) * g.cell_volume)


def commutator_split(b: GridFunction, K: InhomogeneousKernel, a: Atom, eps: Optional[float] = None):
    """The two terms ``(b - c_B) T a`` and ``T(a (b - c_B))``, ``c_B`` from the atom's ball."""
    if b.grid != a.grid:
        raise GridMismatchError("b and the atom live on different grids")
    c = a.ball.c_b(b)
    dev = b - c
    first = dev * apply_inhomogeneous(K, a.values, eps)
    second = apply_inhomogeneous(K, a.values * dev, eps)
    return first, second


def commutator_apply(b: GridFunction, K: InhomogeneousKernel, a: Atom, eps: Optional[float] = None) -> GridFunction:
    """``[b, T] a = (b - c_B) T a - T(a (b - c_B))``."""
    first, second = commutator_split(b, K, a, eps)
    return first - second


@dataclass
class CommutatorCertificate:
    l1_norm: float
    bmo_norm: float
    ratio: float
    split_terms: tuple
    molecule: Optional[MoleculeCertificate] = None

    @property
    def triangle_ok(self) -> bool:
        return self.l1_norm <= (self.split_terms[0] + self.split_terms[1]) * (1 + 1e-12)


def commutator_certificate(b: GridFunction, K: InhomogeneousKernel, a: Atom, bmo: float,
                           eps: Optional[float] = None) -> CommutatorCertificate:
    first, second = commutator_split(b, K, a, eps)
    l1 = lp_norm(first - second, 1)
    split = (lp_norm(first, 1), lp_norm(second, 1))
    return CommutatorCertificate(l1, bmo, l1 / bmo if bmo > 0 else math.inf, split)


# ------------------------------------------------------------------ b test family


def _clipped_log(grid: Grid) -> np.ndarray:
    # cell centres avoid the origin, so the clip is at |x| = h/2
    return np.log(1.0 / grid.distance_from(np.zeros(grid.dim)))


def _cone(grid: Grid) -> np.ndarray:
    return np.clip(1.0 - grid.distance_from(np.zeros(grid.dim)), 0.0, None)


B_FAMILY = ("log", "cone", "random", "constant", "stepbump")


def builtin_b(name: str, grid: Grid, seed: int = 0) -> GridFunction:
    """Test functions: clipped log, Lipschitz cone, random bounded, constant, constant plus step.

    ``constant:<c>`` selects the value of the constant (default 1).
    """
    base, _, arg = name.partition(":")
    if base == "log":
        v = _clipped_log(grid)
    elif base in ("cone", "lipschitz"):
        v = _cone(grid)
    elif base == "random":
        v = np.random.default_rng(seed).uniform(-1.0, 1.0, grid.shape)
    elif base == "constant":
        v = np.full(grid.shape, float(arg) if arg else 1.0)
    elif base == "stepbump":
        v = 1.0 + (grid.distance_from(np.zeros(grid.dim)) <= 0.5)
    else:
        raise ConfigurationError(f"unknown b {name!r}; choose from {', '.join(B_FAMILY)}")
    return GridFunction(grid, v)


def random_atom_balls(family: BallFamily, radii: Sequence[float], trials: int, seed: int,
                      reach: float = 2.0) -> List[Ball]:
    """Trial balls cycling through ``radii`` with centres drawn from the family near the origin.

    Centres are family centres, so the concentric doublings used by the
    decomposition are family balls whenever their radii are.
    """
    cc = family.center_coords(family.center_indices)
    near = cc[np.all(np.abs(cc) <= reach * (1 + 1e-12), axis=1)]
    if len(near) == 0:
        raise ConfigurationError("no family centre within reach of the origin")
    out = []
    for t in range(trials):
        rng = trial_rng(seed, t, 1)
        out.append(Ball(tuple(near[rng.integers(len(near))]), float(radii[t % len(radii)])))
    return out


def _family_for(grid: Grid, radii: Sequence[float], stride: int = 4) -> BallFamily:
    base = BallFamily(grid, stride=stride)
    rs = sorted(set(base.radii) | {float(r) for r in radii})
    return BallFamily(grid, stride=stride, r_max=max(rs), radii=rs)


# ------------------------------------------------------------------ experiments


def commutator_l1_experiment(b: GridFunction, K: InhomogeneousKernel, trials: int,
                             radii: Sequence[float], seed: int = 0, eps: Optional[float] = None,
                             family: Optional[BallFamily] = None, threads: Optional[int] = None,
                             check_nonconstant: bool = True) -> ExperimentReport:
    """``||[b,T] a||_1 / ||b||_bmo`` over generated approximate ``h^1_b`` atoms.

    Atoms on balls with ``r < 1`` are first split into zero-mean pieces by
    :func:`decompose_approx_atom`.  The trial ``ratio`` uses the zero-mean
    piece supported on the trial ball itself; ``piece_max_ratio`` is the
    largest ratio over all pieces (the doubled-ball pieces are shared by
    concentric trials) and ``atom_ratio`` is the value for the undecomposed
    atom.
    """
    g = b.grid
    family = family or _family_for(g, radii)
    if check_nonconstant and np.ptp(b.values) == 0:
        raise ConfigurationError("b must be nonconstant")
    bmo = bmo_norm(b, family).value
    c_b = bmo_norm(b, family, 2).value
    balls = random_atom_balls(family, radii, trials, seed)
    denom = bmo if bmo > 0 else 1.0

    def one(t):
        ball = balls[t]
        atom = make_approx_h1b_atom(g, ball, b, seed=trial_seed(seed, t), c_b=c_b)
        pieces = decompose_approx_atom(atom, b).atoms if ball.is_small else [atom]
        certs = [commutator_certificate(b, K, p, denom, eps) for p in pieces]
        whole = lp_norm(commutator_apply(b, K, atom, eps), 1)
        return {"trial": t, "N": g.n, "radius": ball.radius, "center": ball.center[0],
                "pieces": len(pieces), "ratio": certs[0].l1_norm / denom,
                "piece_max_ratio": max(c.l1_norm for c in certs) / denom,
                "atom_ratio": whole / denom, "l1": certs[0].l1_norm,
                "split_ratio": sum(certs[0].split_terms) / denom,
                "triangle_ok": all(c.triangle_ok for c in certs)}

    rows = pmap(one, range(trials), threads)
    details = {"bmo": bmo, "c_b": c_b, "N": g.n, "L": g.half_width, "kernel": K.name}
    if len(rows) >= 3:
        rr = np.array([r["ratio"] for r in rows])
        lr = -np.log([r["radius"] for r in rows])
        if np.ptp(lr) > 0 and np.ptp(rr) > 0:
            details["spearman_ratio_vs_neglogr"] = float(stats.spearmanr(lr, rr).statistic)
        else:
            details["spearman_ratio_vs_neglogr"] = 0.0
    cols = ["trial", "N", "radius", "center", "pieces", "ratio", "piece_max_ratio", "atom_ratio", "l1",
            "split_ratio", "triangle_ok"]
    return ExperimentReport("thm51", cols, rows, details=details)


def t_star_function(K: InhomogeneousKernel, b: GridFunction, ball: Ball,
                    eps: Optional[float] = None) -> GridFunction:
    """Representative of ``T*_B(b)`` on the ball: the transposed operator applied to ``b - b_B``.

    Values outside the ball are zeroed; the function is defined modulo
    constants.
    """
    dev = b - ball.mean(b)
    f = apply_inhomogeneous(K.transposed(), dev, eps)
    return f.with_values(np.where(ball.mask(b.grid), f.values, 0.0))


def t_star_pairing(K: InhomogeneousKernel, b: GridFunction, ball: Ball, g: GridFunction,
                   eps: Optional[float] = None, tau: float = TAU_ATOM) -> float:
    """``int (b - b_B) T g`` for ``g`` supported in the ball with zero integral."""
    grid = g.grid
    if np.any(g.values[~ball.mask(grid)] != 0):
        raise ValueError("g must be supported in the ball")
    l1 = float(np.abs(g.values).sum() * grid.cell_volume)
    if abs(integrate(g)) > tau * max(l1, 1e-300):
        raise ValueError("the pairing needs a test function with zero integral")
    dev = b - ball.mean(b)
    return integrate(dev * apply_inhomogeneous(K, g, eps))


@dataclass
class TStarCondition:
    oscillation: float
    bound: float
    passed: bool
    function: GridFunction = field(repr=False)

    @property
    def ratio(self) -> float:
        return self.oscillation / self.bound


def t_star_b_condition(K: InhomogeneousKernel, b: GridFunction, ball: Ball,
                       eps: Optional[float] = None) -> TStarCondition:
    """``(mean_B |f - f_B|^2)^(1/2)`` for ``f = T*_B(b)`` against ``log(1 + 1/r)``."""
    if not ball.is_small:
        raise ValueError("the condition concerns balls with r < 1")
    f = t_star_function(K, b, ball, eps)
    m = ball.mask(b.grid)
    v = f.values[m]
    osc = float(math.sqrt(((v - v.mean()) ** 2).mean()))
    bound = math.log1p(1.0 / ball.radius)
    return TStarCondition(osc, bound, osc <= bound, f)


def commutator_molecule_check(b: GridFunction, K: InhomogeneousKernel, a: Atom, mu: float,
                              eps: Optional[float] = None):
    """Molecule quantities of ``(b - c_B) T a`` on the doubled ball.

    Returns ``(certificate, cross)`` where ``cross`` compares ``|int M|`` with
    the bound ``osc(T*_B b) ||a||_2 |B|^(1/2)`` for small balls.
    """
    lim = 1.5 * min(K.delta, K.extra_decay)
    if not 0 < mu < lim:
        raise ValueError(f"mu must lie in (0, {lim})")
    n = a.grid.dim
    first, _ = commutator_split(b, K, a, eps)
    cert = validate_molecule(first, a.ball.dilate(2.0), 1.5, n / 2 + mu)
    cross = {}
    if a.ball.is_small:
        cond = t_star_b_condition(K, b, a.ball, eps)
        hv = a.grid.cell_volume
        l2 = math.sqrt(float((a.values.values ** 2).sum()) * hv)
        meas = a.ball.measure(a.grid)
        bound = cond.oscillation * l2 * math.sqrt(meas)
        cross = {"integral": cert.m3, "pairing_bound": bound, "oscillation": cond.oscillation,
                 "log_bound": cond.bound, "condition_passed": cond.passed,
                 "consistent": cert.m3 <= bound * (1 + 1e-9) + 1e-13}
    return cert, cross


def maximal_atom_experiment(b: GridFunction, trials: int, radii: Sequence[float], seed: int = 0,
                            family: Optional[BallFamily] = None,
                            dictionary: Optional[TestDictionary] = None,
                            threads: Optional[int] = None) -> ExperimentReport:
    """``||M_b a||_1 / ||b||_bmo`` and the two-sided comparison for generated atoms.

    Per trial two atoms share a ball: an approximate ``h^1_b`` atom for the
    ball-family ratio and an ``h^1`` atom (zero mean when ``r < 1``) for the
    comparison of ``X = ||M_b a||_1`` (dictionary lower bound) with
    ``Y = h1_norm_estimate(a (b - c_B))``: ``left = X / (Y + bmo)`` and
    ``right = Y / (X + bmo)``.  For ``r >= 1`` the dictionary output outside
    ``2B`` is recorded in ``outside_2b`` (it must vanish).
    """
    g = b.grid
    if family is None:
        family = BallFamily(g, r_max=1.0)
    if dictionary is None:
        dictionary = TestDictionary(g)
    bmo_fam = _family_for(g, radii)
    bmo = bmo_norm(b, bmo_fam).value
    if bmo == 0:
        raise ConfigurationError("b must be nonconstant")
    c_b = bmo_norm(b, bmo_fam, 2).value
    balls = random_atom_balls(bmo_fam, radii, trials, seed)

    def one(t):
        ball = balls[t]
        s = trial_seed(seed, t)
        atom = make_approx_h1b_atom(g, ball, b, seed=s, c_b=c_b)
        mb = lp_norm(ball_commutator_maximal(b, atom.values, family), 1)
        h1a = make_h1_atom(g, ball, seed=s + 1, cancel=True)
        lower = commutator_maximal_lower(b, h1a.values, dictionary)
        x = lp_norm(lower, 1)
        dev = b - ball.c_b(b)
        y = h1_norm_estimate(h1a.values * dev)
        outside = 0.0
        if not ball.is_small:
            far = g.distance_from(ball.center) > 2 * ball.radius
            outside = float(np.abs(lower.values[far]).max()) if far.any() else 0.0
        return {"trial": t, "N": g.n, "radius": ball.radius, "ratio": mb / bmo,
                "dict_l1": x, "h1_abc": y, "left": x / (y + bmo), "right": y / (x + bmo),
                "outside_2b": outside}

    rows = pmap(one, range(trials), threads)
    details = {"bmo": bmo, "c_b": c_b, "N": g.n, "L": g.half_width,
               "max_left": max((r["left"] for r in rows), default=0.0),
               "max_right": max((r["right"] for r in rows), default=0.0),
               "max_outside_2b": max((r["outside_2b"] for r in rows), default=0.0)}
    cols = ["trial", "N", "radius", "ratio", "dict_l1", "h1_abc", "left", "right", "outside_2b"]
    return ExperimentReport("prop47", cols, rows, details=details)


def sign_atom_identity(b: GridFunction, ball: Ball):
    """``(log(1+1/r) mean_B |b - b_B|, log(1+1/r) |int a b|)`` for the sign atom of ``ball``."""
    if not ball.is_small:
        raise ValueError("the identity concerns balls with r < 1")
    a = sign_atom(ball, b)
    lg = math.log1p(1.0 / ball.radius)
    m = ball.mask(b.grid)
    osc = float(np.abs(b.values[m] - b.values[m].mean()).mean())
    pairing = abs(integrate(a.values * b))
    return lg * osc, lg * pairing


def a_b_quantity(b: GridFunction, family: BallFamily, max_balls: int = 200, seed: int = 0,
                 scales: Optional[Sequence[float]] = None):
    """``sup_B ||(|b - c_B|) chi_B||_h1 / |B|`` over up to ``max_balls`` family balls.

    ``c_B`` follows the ball rule.  Balls are subsampled deterministically
    when the family is larger.  Returns ``(value, argmax ball)``.
    """
    balls = list(family.balls())
    if len(balls) > max_balls:
        idx = np.sort(np.random.default_rng(seed).choice(len(balls), max_balls, replace=False))
        balls = [balls[i] for i in idx]
    best, arg = 0.0, None
    g = b.grid
    for ball in balls:
        m = ball.mask(g)
        v = np.where(m, np.abs(b.values - ball.c_b(b)), 0.0)
        val = h1_norm_estimate(GridFunction(g, v), scales) / ball.measure(g)
        if val > best:
            best, arg = val, ball
    return best, arg
