"""Atom generators, validators, the molecule validator and the finite decomposition.

Ball measures are discrete (member cell count times ``h^n``), so the
normalizations and cancellations below hold exactly at grid level rather
than up to a boundary-layer error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from ._quadrature import geometric_decay
from .exceptions import AtomConstructionError
from .grid import Ball, Grid, GridFunction, integrate
from .spaces import BallFamily, bmo_norm

__all__ = [
    "ATOM_KINDS",
    "TAU_ATOM",
    "TAU_MOL",
    "Atom",
    "AtomCertificate",
    "MoleculeCertificate",
    "DecompositionResult",
    "ABCReport",
    "make_h1_atom",
    "make_perez_h1b_atom",
    "make_approx_h1b_atom",
    "validate_atom",
    "validate_molecule",
    "decompose_approx_atom",
    "abc_cancellation_product",
    "sign_atom",
    "family_constant",
    "ell_one_bound",
]

ATOM_KINDS = ("goldberg", "approximate12", "perezH1b", "approxH1b")
TAU_ATOM = 1e-8
TAU_MOL = 1e-6


def _log_weight(r: float) -> float:
    return math.log1p(1.0 / r)


@dataclass
class Atom:
    """A grid function supported in ``ball`` together with its kind tag.

    ``certificate`` holds the measured ``l2``, ``linf``, ``integral`` and, when
    a ``b`` was attached at construction, ``b_moment`` = ``int a (b - c_B)``.
    """

    values: GridFunction
    ball: Ball
    kind: str
    certificate: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ATOM_KINDS:
            raise ValueError(f"unknown atom kind {self.kind!r}")
        outside = ~self.ball.mask(self.values.grid)
        if np.any(self.values.values[outside] != 0):
            raise ValueError("atom values must vanish outside the ball")
        if not self.certificate:
            self.certificate = measure(self.values, self.ball)

    @property
    def grid(self) -> Grid:
        return self.values.grid

    def scaled(self, c: float) -> "Atom":
        return Atom(self.values * c, self.ball, self.kind)


def measure(values: GridFunction, ball: Ball, b: Optional[GridFunction] = None) -> Dict[str, float]:
    v = values.values
    g = values.grid
    out = {
        "l2": float(math.sqrt((v * v).sum() * g.cell_volume)),
        "linf": float(np.abs(v).max()),
        "l1": float(np.abs(v).sum() * g.cell_volume),
        "integral": integrate(values),
        "measure": ball.measure(g),
    }
    if b is not None:
        out["b_moment"] = float((v * (b.values - ball.c_b(b))).sum() * g.cell_volume)
        out["b_integral"] = float((v * b.values).sum() * g.cell_volume)
    return out


def _require_ball(grid: Grid, ball: Ball, min_cells: int = 3) -> np.ndarray:
    if not ball.inside_box(grid):
        raise AtomConstructionError(f"{ball} is not inside the box")
    mask = ball.mask(grid)
    if mask.sum() < min_cells:
        raise AtomConstructionError(f"{ball} covers fewer than {min_cells} cells")
    return mask


def make_h1_atom(grid: Grid, ball: Ball, seed: int = 0, cancel: bool = True) -> Atom:
    """Random ``(1,2)`` atom on ``ball`` with ``||a||_2 = |B|^(-1/2)``.

    The mean is removed when ``cancel`` is set and ``r < 1``.
    """
    mask = _require_ball(grid, ball)
    rng = np.random.default_rng(seed)
    vals = np.zeros(grid.shape)
    x = rng.standard_normal(int(mask.sum()))
    if cancel and ball.is_small:
        x = x - x.mean()
    vals[mask] = x
    meas = ball.measure(grid)
    norm = math.sqrt((x * x).sum() * grid.cell_volume)
    vals *= 1.0 / (norm * math.sqrt(meas))
    return Atom(GridFunction(grid, vals), ball, "approximate12")


def _orthonormal_span(cols: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Orthonormal basis (Euclidean) of the column span, dropping degenerate directions."""
    q, r = np.linalg.qr(cols)
    d = np.abs(np.diag(r))
    keep = d > tol * max(d.max(), 1e-300)
    return q[:, keep]


def _perez_core(grid: Grid, ball: Ball, bv: np.ndarray, rng: np.random.Generator,
                retries: int = 8) -> np.ndarray:
    """Random vector on the ball cells orthogonal to ``1`` and ``b``."""
    q = _orthonormal_span(np.stack([np.ones_like(bv), bv - bv.mean()], axis=1))
    for _ in range(retries):
        x = rng.standard_normal(bv.size)
        p = x - q @ (q.T @ x)
        # a second pass removes the rounding residue of the first
        p = p - q @ (q.T @ p)
        if np.linalg.norm(p) > 1e-8 * np.linalg.norm(x):
            return p
    raise AtomConstructionError(f"projection annihilated {retries} random draws on {ball}")


def make_perez_h1b_atom(grid: Grid, ball: Ball, b: GridFunction, seed: int = 0) -> Atom:
    """Random atom with ``int a = int a b = 0`` when ``r < 1``; size only otherwise.

    A constant ``b`` on the ball reduces the constraint set to the mean.
    """
    mask = _require_ball(grid, ball)
    rng = np.random.default_rng(seed)
    bv = b.values[mask]
    if ball.is_small:
        x = _perez_core(grid, ball, bv, rng)
    else:
        x = rng.standard_normal(bv.size)
    meas = ball.measure(grid)
    x = x / (math.sqrt((x * x).sum() * grid.cell_volume) * math.sqrt(meas))
    vals = np.zeros(grid.shape)
    vals[mask] = x
    a = GridFunction(grid, vals)
    return Atom(a, ball, "perezH1b", measure(a, ball, b))


def family_constant(b: GridFunction, family: Optional[BallFamily] = None,
                    balls=()) -> float:
    """``C_b = ||b||_{bmo,2}`` over ``family`` widened to contain ``balls``."""
    if family is None:
        family = BallFamily(b.grid)
    if balls:
        family = family.including(list(balls))
    return bmo_norm(b, family, p=2).value


def make_approx_h1b_atom(grid: Grid, ball: Ball, b: GridFunction, seed: int = 0,
                         mean_budget: float = 1.0, b_budget: float = 0.5,
                         c_b: Optional[float] = None) -> Atom:
    """Approximate ``h^1_b`` atom with prescribed mean and ``b``-moment budgets.

    For ``r < 1`` the atom is ``s P + beta chi_B/|B| + gamma w`` where ``P`` is
    orthogonal to ``1`` and ``b`` on the ball and ``w`` is the normalized
    ``(b - b_B) chi_B``.  The three pieces are mutually orthogonal, so
    ``int a = beta = mean_budget / log(1 + 1/r)^2`` and
    ``int a (b - b_B) = gamma ||w||``, which is set to
    ``b_budget C_b / log(1 + 1/r)``.  ``s`` fills the remaining ``L^2``
    budget.  If ``beta`` and ``gamma`` alone exceed the size bound, ``gamma``
    is reduced and the achieved fraction is recorded as ``b_budget_used``.

    For ``r >= 1`` no cancellation is imposed and a random size-normalized
    function is returned.
    """
    if not 0 <= mean_budget <= 1 or not 0 <= b_budget <= 1:
        raise ValueError("budgets must lie in [0, 1]")
    mask = _require_ball(grid, ball)
    rng = np.random.default_rng(seed)
    meas = ball.measure(grid)
    hv = grid.cell_volume
    bv = b.values[mask]
    m = bv.size
    extra = {}
    if not ball.is_small:
        x = rng.standard_normal(m)
        x = x / (math.sqrt((x * x).sum() * hv) * math.sqrt(meas))
    else:
        if c_b is None:
            c_b = family_constant(b, balls=[ball])
        lg = _log_weight(ball.radius)
        p = _perez_core(grid, ball, bv, rng)
        beta = mean_budget / lg**2
        dev = bv - bv.mean()
        dev_norm = math.sqrt((dev * dev).sum() * hv)
        gamma = 0.0
        used = 0.0
        room = 1.0 / meas - beta**2 / meas
        if room < 0:
            raise AtomConstructionError("mean budget exceeds the size bound")
        if dev_norm > 0 and b_budget > 0:
            target = b_budget * c_b / lg
            # keep at least a tenth of the size budget for the random part
            gamma = min(target / dev_norm, math.sqrt(0.9 * room))
            used = gamma * dev_norm / (c_b / lg) if c_b > 0 else 0.0
        w = dev / dev_norm if dev_norm > 0 else np.zeros(m)
        rest = room - gamma**2
        s = math.sqrt(max(rest, 0.0)) / math.sqrt((p * p).sum() * hv)
        x = s * p + beta / meas + gamma * w
        extra = {"c_b": float(c_b), "b_budget_used": float(used), "mean_budget": float(mean_budget)}
    vals = np.zeros(grid.shape)
    vals[mask] = x
    a = GridFunction(grid, vals)
    cert = measure(a, ball, b)
    cert.update(extra)
    return Atom(a, ball, "approxH1b", cert)


@dataclass
class AtomCertificate:
    """Observed-over-bound ratios and verdicts for one atom."""

    kind: str
    ratios: Dict[str, float]
    passed: Dict[str, bool]
    measured: Dict[str, float]

    @property
    def ok(self) -> bool:
        return all(self.passed.values())

    def to_dict(self) -> dict:
        return {"kind": self.kind, "ok": self.ok, "ratios": dict(sorted(self.ratios.items())),
                "passed": dict(sorted(self.passed.items())), "measured": dict(sorted(self.measured.items()))}


def validate_atom(atom: Atom, b: Optional[GridFunction] = None, kind: Optional[str] = None,
                  c_b: Optional[float] = None, family: Optional[BallFamily] = None,
                  tau: float = TAU_ATOM, slack: float = 1.0) -> AtomCertificate:
    """Re-measure every condition of ``kind`` (default: the atom's own kind).

    Bounds are multiplied by ``slack`` before comparison; exact cancellations
    are tested relative to the matching absolute integral.  The ``b`` kinds
    need ``b``; ``approxH1b`` uses ``c_b`` when given and otherwise computes
    ``||b||_{bmo,2}`` over ``family`` widened to contain the atom's ball.
    """
    kind = atom.kind if kind is None else kind
    if kind not in ATOM_KINDS:
        raise ValueError(f"unknown atom kind {kind!r}")
    if kind in ("perezH1b", "approxH1b") and b is None:
        raise ValueError(f"kind {kind} needs b")
    g = atom.grid
    ball = atom.ball
    r = ball.radius
    v = atom.values.values
    mask = ball.mask(g)
    meas = ball.measure(g)
    mes = measure(atom.values, ball, b)
    ratios: Dict[str, float] = {}
    passed: Dict[str, bool] = {}
    passed["support"] = bool(np.all(v[~mask] == 0))
    ratios["support"] = float(np.abs(v[~mask]).max()) if (~mask).any() else 0.0
    lim = (1 + tau) * slack
    if kind == "goldberg":
        ratios["size"] = mes["linf"] * meas
    else:
        ratios["size"] = mes["l2"] * math.sqrt(meas)
    passed["size"] = ratios["size"] <= lim

    def exact(name, value, scale):
        ratios[name] = abs(value) / scale if scale > 0 else 0.0
        passed[name] = ratios[name] <= tau

    if kind == "goldberg":
        if meas < 1:
            exact("mean", mes["integral"], mes["l1"])
    elif kind == "approximate12":
        ratios["mean"] = abs(mes["integral"]) * _log_weight(r)
        passed["mean"] = ratios["mean"] <= lim
    elif kind == "perezH1b":
        if ball.is_small:
            exact("mean", mes["integral"], mes["l1"])
            exact("b_moment", mes["b_integral"], float(np.abs(v * b.values).sum() * g.cell_volume))
    else:
        if ball.is_small:
            lg = _log_weight(r)
            ratios["mean"] = abs(mes["integral"]) * lg**2
            passed["mean"] = ratios["mean"] <= lim
            if c_b is None:
                c_b = family_constant(b, family, [ball])
            mes["c_b"] = float(c_b)
            if c_b > 0:
                ratios["b_moment"] = abs(mes["b_moment"]) * lg / c_b
            else:
                ratios["b_moment"] = 0.0 if abs(mes["b_moment"]) <= tau * mes["l1"] else math.inf
            passed["b_moment"] = ratios["b_moment"] <= lim
    return AtomCertificate(kind, {k: float(x) for k, x in ratios.items()}, passed, mes)


@dataclass
class MoleculeCertificate:
    """Ratios of the three molecule quantities to their bounds."""

    s: float
    lam: float
    ball: Ball
    m1: float
    m1_bound: float
    m2: float
    m2_bound: float
    m3: float
    m3_bound: float
    tail_increments: List[float]
    tail_converging: bool
    tau: float = TAU_MOL

    @property
    def ratios(self) -> Dict[str, float]:
        return {"m1": self.m1 / self.m1_bound, "m2": self.m2 / self.m2_bound, "m3": self.m3 / self.m3_bound}

    @property
    def multiple(self) -> float:
        """Smallest ``c`` with ``M / c`` a molecule (on the measured conditions)."""
        return max(self.ratios.values())

    @property
    def passed(self) -> bool:
        return self.multiple <= 1 + self.tau

    def to_dict(self) -> dict:
        return {
            "s": self.s, "lambda": self.lam,
            "ball": {"center": list(self.ball.center), "radius": self.ball.radius},
            "m1": self.m1, "m1_bound": self.m1_bound,
            "m2": self.m2, "m2_bound": self.m2_bound,
            "m3": self.m3, "m3_bound": self.m3_bound,
            "ratios": self.ratios, "multiple": self.multiple, "passed": self.passed,
            "tail_increments": self.tail_increments, "tail_converging": self.tail_converging,
        }


def validate_molecule(M: GridFunction, ball: Ball, s: float, lam: float,
                      tau: float = TAU_MOL) -> MoleculeCertificate:
    """Measure the size, weighted tail and mean of ``M`` against ``ball``.

    The tail norm is truncated at the box; its dyadic-shell contributions
    (of the ``s``-th power) and their decay verdict are reported.
    """
    g = M.grid
    n = g.dim
    if not s > 1:
        raise ValueError("need s > 1")
    if not lam > n * (s - 1):
        raise ValueError("need lambda > n (s - 1)")
    r = ball.radius
    mask = ball.mask(g)
    dist = g.distance_from(ball.center)
    av = np.abs(M.values) ** s
    hv = g.cell_volume
    m1 = float((av[mask].sum() * hv) ** (1 / s))
    w = np.where(mask, 0.0, av * dist**lam)
    m2 = float((w.sum() * hv) ** (1 / s))
    m3 = abs(integrate(M))
    incs = []
    k = 0
    far = float(dist.max())
    while r * 2**k < far:
        sh = (~mask) & (dist > r * 2**k) & (dist <= r * 2 ** (k + 1))
        incs.append(float(w[sh].sum() * hv))
        k += 1
    expo = n * (1 / s - 1)
    return MoleculeCertificate(
        s=s, lam=lam, ball=ball,
        m1=m1, m1_bound=r**expo,
        m2=m2, m2_bound=r ** (lam / s + expo),
        m3=m3, m3_bound=1.0 / _log_weight(r),
        tail_increments=incs,
        tail_converging=_tail_converges(incs, m2**s),
        tau=tau,
    )


def _tail_converges(incs: List[float], total: float) -> bool:
    """Geometric decay of the shell contributions, or a tail that ends inside the box."""
    if total == 0 or (incs and incs[-1] == 0.0):
        return True
    return geometric_decay(incs, floor=1e-14 + 1e-12 * total)


@dataclass
class DecompositionResult:
    """Coefficients and atoms with ``A = sum lambda_j a_j``.

    ``balls[j]`` is the support ball of ``atoms[j]``; ``b_residuals[j]`` is the
    measured ``int a_j b`` (exact ``b``-cancellation is not attempted);
    ``bound`` is the closed-form bound on ``ell_one_sum``.
    """

    coefficients: List[float]
    atoms: List[Atom]
    k: int
    alpha: float
    bound: float
    b_residuals: List[float] = field(default_factory=list)

    @property
    def ell_one_sum(self) -> float:
        return float(sum(abs(c) for c in self.coefficients))

    def reconstruct(self) -> GridFunction:
        out = self.atoms[0].values * self.coefficients[0]
        for c, a in zip(self.coefficients[1:], self.atoms[1:]):
            out = out + a.values * c
        return out


def ell_one_bound(r: float, dim: int) -> float:
    return 3.0 + 2.0**dim * (math.log2(1.0 / r) + 1.0) / _log_weight(r)


def decompose_approx_atom(A: Atom, b: Optional[GridFunction] = None) -> DecompositionResult:
    """Split an approximate ``h^1_b`` atom on a small ball into zero-mean pieces.

    With ``alpha = int A`` and ``eta_j`` the normalized indicator of
    ``B_j = B(x0, 2^j r)``, ``j = 0..k`` where ``2^(k-1) r < 1 <= 2^k r``::

        A = (A - alpha eta_0) + sum_j alpha (eta_{j-1} - eta_j) + alpha eta_k

    with coefficients ``2``, ``alpha 2^n log(1 + 1/(2^j r))`` and ``alpha``.
    ``alpha = 0`` returns the single-atom identity decomposition.
    """
    ball = A.ball
    r = ball.radius
    g = A.grid
    if not ball.is_small:
        raise ValueError("decomposition needs a ball of radius < 1")
    n = g.dim
    alpha = integrate(A.values)
    bound = ell_one_bound(r, n)

    def residual(a):
        return float((a.values.values * b.values).sum() * g.cell_volume) if b is not None else math.nan

    if alpha == 0:
        atom = Atom(A.values, ball, "approxH1b")
        return DecompositionResult([1.0], [atom], 0, 0.0, bound, [residual(atom)])
    k = 0
    while 2**k * r < 1:
        k += 1
    balls = [Ball(ball.center, 2**j * r) for j in range(k + 1)]
    for bj in balls:
        if not bj.inside_box(g):
            raise ValueError(f"doubled ball {bj} leaves the box")
    etas = []
    for bj in balls:
        m = bj.mask(g)
        etas.append(GridFunction(g, m / (m.sum() * g.cell_volume)))
    coeffs = [2.0]
    atoms = [Atom((A.values - etas[0] * alpha) * 0.5, ball, "approxH1b")]
    for j in range(1, k + 1):
        lam = alpha * 2.0**n * _log_weight(2**j * r)
        coeffs.append(lam)
        atoms.append(Atom((etas[j - 1] - etas[j]) * (1.0 / (2.0**n * _log_weight(2**j * r))),
                          balls[j], "approxH1b"))
    coeffs.append(alpha)
    atoms.append(Atom(etas[k], balls[k], "approxH1b"))
    return DecompositionResult(coeffs, atoms, k, alpha, bound, [residual(a) for a in atoms])


@dataclass
class ABCReport:
    """``a (b - c_B)`` with its ``L^s`` norms and the two bounds they obey.

    ``norms[s]`` is the measured ``L^s`` norm; ``holder[s]`` is
    ``||a||_2 ||b - c_B||_{L^p(B)}`` and ``bmo_bound[s]`` is
    ``||b||_{bmo,p} |B|^(1/s - 1)`` with ``1/2 + 1/p = 1/s``.
    """

    product: GridFunction
    norms: Dict[float, float]
    holder: Dict[float, float]
    bmo_bound: Dict[float, float]

    @property
    def ratios(self) -> Dict[float, float]:
        return {s: (self.norms[s] / self.bmo_bound[s] if self.bmo_bound[s] > 0 else 0.0) for s in self.norms}


def abc_cancellation_product(a: Atom, b: GridFunction, family: Optional[BallFamily] = None) -> ABCReport:
    g = a.grid
    ball = a.ball
    mask = ball.mask(g)
    dev = np.where(mask, b.values - ball.c_b(b), 0.0)
    prod = GridFunction(g, a.values.values * dev)
    hv = g.cell_volume
    meas = ball.measure(g)
    l2 = math.sqrt((a.values.values ** 2).sum() * hv)
    fam = (family or BallFamily(g)).including([ball])
    norms, holder, bound = {}, {}, {}
    for s, p in ((1.0, 2), (1.5, 6)):
        norms[s] = float((np.abs(prod.values) ** s).sum() * hv) ** (1 / s)
        holder[s] = l2 * float((np.abs(dev) ** p).sum() * hv) ** (1 / p)
        bound[s] = bmo_norm(b, fam, p).value * meas ** (1 / s - 1)
    return ABCReport(prod, norms, holder, bound)


def sign_atom(ball: Ball, b: GridFunction) -> Atom:
    """``(s - s_B) chi_B / |B|`` with ``s = sgn(b - b_B)`` (``sgn(b)`` without ``s_B`` if ``r >= 1``)."""
    g = b.grid
    mask = _require_ball(g, ball, 1)
    meas = ball.measure(g)
    if ball.is_small:
        s = np.sign(b.values - ball.mean(b))
        vals = np.where(mask, s - s[mask].mean(), 0.0) / meas
    else:
        vals = np.where(mask, np.sign(b.values), 0.0) / meas
    return Atom(GridFunction(g, vals), ball, "approximate12")
