"""Experiment configs, the named checks behind them, and report/plot emission.

A config is a flat ``key = value`` text file with ``#`` comments.  It names a
check and fixes every parameter of the run, so the same config always
produces byte-identical CSV output, whatever ``LOCALSIEVE_THREADS`` is.

>>> cfg = ExperimentConfig.from_text("check = thm51\\ntrials = 0\\nN = 256")
>>> run_experiment(cfg).summary["trials"]
0
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import math
import re
import warnings
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ._parallel import pmap, trial_rng, trial_seed
from .atoms import (
    Atom,
    decompose_approx_atom,
    make_approx_h1b_atom,
    make_h1_atom,
    make_perez_h1b_atom,
    validate_atom,
)
from .commutators import (
    B_FAMILY,
    _family_for,
    a_b_quantity,
    builtin_b,
    commutator_l1_experiment,
    commutator_molecule_check,
    default_inhomogeneous_kernel,
    maximal_atom_experiment,
    random_atom_balls,
    sign_atom_identity,
)
from .exceptions import ConfigurationError
from .grid import Ball, Grid, GridFunction, integrate, load_gfn, lp_norm
from .kernels import (
    builtin_kernel,
    builtin_localizer,
    certify_delta_kernel,
    certify_localizer_eta,
    certify_localizer_psi,
    localize,
)
from .operators import apply_fourier_localized, apply_localized, apply_pv, error_kernel_star
from .report import ExperimentReport, format_value, summarize
from .spaces import mean_bound_ratio, oscillation_report, weighted_tail_ratio

__all__ = [
    "ExperimentConfig",
    "CertificateFailure",
    "CHECKS",
    "run_experiment",
    "emit_plot_data",
    "parse_radii",
    "criterion_config",
    "criterion_ids",
    "determinism_rows",
]


class CertificateFailure(ConfigurationError):
    """A kernel or localizer named by a config failed its certificate."""


# ------------------------------------------------------------------ config


_DYADIC = re.compile(r"^2\^(-?\d+)$")


def _number(tok: str) -> float:
    tok = tok.strip()
    m = _DYADIC.match(tok)
    if m:
        return 2.0 ** int(m.group(1))
    try:
        return float(tok)
    except ValueError as exc:
        raise ConfigurationError(f"not a radius: {tok!r}") from exc


def parse_radii(text: str) -> Tuple[float, ...]:
    """``"2^-6..2"`` (dyadic range), ``"0.25, 2^-1, 1"`` or a single value."""
    text = text.strip()
    if not text:
        return ()
    if ".." in text:
        lo, hi = (_number(t) for t in text.split("..", 1))
        klo, khi = math.log2(lo), math.log2(hi)
        if not (klo.is_integer() and khi.is_integer()) or khi < klo:
            raise ConfigurationError(f"bad dyadic range {text!r}")
        return tuple(2.0**k for k in range(int(klo), int(khi) + 1))
    return tuple(_number(t) for t in text.split(","))


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(f"not a boolean: {text!r}")


@dataclass
class ExperimentConfig:
    """Everything that determines one run.

    ``N`` may hold several resolutions; rows from each are concatenated and a
    refinement block compares the coarsest and finest.  ``outdir`` is where
    :func:`run_experiment` writes ``<name>.csv`` and ``<name>.json`` (nothing
    is written when it is empty).
    """

    check: str
    name: str = ""
    kernel: str = "hilbert"
    eta: str = "bump"
    psi: str = "gaussian"
    b: str = "log"
    dim: int = 1
    N: Tuple[int, ...] = (1024,)
    L: float = 8.0
    radii: Tuple[float, ...] = ()
    trials: int = 100
    seed: int = 0
    outdir: str = ""
    mu: Optional[float] = None
    delta: float = 1.0
    p: float = 1.0
    budget: int = 4000
    stride: int = 4
    shell_L: float = 32.0
    control_trials: int = 10
    targets: str = ""
    force: bool = False

    _int_keys = ("dim", "trials", "seed", "budget", "stride", "control_trials")
    _float_keys = ("L", "delta", "p", "shell_L")

    def __post_init__(self):
        if self.check not in CHECKS:
            raise ConfigurationError(f"unknown check {self.check!r}; choose from {', '.join(sorted(CHECKS))}")
        if self.dim not in (1, 2):
            raise ConfigurationError("dim must be 1 or 2")
        if self.trials < 0:
            raise ConfigurationError("trials must be non-negative")
        if not self.N:
            raise ConfigurationError("N needs at least one value")
        for n in self.N:
            if n < 8 or n & (n - 1):
                raise ConfigurationError(f"N must be a power of two >= 8, got {n}")
        if any(r <= 0 for r in self.radii):
            raise ConfigurationError("radii must be positive")
        if not self.name:
            self.name = self.check

    @classmethod
    def from_text(cls, text: str, **overrides) -> "ExperimentConfig":
        kw: Dict[str, object] = {}
        names = {f.name for f in dataclasses.fields(cls)}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"line {lineno}: expected key = value, got {raw!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in names:
                raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
            if key in kw:
                raise ConfigurationError(f"line {lineno}: duplicate key {key!r}")
            kw[key] = value
        kw.update({k: v for k, v in overrides.items() if v is not None})
        if "check" not in kw:
            raise ConfigurationError("config needs a check")
        try:
            return cls(**{k: cls._convert(k, v) for k, v in kw.items()})
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise ConfigurationError(str(exc)) from exc

    @classmethod
    def from_file(cls, path, **overrides) -> "ExperimentConfig":
        try:
            text = Path(path).read_text(encoding="ascii")
        except (OSError, UnicodeDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        return cls.from_text(text, **overrides)

    @classmethod
    def _convert(cls, key: str, value):
        if not isinstance(value, str):
            return value
        if key in cls._int_keys:
            return int(value)
        if key in cls._float_keys:
            return float(value)
        if key == "N":
            return tuple(int(t) for t in value.split(","))
        if key == "radii":
            return parse_radii(value)
        if key == "mu":
            return None if value.lower() in ("", "auto", "none") else float(value)
        if key == "force":
            return _parse_bool(value)
        return value

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name == "N":
                v = ",".join(str(n) for n in v)
            elif f.name == "radii":
                v = ", ".join(format_value(r) for r in v)
            elif v is None:
                v = "auto"
            else:
                v = format_value(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def grids(self) -> List[Grid]:
        return [Grid(self.dim, self.L, n) for n in self.N]


# ------------------------------------------------------------------ certificates


@lru_cache(maxsize=64)
def _kernel_cert(name: str, dim: int, budget: int, seed: int, delta: Optional[float]):
    return certify_delta_kernel(builtin_kernel(name, dim), budget=budget, seed=seed, delta=delta)


@lru_cache(maxsize=64)
def _localizer_cert(name: str, dim: int, budget: int):
    loc = builtin_localizer(name, dim)
    if loc.kind == "eta":
        return certify_localizer_eta(loc, budget=budget)
    return certify_localizer_psi(loc)


def _require(cfg: ExperimentConfig, details: dict, kernel: bool = True, eta: bool = True, psi: bool = False):
    """Certify the objects a check uses; failures stop the run unless ``force`` is set."""
    failures = []
    try:
        if kernel:
            c = _kernel_cert(cfg.kernel, cfg.dim, cfg.budget, cfg.seed, None)
            if not c.ok:
                failures.append(f"kernel {cfg.kernel}: {c.passed}")
        if eta:
            c = _localizer_cert(cfg.eta, cfg.dim, cfg.budget)
            if not c.ok:
                failures.append(f"eta {cfg.eta}: {c.passed}")
        if psi:
            c = _localizer_cert(cfg.psi, cfg.dim, cfg.budget)
            if not c.ok:
                failures.append(f"psi {cfg.psi}: {c.passed}")
    except KeyError as exc:
        raise ConfigurationError(str(exc.args[0])) from exc
    if failures:
        if not cfg.force:
            raise CertificateFailure("certificate failed: " + "; ".join(failures))
        for msg in failures:
            warnings.warn(f"running with a failed certificate ({msg})", RuntimeWarning, stacklevel=3)
        details.setdefault("warnings", []).extend(failures)


def _b_function(cfg: ExperimentConfig, grid: Grid) -> GridFunction:
    if cfg.b.endswith(".gfn"):
        b = load_gfn(cfg.b)
        if b.grid != grid:
            raise ConfigurationError(f"{cfg.b} lives on {b.grid}, the run needs {grid}")
        return b
    return builtin_b(cfg.b, grid, cfg.seed)


def _inhomogeneous(cfg: ExperimentConfig):
    try:
        return default_inhomogeneous_kernel(cfg.dim, cfg.kernel, cfg.eta)
    except KeyError as exc:
        raise ConfigurationError(str(exc.args[0])) from exc


def _radii(cfg: ExperimentConfig, default: Sequence[float]) -> Tuple[float, ...]:
    return tuple(cfg.radii) if cfg.radii else tuple(default)


def _dyadic(lo: int, hi: int) -> Tuple[float, ...]:
    return tuple(2.0**k for k in range(lo, hi + 1))


# ------------------------------------------------------------------ checks


@dataclass
class Check:
    """One named check.

    ``run(cfg, grid, threads, details)`` returns the rows for one grid and may
    add per-grid entries to ``details``; ``verdict(rows, details)`` returns the
    overall pass flag and may add summary entries.  Checks with
    ``per_grid=False`` run once, on the first ``N``.
    """

    columns: List[str]
    run: Callable
    verdict: Callable
    ratio_key: str = "ratio"
    per_grid: bool = True
    refine: bool = True


def _by_n(rows, key, reduce=max):
    out: Dict[int, float] = {}
    for n in sorted({r["N"] for r in rows}):
        vals = [float(r[key]) for r in rows if r["N"] == n]
        out[n] = reduce(vals) if vals else 0.0
    return out


def _stable(vals: Dict[int, float], limit: float = 2.0) -> Tuple[float, bool]:
    v = list(vals.values())
    if len(v) < 2:
        return 1.0, True
    lo, hi = min(v[0], v[-1]), max(v[0], v[-1])
    factor = hi / lo if lo > 0 else (1.0 if hi == 0 else math.inf)
    return factor, factor < limit


# -- kernel certificates


_KERNEL_CASES = (("hilbert", 1, "pass"), ("riesz1", 2, "pass"), ("riesz2", 2, "pass"),
                 ("power", 1, "fail"), ("power", 2, "fail"))


def _run_kernels(cfg, grid, threads, details):
    rows = []
    for name, dim, expect in _KERNEL_CASES:
        c = _kernel_cert(name, dim, cfg.budget, cfg.seed, None)
        shells = np.asarray(c.details["shell_integrals"])
        spread = float(np.ptp(shells) / np.abs(shells).max()) if np.abs(shells).max() > 0 else 0.0
        growth = float(c.details["shell_growth_ratio"])
        linear = bool(abs(growth - 2.0) < 0.05 and spread < 1e-3 and abs(shells).max() > 0)
        if expect == "pass":
            ok = c.ok and c.observed["cancellation"] < 1e-12
        else:
            ok = (not c.passed["cancellation"]) and linear
        rows.append({"kernel": name, "dim": dim, "size": c.observed["size"],
                     "smoothness": c.observed["smoothness"], "cancellation": c.observed["cancellation"],
                     "size_ok": c.passed["size"], "smoothness_ok": c.passed["smoothness"],
                     "cancellation_ok": c.passed["cancellation"], "shell_growth_ratio": growth,
                     "shell_spread": spread, "expected": expect, "passed": bool(ok)})
    return rows


def _verdict_all(rows, details):
    return all(r["passed"] for r in rows)


def _run_inheritance(cfg, grid, threads, details):
    rows = []
    for name, dim in ((cfg.kernel, cfg.dim),):
        k = localize(builtin_kernel(name, dim), builtin_localizer(cfg.eta, dim))
        c = certify_delta_kernel(k, budget=cfg.budget, seed=cfg.seed, delta=cfg.delta)
        rows.append({"kernel": k.name, "dim": dim, "delta": cfg.delta, "size": c.observed["size"],
                     "smoothness": c.observed["smoothness"], "cancellation": c.observed["cancellation"],
                     "size_ok": c.passed["size"], "smoothness_ok": c.passed["smoothness"],
                     "cancellation_ok": c.passed["cancellation"], "passed": c.ok})
    return rows


# -- localization comparison


def _random_compact(grid: Grid, rng: np.random.Generator) -> GridFunction:
    """Gaussian noise on a random box inside the central quarter of ``grid``."""
    n = grid.n
    lo_all, hi_all = n // 2 - n // 8, n // 2 + n // 8
    sl = []
    for _ in range(grid.dim):
        w = int(rng.integers(min(8, n // 8), max(n // 8, 9)))
        w = min(w, hi_all - lo_all)
        s = int(rng.integers(lo_all, hi_all - w + 1))
        sl.append(slice(s, s + w))
    v = np.zeros(grid.shape)
    v[tuple(sl)] = rng.standard_normal(v[tuple(sl)].shape)
    return GridFunction(grid, v)


def _run_localize(cfg, grid, threads, details):
    K = builtin_kernel(cfg.kernel, cfg.dim)
    eta = builtin_localizer(cfg.eta, cfg.dim)
    psi = builtin_localizer(cfg.psi, cfg.dim)
    err = error_kernel_star(K, eta, psi, grid)
    kl1 = err.l1_norm
    details.setdefault("k_star_l1", {})[str(grid.n)] = kl1

    def one(t):
        f = _random_compact(grid, trial_rng(cfg.seed, t))
        d = lp_norm(apply_localized(K, eta, f) - apply_fourier_localized(K, psi, f), 1)
        fl = lp_norm(f, 1)
        ratio = d / fl
        return {"trial": t, "N": grid.n, "diff_l1": d, "f_l1": fl, "ratio": ratio, "k_star_l1": kl1,
                "passed": bool(ratio <= 1.05 * kl1)}

    rows = pmap(one, range(cfg.trials), threads)
    if "shell_profile" not in details:
        sg = Grid(cfg.dim, cfg.shell_L, grid.n)
        prof = error_kernel_star(K, eta, psi, sg)
        incs = prof.shell_increments()
        details["shell_profile"] = [{"L": cfg.shell_L, "N": sg.n, "R": R, "mass": m,
                                     "increment": (float(incs[i - 1]) if i > 0 else m)}
                                    for i, (R, m) in enumerate(prof.shell_profile)]
        details["shell_L"] = cfg.shell_L
        details["shell_k_star_l1"] = prof.l1_norm
        details["shell_tail_decays"] = bool(prof.tail_decays(0.9, 4))
        last = incs[-5:]
        details["shell_last_factors"] = [float(b / a) if a > 0 else 0.0 for a, b in zip(last[:-1], last[1:])]
    return rows


def _verdict_localize(rows, details):
    return all(r["passed"] for r in rows) and bool(details.get("shell_tail_decays", False))


# -- principal value accuracy


def _hilbert_interval_oracle(x: np.ndarray) -> np.ndarray:
    return np.log(np.abs((x + 1) / (x - 1))) / np.pi


def _run_pv(cfg, grid, threads, details):
    if cfg.dim != 1 or cfg.kernel != "hilbert":
        raise ConfigurationError("pv-accuracy compares the Hilbert transform in one dimension")
    finest = Grid(1, cfg.L, max(cfg.N))
    excl = 4 * finest.spacing
    f = grid.sample(lambda p: (np.abs(p[..., 0]) <= 1).astype(float))
    tf = apply_pv(builtin_kernel("hilbert"), f).values
    x = grid.axis
    ex = _hilbert_interval_oracle(x)
    m = np.abs(np.abs(x) - 1) > excl
    err = float(np.linalg.norm((tf - ex)[m]) / np.linalg.norm(ex[m]))
    return [{"N": grid.n, "h": grid.spacing, "exclusion": excl, "error": err}]


def _verdict_pv(rows, details):
    errs = [r["error"] for r in sorted(rows, key=lambda r: r["N"])]
    halves = [a / b for a, b in zip(errs[:-1], errs[1:])]
    details["error_reduction"] = halves
    return bool(errs and errs[-1] < 0.02 and all(h >= 2.0 for h in halves))


# -- atom decomposition


def _atom_setup(cfg, grid, radii):
    b = _b_function(cfg, grid)
    fam = _family_for(grid, radii, cfg.stride)
    rep = oscillation_report(b, fam, 2)
    balls = random_atom_balls(fam, radii, cfg.trials, cfg.seed) if cfg.trials else []
    return b, fam, rep, balls


def _run_decompose(cfg, grid, threads, details):
    radii = _radii(cfg, _dyadic(-6, -1))
    if any(r >= 1 for r in radii):
        raise ConfigurationError("decomposition radii must be below 1")
    b, fam, rep, balls = _atom_setup(cfg, grid, radii)
    c_b = rep.value
    details.setdefault("c_b", {})[str(grid.n)] = c_b

    def one(t):
        ball = balls[t]
        atom = make_approx_h1b_atom(grid, ball, b, seed=trial_seed(cfg.seed, t), c_b=c_b)
        res = decompose_approx_atom(atom, b)
        recon = float(np.abs(res.reconstruct().values - atom.values.values).max())
        ints = [abs(integrate(a.values)) for a in res.atoms if a.ball.is_small]
        valid = all(validate_atom(a, b, kind="approxH1b", c_b=c_b).ok for a in res.atoms)
        ell = res.ell_one_sum
        ok = recon < 1e-12 and max(ints, default=0.0) < 1e-8 and valid and ell <= res.bound
        return {"trial": t, "N": grid.n, "radius": ball.radius, "center": ball.center[0], "k": res.k,
                "pieces": len(res.atoms), "recon_error": recon, "max_abs_integral": max(ints, default=0.0),
                "pieces_valid": valid, "ell_one": ell, "bound": res.bound, "ratio": ell / res.bound,
                "passed": bool(ok)}

    return pmap(one, range(cfg.trials), threads)


# -- commutator on atoms


def _run_commutator_l1(cfg, grid, threads, details):
    K = _inhomogeneous(cfg)
    radii = _radii(cfg, _dyadic(-6, 1))
    b = _b_function(cfg, grid)
    fam = _family_for(grid, radii, cfg.stride)
    rep = commutator_l1_experiment(b, K, cfg.trials, radii, cfg.seed, family=fam, threads=threads)
    key = str(grid.n)
    details.setdefault("bmo", {})[key] = rep.details["bmo"]
    if "spearman_ratio_vs_neglogr" in rep.details:
        details.setdefault("spearman_ratio_vs_neglogr", {})[key] = rep.details["spearman_ratio_vs_neglogr"]
    if cfg.control_trials:
        const = builtin_b("constant", grid)
        ctl = commutator_l1_experiment(const, K, cfg.control_trials, radii, cfg.seed, family=fam,
                                       threads=threads, check_nonconstant=False)
        details.setdefault("control_max_l1", {})[key] = max(r["l1"] for r in ctl.rows)
    return rep.rows


def _verdict_commutator_l1(rows, details):
    factor, stable = _stable(_by_n(rows, "ratio"))
    details["max_ratio_factor"] = factor
    rho = details.get("spearman_ratio_vs_neglogr", {})
    ctl = details.get("control_max_l1", {})
    ok = stable and all(v < 0.5 for v in rho.values()) and all(v < 1e-10 for v in ctl.values())
    return bool(ok and all(r["triangle_ok"] for r in rows))


# -- molecule conclusion


def _run_molecule(cfg, grid, threads, details):
    K = _inhomogeneous(cfg)
    mu = cfg.mu if cfg.mu is not None else 0.5 * min(K.delta, K.extra_decay) * 1.5
    details["mu"] = mu
    radii = _radii(cfg, _dyadic(-6, 1))
    b, fam, rep, balls = _atom_setup(cfg, grid, radii)

    def one(t):
        ball = balls[t]
        a = make_perez_h1b_atom(grid, ball, b, seed=trial_seed(cfg.seed, t))
        cert, cross = commutator_molecule_check(b, K, a, mu)
        r = cert.ratios
        row = {"trial": t, "N": grid.n, "radius": ball.radius, "multiple": cert.multiple,
               "m1": r["m1"], "m2": r["m2"], "m3": r["m3"], "tail_converging": cert.tail_converging,
               "cross_consistent": bool(cross.get("consistent", True)),
               "tstar_ratio": (cross["oscillation"] / cross["log_bound"]) if cross else 0.0,
               "tstar_passed": bool(cross.get("condition_passed", True))}
        return row

    return pmap(one, range(cfg.trials), threads)


def _verdict_molecule(rows, details):
    factor, stable = _stable(_by_n(rows, "multiple"))
    tfac, tstable = _stable(_by_n(rows, "tstar_ratio"))
    details["multiple_factor"] = factor
    details["multiple_by_N"] = {str(k): v for k, v in _by_n(rows, "multiple").items()}
    details["tstar_factor"] = tfac
    return bool(stable and tstable and all(r["cross_consistent"] for r in rows))


# -- maximal commutator


def _run_maximal(cfg, grid, threads, details):
    radii = _radii(cfg, _dyadic(-6, 1))
    b = _b_function(cfg, grid)
    rep = maximal_atom_experiment(b, cfg.trials, radii, cfg.seed, threads=threads)
    key = str(grid.n)
    for k in ("bmo", "max_left", "max_right", "max_outside_2b"):
        details.setdefault(k, {})[key] = rep.details[k]
    return rep.rows


def _verdict_maximal(rows, details):
    factor, stable = _stable(_by_n(rows, "ratio"))
    details["ratio_factor"] = factor
    sandwich = all(math.isfinite(r["left"]) and math.isfinite(r["right"]) for r in rows)
    details["sandwich_constants"] = {"left": max((r["left"] for r in rows), default=0.0),
                                     "right": max((r["right"] for r in rows), default=0.0)}
    vanish = all(r["outside_2b"] == 0.0 for r in rows if r["radius"] >= 1)
    return bool(stable and sandwich and vanish)


# -- lmo rescaling


def _run_rescaled_atoms(cfg, grid, threads, details):
    radii = _radii(cfg, _dyadic(-6, 1))
    b, fam, rep, balls = _atom_setup(cfg, grid, radii)
    gamma = math.log(2) * rep.bmo_loc_2 / rep.lmo_loc_2 if rep.lmo_loc_2 > 0 else math.inf
    details.setdefault("gamma", {})[str(grid.n)] = gamma
    c_b = rep.value

    def one(t):
        ball = balls[t]
        a = make_h1_atom(grid, ball, seed=trial_seed(cfg.seed, t), cancel=True).scaled(gamma)
        a = Atom(a.values, a.ball, "approxH1b")
        c = validate_atom(a, b, c_b=c_b)
        return {"trial": t, "N": grid.n, "radius": ball.radius, "gamma": gamma,
                "size": c.ratios.get("size", 0.0), "mean": c.ratios.get("mean", 0.0),
                "b_moment": c.ratios.get("b_moment", 0.0), "passed": c.ok}

    return pmap(one, range(cfg.trials), threads)


# -- sign atoms


def _run_sign_atoms(cfg, grid, threads, details):
    radii = _radii(cfg, _dyadic(-6, -1))
    b = _b_function(cfg, grid)
    fam = _family_for(grid, radii, cfg.stride)
    rows = []
    for ball in fam.balls():
        if not ball.is_small:
            continue
        left, right = sign_atom_identity(b, ball)
        scale = max(abs(left), abs(right))
        rel = abs(left - right) / scale if scale > 0 else 0.0
        rows.append({"ball": len(rows), "N": grid.n, "center": ball.center[0], "radius": ball.radius,
                     "left": left, "right": right, "ratio": rel, "passed": bool(rel <= 1e-12)})
    return rows


# -- tail and mean ratios


def _run_ratios(cfg, grid, threads, details):
    radii = _radii(cfg, _dyadic(-6, 2))
    fam = _family_for(grid, radii, cfg.stride)
    mid = fam.center_coords(np.array([[grid.n // 2] * grid.dim]))[0]
    rows = []
    for name in B_FAMILY:
        b = builtin_b(name, grid, cfg.seed)
        bmo = oscillation_report(b, fam).value
        for r in radii:
            tr = weighted_tail_ratio(b, Ball(tuple(mid), r), cfg.delta, cfg.p, bmo=bmo)
            rows.append({"suite": "tail", "N": grid.n, "b": name, "radius": r, "trial": 0,
                         "ratio": tr.ratio, "converging": tr.converging})
    mean_radii = [r for r in radii if r < 1 and r >= 8 * grid.spacing][-4:]
    for i, r in enumerate(mean_radii):
        ball = Ball(tuple(mid), r)
        m = ball.mask(grid)
        for t in range(cfg.trials):
            rng = trial_rng(cfg.seed, t, 100 + i)
            v = np.zeros(grid.shape)
            v[m] = 1.0 + rng.uniform(-0.5, 0.5, int(m.sum()))
            rows.append({"suite": "mean", "N": grid.n, "b": "", "radius": r, "trial": t,
                         "ratio": mean_bound_ratio(GridFunction(grid, v), ball), "converging": True})
    return rows


def _verdict_ratios(rows, details):
    tail = [r for r in rows if r["suite"] == "tail"]
    tail_max = _by_n(tail, "ratio")
    factor, stable = _stable(tail_max)
    details["tail_constant"] = max(tail_max.values(), default=0.0)
    details["tail_factor"] = factor
    spread = {}
    for n in sorted({r["N"] for r in rows}):
        per_r: Dict[float, float] = {}
        for r in rows:
            if r["suite"] == "mean" and r["N"] == n:
                per_r[r["radius"]] = max(per_r.get(r["radius"], 0.0), r["ratio"])
        if per_r:
            lo = min(per_r.values())
            spread[str(n)] = max(per_r.values()) / lo if lo > 0 else math.inf
    details["mean_spread"] = spread
    ok_tail = stable and all(r["ratio"] <= details["tail_constant"] for r in tail)
    return bool(ok_tail and all(v < 2.0 for v in spread.values()))


# -- A_b quantity


def _run_a_b(cfg, grid, threads, details):
    radii = _radii(cfg, _dyadic(-6, 1))
    b = _b_function(cfg, grid)
    fam = _family_for(grid, radii, cfg.stride)
    value, ball = a_b_quantity(b, fam, max_balls=max(cfg.trials, 1), seed=cfg.seed)
    return [{"N": grid.n, "ratio": value, "radius": ball.radius if ball else 0.0,
             "center": ball.center[0] if ball else 0.0}]


def _verdict_stable(rows, details):
    factor, stable = _stable(_by_n(rows, "ratio"))
    return bool(stable and all(math.isfinite(r["ratio"]) for r in rows))


CHECKS: Dict[str, Check] = {
    "kernels": Check(["kernel", "dim", "size", "smoothness", "cancellation", "size_ok", "smoothness_ok",
                      "cancellation_ok", "shell_growth_ratio", "shell_spread", "expected", "passed"],
                     _run_kernels, _verdict_all, "cancellation", per_grid=False, refine=False),
    "inheritance": Check(["kernel", "dim", "delta", "size", "smoothness", "cancellation", "size_ok",
                          "smoothness_ok", "cancellation_ok", "passed"],
                         _run_inheritance, _verdict_all, "smoothness", per_grid=False, refine=False),
    "localize-compare": Check(["trial", "N", "diff_l1", "f_l1", "ratio", "k_star_l1", "passed"],
                              _run_localize, _verdict_localize),
    "pv-accuracy": Check(["N", "h", "exclusion", "error"], _run_pv, _verdict_pv, "error", refine=False),
    "decompose": Check(["trial", "N", "radius", "center", "k", "pieces", "recon_error", "max_abs_integral",
                        "pieces_valid", "ell_one", "bound", "ratio", "passed"],
                       _run_decompose, _verdict_all),
    "thm51": Check(["trial", "N", "radius", "center", "pieces", "ratio", "piece_max_ratio", "atom_ratio",
                    "l1", "split_ratio", "triangle_ok"], _run_commutator_l1, _verdict_commutator_l1),
    "thm54": Check(["trial", "N", "radius", "multiple", "m1", "m2", "m3", "tail_converging",
                    "cross_consistent", "tstar_ratio", "tstar_passed"], _run_molecule, _verdict_molecule,
                   "multiple"),
    "prop47": Check(["trial", "N", "radius", "ratio", "dict_l1", "h1_abc", "left", "right", "outside_2b"],
                    _run_maximal, _verdict_maximal),
    "rescaled-atoms": Check(["trial", "N", "radius", "gamma", "size", "mean", "b_moment", "passed"],
                    _run_rescaled_atoms, _verdict_all, "b_moment"),
    "prop412": Check(["ball", "N", "center", "radius", "left", "right", "ratio", "passed"],
                     _run_sign_atoms, _verdict_all, refine=False),
    "ratios": Check(["suite", "N", "b", "radius", "trial", "ratio", "converging"], _run_ratios,
                    _verdict_ratios, refine=False),
    "cor414": Check(["N", "ratio", "radius", "center"], _run_a_b, _verdict_stable),
}
CHECKS["prop48"] = CHECKS["prop47"]


# -- determinism


def _target_list(text: str) -> List[str]:
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if ".." in tok:
            lo, hi = (int(t) for t in tok.split("..", 1))
            out.extend(str(k) for k in range(lo, hi + 1))
        elif tok:
            out.append(tok)
    return out


def determinism_rows(targets: Sequence[str], threads: int = 3,
                     reference: Optional[Dict[str, str]] = None) -> List[dict]:
    """Rerun shipped criterion configs and compare CSV bytes.

    Each target runs with one thread (unless ``reference`` already holds its
    CSV text) and again with ``threads`` threads.
    """
    rows = []
    for t in targets:
        cfg = criterion_config(t)
        ref = (reference or {}).get(t)
        if ref is None:
            ref = run_experiment(cfg, threads=1, outdir="").csv_text()
        again = run_experiment(cfg, threads=threads, outdir="").csv_text()
        rows.append({"criterion": cfg.name, "threads": threads, "bytes": len(ref),
                     "sha256": hashlib.sha256(ref.encode()).hexdigest(),
                     "identical": ref == again, "passed": ref == again})
    return rows


def _run_determinism(cfg, grid, threads, details):
    targets = _target_list(cfg.targets)
    if not targets:
        raise ConfigurationError("determinism needs targets, e.g. targets = 1..11")
    return determinism_rows(targets, threads=3)


CHECKS["determinism"] = Check(["criterion", "threads", "bytes", "sha256", "identical", "passed"],
                              _run_determinism, _verdict_all, "bytes", per_grid=False, refine=False)

_NEEDS = {
    "localize-compare": dict(kernel=True, eta=True, psi=True),
    "pv-accuracy": dict(kernel=True, eta=False),
    "decompose": None,
    "thm51": dict(kernel=True, eta=True),
    "thm54": dict(kernel=True, eta=True),
}


# ------------------------------------------------------------------ running


def run_experiment(config: ExperimentConfig, threads: Optional[int] = None,
                   outdir: Optional[str] = None) -> ExperimentReport:
    """Run the named check over every ``N`` of ``config``.

    Rows are in trial order within each ``N`` and ``N`` ascending.  When an
    output directory is given (argument or ``config.outdir``) the CSV is
    written block by block as each resolution finishes, followed by the JSON
    summary.

    Raises
    ------
    ConfigurationError
        Unknown names or malformed parameters.
    CertificateFailure
        A kernel or localizer certificate failed and ``config.force`` is off.
    """
    chk = CHECKS.get(config.check)
    if chk is None:
        raise ConfigurationError(f"unknown check {config.check!r}")
    details: dict = {"config": config.name, "check": config.check}
    needs = _NEEDS.get(config.check)
    if needs:
        _require(config, details, **needs)
    out = outdir if outdir is not None else config.outdir
    csv_path = None
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        csv_path = Path(out) / f"{config.name}.csv"
        csv_path.write_text(_csv_block(chk.columns, [], header=True))
    grids = config.grids()
    if not chk.per_grid:
        grids = grids[:1]
    rows: List[dict] = []
    for grid in grids:
        try:
            block = chk.run(config, grid, threads, details) if (config.trials or not _trial_based(config)) else []
        except KeyError as exc:
            raise ConfigurationError(str(exc.args[0])) from exc
        rows.extend(block)
        if csv_path is not None:
            with open(csv_path, "a", newline="") as fh:
                fh.write(_csv_block(chk.columns, block, header=False))
    passed = bool(chk.verdict(rows, details)) if rows else (True if not _trial_based(config) else None)
    refinement = None if chk.refine else {"applicable": False}
    report = ExperimentReport(config.check, list(chk.columns), rows, chk.ratio_key, details, passed,
                              refinement, summarize(rows, chk.ratio_key))
    if out:
        Path(out, f"{config.name}.json").write_text(report.json_text())
        shells = details.get("shell_profile")
        if shells:
            cols = ["L", "N", "R", "mass", "increment"]
            Path(out, f"{config.name}-shells.csv").write_text(_csv_block(cols, shells, header=True))
    return report


def _trial_based(config: ExperimentConfig) -> bool:
    return config.check not in ("kernels", "inheritance", "pv-accuracy", "prop412", "ratios", "cor414",
                                "determinism")


def _csv_block(columns: Sequence[str], rows: Sequence[dict], header: bool) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(columns)
    for r in rows:
        w.writerow([format_value(r.get(c, "")) for c in columns])
    return buf.getvalue()


def emit_plot_data(report: ExperimentReport, outdir, stem: Optional[str] = None) -> Tuple[Path, Path]:
    """Write ``<stem>-ratio_vs_radius.csv`` and ``<stem>-ratio_vs_N.csv``.

    The radius series repeats every column of the report with rows stably
    sorted by ``radius`` (report order when there is no radius column).  The
    N series has one line per resolution with the max and median of the
    report's ratio column.
    """
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    stem = stem or report.check
    rows = list(report.rows)
    if "radius" in report.columns:
        rows = sorted(rows, key=lambda r: float(r["radius"]))
    p1 = out / f"{stem}-ratio_vs_radius.csv"
    p1.write_text(_csv_block(report.columns, rows, header=True))
    key = report.ratio_key
    n_rows = []
    for n in sorted({int(r["N"]) for r in report.rows if "N" in r}):
        vals = [float(r[key]) for r in report.rows if int(r.get("N", -1)) == n and key in r]
        n_rows.append({"N": n, "max_ratio": max(vals) if vals else 0.0,
                       "median_ratio": float(np.median(vals)) if vals else 0.0, "trials": len(vals)})
    p2 = out / f"{stem}-ratio_vs_N.csv"
    p2.write_text(_csv_block(["N", "max_ratio", "median_ratio", "trials"], n_rows, header=True))
    return p1, p2


# ------------------------------------------------------------------ shipped configs


_CONFIG_DIR = Path(__file__).with_name("configs")


def criterion_ids() -> List[str]:
    return sorted(p.stem for p in _CONFIG_DIR.glob("criterion-*.cfg"))


def criterion_config(criterion: str, **overrides) -> ExperimentConfig:
    """Config shipped for an acceptance criterion: ``"6"``, ``"06"`` or ``"criterion-06"``."""
    key = str(criterion).strip().lower()
    if key.startswith("criterion-"):
        key = key[len("criterion-"):]
    if not key.isdigit():
        raise ConfigurationError(f"unknown criterion {criterion!r}")
    path = _CONFIG_DIR / f"criterion-{int(key):02d}.cfg"
    if not path.exists():
        raise ConfigurationError(f"no shipped config for criterion {criterion!r}")
    return ExperimentConfig.from_file(path, **overrides)
