"""Command line entry point ``localsieve``.

Exit status: 0 when every check passed, 1 when a check failed, 2 for a
configuration error (bad flags, unknown names, unreadable inputs, or a
failed kernel certificate without ``--force``).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import List, Optional

from .acceptance import run_acceptance
from .atoms import Atom, decompose_approx_atom, family_constant, validate_atom
from .exceptions import AtomConstructionError, ConfigurationError, GridMismatchError
from .experiments import ExperimentConfig, criterion_ids, emit_plot_data, parse_radii, run_experiment
from .grid import Ball, load_gfn
from .kernels import builtin_kernel, certify_delta_kernel, kernel_from_grid_function
from .report import _clean, format_value
from .spaces import BallFamily, oscillation_report

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _dump(doc) -> str:
    return json.dumps(_clean(doc), sort_keys=True, indent=2)


def _load(path: str, what: str):
    try:
        return load_gfn(path)
    except (OSError, ValueError) as exc:
        raise ConfigurationError(f"cannot read {what} {path}: {exc}") from exc


# ------------------------------------------------------------------ subcommands


def cmd_certify_kernel(args) -> int:
    if args.kernel.endswith(".gfn"):
        kernel = kernel_from_grid_function(_load(args.kernel, "kernel"), delta=args.delta or 1.0)
    else:
        try:
            kernel = builtin_kernel(args.kernel, args.dim)
        except KeyError as exc:
            raise ConfigurationError(str(exc.args[0])) from exc
    if args.budget < 1000:
        raise ConfigurationError("--budget must be at least 1000")
    cert = certify_delta_kernel(kernel, budget=args.budget, seed=args.seed, delta=args.delta)
    doc = {"kernel": kernel.name, "dim": kernel.dim, "seed": args.seed, **cert.to_dict()}
    print(_dump(doc))
    return EXIT_OK if cert.ok else EXIT_FAIL


def _experiment(args, check: str, **fields) -> int:
    cfg = ExperimentConfig(check=check, **{k: v for k, v in fields.items() if v is not None})
    rep = run_experiment(cfg, outdir=args.out)
    if args.plot:
        emit_plot_data(rep, args.out, cfg.name)
    doc = {"check": rep.check, "passed": rep.passed, "summary": rep.summary, "refinement": rep.refinement,
           "csv": str(Path(args.out) / f"{cfg.name}.csv")}
    print(_dump(doc))
    return EXIT_OK if rep.passed in (True, None) else EXIT_FAIL


def cmd_localize_compare(args) -> int:
    return _experiment(args, "localize-compare", kernel=args.kernel, eta=args.eta, psi=args.psi,
                       N=(args.N,), L=args.L, trials=args.trials, seed=args.seed, dim=args.dim,
                       shell_L=args.shell_L, force=args.force)


def cmd_commutator_suite(args) -> int:
    fields = dict(kernel=args.kernel, eta=args.eta, b=args.b, trials=args.trials, seed=args.seed,
                  N=tuple(args.N), L=args.L, dim=args.dim, force=args.force, mu=args.mu)
    if args.radii:
        fields["radii"] = parse_radii(args.radii)
    return _experiment(args, args.check, **fields)


def cmd_norms(args) -> int:
    f = _load(args.input, "input")
    kw = {}
    if args.radii:
        kw["radii"] = list(parse_radii(args.radii))
    fam = BallFamily(f.grid, stride=args.family_stride, **kw)
    rep = oscillation_report(f, fam, args.p)
    if args.report == "json":
        doc = {"input": args.input, "family_stride": args.family_stride, "balls": len(fam),
               "value": rep.value, **rep.to_dict()}
        print(_dump(doc))
    else:
        cols = ["radius", "rule", "balls", "sup_oscillation"]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for row in rep.per_radius:
            w.writerow([format_value(row[c]) for c in cols])
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def _parse_ball(text: str, dim: int) -> Ball:
    try:
        parts = [float(t) for t in text.split(",")]
    except ValueError as exc:
        raise ConfigurationError(f"--ball expects numbers, got {text!r}") from exc
    if len(parts) != dim + 1:
        raise ConfigurationError(f"--ball needs {dim} centre coordinate(s) and a radius")
    if parts[-1] <= 0:
        raise ConfigurationError("ball radius must be positive")
    return Ball(tuple(parts[:-1]), parts[-1])


def cmd_atom_decompose(args) -> int:
    a = _load(args.input, "atom")
    b = _load(args.b, "b")
    if a.grid != b.grid:
        raise ConfigurationError("atom and b live on different grids")
    ball = _parse_ball(args.ball, a.grid.dim)
    try:
        atom = Atom(a, ball, "approxH1b")
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc
    c_b = family_constant(b, BallFamily(a.grid, stride=args.family_stride), [ball])
    input_cert = validate_atom(atom, b, c_b=c_b)
    doc = {"ball": {"center": list(ball.center), "radius": ball.radius}, "c_b": c_b,
           "input_certificate": input_cert.to_dict()}
    if not ball.is_small:
        doc.update({"coefficients": [1.0], "certificates": [input_cert.to_dict()],
                    "ell_one": {"sum": 1.0, "bound": math.nan, "passed": True}})
        print(_dump(doc))
        return EXIT_OK if input_cert.ok else EXIT_FAIL
    try:
        res = decompose_approx_atom(atom, b)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc
    certs = [validate_atom(p, b, c_b=c_b) for p in res.atoms]
    recon = float(abs(res.reconstruct().values - a.values).max())
    doc.update({
        "alpha": res.alpha, "k": res.k, "coefficients": res.coefficients,
        "balls": [{"center": list(p.ball.center), "radius": p.ball.radius} for p in res.atoms],
        "certificates": [c.to_dict() for c in certs],
        "b_residuals": res.b_residuals,
        "reconstruction_error": recon,
        "ell_one": {"sum": res.ell_one_sum, "bound": res.bound, "passed": res.ell_one_sum <= res.bound},
    })
    print(_dump(doc))
    ok = input_cert.ok and all(c.ok for c in certs) and res.ell_one_sum <= res.bound
    return EXIT_OK if ok else EXIT_FAIL


def cmd_reproduce(args) -> int:
    ids = criterion_ids() if args.criterion == "all" else [args.criterion]
    try:
        results = run_acceptance(ids, threads=args.threads, outdir=args.out)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc
    if args.plot and args.out:
        for r in results:
            emit_plot_data(r.report, args.out, r.name)
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="localsieve", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("certify-kernel", help="sample the delta-kernel conditions of a kernel")
    p.add_argument("kernel", help="built-in name (hilbert, riesz1, power, ...) or a .gfn sampled kernel")
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--budget", type=int, default=4000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_certify_kernel)

    def outputs(p, default_out="localsieve-out"):
        p.add_argument("--out", default=default_out, help="output directory")
        p.add_argument("--plot", action="store_true", help="also write plot series")
        p.add_argument("--force", action="store_true", help="run despite failed certificates")

    p = sub.add_parser("localize-compare", help="compare the kernel and Fourier localizations")
    p.add_argument("--kernel", default="hilbert")
    p.add_argument("--eta", default="bump")
    p.add_argument("--psi", default="gaussian")
    p.add_argument("--N", type=int, default=2048)
    p.add_argument("--L", type=float, default=8.0)
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--shell-L", type=float, default=32.0)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    outputs(p)
    p.set_defaults(func=cmd_localize_compare)

    p = sub.add_parser("norms", help="bmo / lmo oscillation report of a grid function")
    p.add_argument("--input", required=True)
    p.add_argument("--family-stride", type=int, default=4)
    p.add_argument("--p", type=int, default=1, choices=(1, 2, 6))
    p.add_argument("--radii", default=None)
    p.add_argument("--report", default="json", choices=("json", "csv"))
    p.set_defaults(func=cmd_norms)

    p = sub.add_parser("atom-decompose", help="split an approximate h1_b atom into zero-mean pieces")
    p.add_argument("--input", required=True)
    p.add_argument("--ball", required=True, help="x0,r (or x,y,r in two dimensions)")
    p.add_argument("--b", required=True)
    p.add_argument("--family-stride", type=int, default=4)
    p.set_defaults(func=cmd_atom_decompose)

    p = sub.add_parser("commutator-suite", help="commutator and maximal-function sweeps on atoms")
    p.add_argument("--check", required=True,
                   choices=("thm51", "thm54", "prop47", "prop48", "prop412", "cor414"))
    p.add_argument("--kernel", default="hilbert")
    p.add_argument("--eta", default="bump")
    p.add_argument("--b", default="log", help="built-in b (log, cone, random, constant, stepbump) or a .gfn")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--radii", default="2^-6..2")
    p.add_argument("--N", type=int, nargs="+", default=[1024, 2048])
    p.add_argument("--L", type=float, default=8.0)
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--mu", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    outputs(p)
    p.set_defaults(func=cmd_commutator_suite)

    p = sub.add_parser("reproduce", help="run a shipped acceptance config")
    p.add_argument("criterion", help="criterion number (1-12), criterion-NN, or 'all'")
    p.add_argument("--out", default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_reproduce)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (ConfigurationError, GridMismatchError, AtomConstructionError) as exc:
        print(f"localsieve: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
