"""Run the shipped criterion configs and report one pass/fail line each."""

from __future__ import annotations

import argparse
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional

from .experiments import CHECKS, _target_list, criterion_config, criterion_ids, determinism_rows, run_experiment
from .report import ExperimentReport, summarize

__all__ = ["CriterionResult", "RUNTIME_LIMITS", "run_criterion", "run_acceptance", "headline"]

# seconds; the determinism rerun has no budget of its own
RUNTIME_LIMITS = {1: 10, 2: 10, 3: 300, 4: 60, 5: 60, 6: 600, 7: 300, 8: 600, 9: 120, 10: 60,
                  11: 120, 12: None}


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    seconds: float
    limit: Optional[float]
    headline: str
    report: ExperimentReport = field(repr=False)

    @property
    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        lim = f"<{self.limit:g}s" if self.limit else "n/a"
        return f"{self.name:<12} {verdict}  {self.seconds:7.1f}s ({lim})  {self.headline}"


def _g(x) -> str:
    return f"{float(x):.4g}"


def headline(number: int, rep: ExperimentReport) -> str:
    """Short statement of the measured quantities a criterion is judged on."""
    d, s, rf = rep.details, rep.summary, rep.refinement or {}
    rows = rep.rows
    if number == 1:
        parts = [f"{r['kernel']}/{r['dim']}d canc={_g(r['cancellation'])} growth={_g(r['shell_growth_ratio'])}"
                 for r in rows]
        return "; ".join(parts)
    if number == 2:
        r = rows[0]
        return f"{r['kernel']} size={_g(r['size'])} smooth={_g(r['smoothness'])} canc={_g(r['cancellation'])}"
    if number == 3:
        k = max(d["k_star_l1"].values())
        f = d.get("shell_last_factors", [])
        return (f"max ||diff||/||f||={_g(s['max_ratio'])} vs 1.05*||K*||={_g(1.05 * k)}; "
                f"L={_g(d['shell_L'])} last shell factors max={_g(max(f) if f else 0)}")
    if number == 4:
        errs = ", ".join(f"N={r['N']}:{_g(r['error'])}" for r in rows)
        return f"rel L2 error {errs}; reduction {', '.join(_g(x) for x in d['error_reduction'])}"
    if number == 5:
        return (f"max recon={_g(max(r['recon_error'] for r in rows))} "
                f"max |int a_j|={_g(max(r['max_abs_integral'] for r in rows))} "
                f"max l1/bound={_g(s['max_ratio'])} passes={s['pass_count']}/{s['trials']}")
    if number == 6:
        rho = ", ".join(_g(v) for v in d.get("spearman_ratio_vs_neglogr", {}).values())
        ctl = max(d.get("control_max_l1", {"": 0.0}).values())
        return f"max ratio {_g(rf['max_coarse'])}->{_g(rf['max_fine'])} (x{_g(rf['factor'])}); spearman {rho}; control {_g(ctl)}"
    if number == 7:
        return (f"multiple {_g(rf['max_coarse'])}->{_g(rf['max_fine'])} (x{_g(rf['factor'])}); "
                f"M3 cross-check {all(r['cross_consistent'] for r in rows)}; T* osc factor x{_g(d['tstar_factor'])}")
    if number == 8:
        sc = d["sandwich_constants"]
        out = max(d["max_outside_2b"].values())
        return (f"M_b ratio {_g(rf['max_coarse'])}->{_g(rf['max_fine'])} (x{_g(rf['factor'])}); "
                f"sandwich left<={_g(sc['left'])} right<={_g(sc['right'])}; outside 2B {_g(out)}")
    if number == 9:
        gam = ", ".join(_g(v) for v in d["gamma"].values())
        return f"gamma={gam}; max b-moment ratio {_g(s['max_ratio'])}; passes={s['pass_count']}/{s['trials']}"
    if number == 10:
        return f"{s['trials']} balls; max relative gap {_g(s['max_ratio'])}"
    if number == 11:
        spread = ", ".join(f"N={k}:{_g(v)}" for k, v in d["mean_spread"].items())
        return f"tail constant {_g(d['tail_constant'])} (x{_g(d['tail_factor'])} under refinement); mean spread {spread}"
    if number == 12:
        same = sum(1 for r in rows if r["identical"])
        return f"{same}/{len(rows)} criteria byte-identical at {rows[0]['threads'] if rows else 0} threads"
    return ""


def _number(criterion) -> int:
    key = str(criterion).lower()
    if key.startswith("criterion-"):
        key = key[len("criterion-"):]
    return int(key)


def run_criterion(criterion, threads: Optional[int] = 1, outdir=None,
                  reference: Optional[Dict[str, str]] = None) -> CriterionResult:
    """Run one shipped criterion config.

    For the determinism criterion, ``reference`` may carry CSV texts of
    earlier single-thread runs keyed by criterion number so they are not
    recomputed.
    """
    num = _number(criterion)
    cfg = criterion_config(num)
    t0 = time.perf_counter()
    if cfg.check == "determinism" and reference is not None:
        rows = determinism_rows(_target_list(cfg.targets), reference=reference)
        chk = CHECKS["determinism"]
        rep = ExperimentReport(cfg.check, list(chk.columns), rows, chk.ratio_key,
                               {"config": cfg.name, "check": cfg.check}, chk.verdict(rows, {}),
                               {"applicable": False}, summarize(rows, chk.ratio_key))
        if outdir:
            rep.write(outdir, cfg.name)
    else:
        rep = run_experiment(cfg, threads=threads, outdir=str(outdir) if outdir else "")
    secs = time.perf_counter() - t0
    limit = RUNTIME_LIMITS.get(num)
    ok = bool(rep.passed) and (limit is None or secs < limit)
    return CriterionResult(num, cfg.name, ok, secs, limit, headline(num, rep), rep)


def run_acceptance(criteria: Optional[Iterable] = None, threads: Optional[int] = 1, outdir=None,
                   echo=print) -> List[CriterionResult]:
    """Run criteria in order, echoing one line per criterion as it finishes."""
    nums = [_number(c) for c in (criteria if criteria is not None else criterion_ids())]
    reference: Dict[str, str] = {}
    results = []
    for n in nums:
        res = run_criterion(n, threads, outdir, reference if n == 12 and reference else None)
        if res.report.check != "determinism" and (threads or 1) == 1:
            reference[str(n)] = res.report.csv_text()
        if echo is not None:
            echo(res.line)
        results.append(res)
    return results


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description="Run the acceptance criteria.")
    ap.add_argument("criteria", nargs="*")
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args(argv)
    results = run_acceptance(args.criteria or None, outdir=args.out)
    return 0 if all(r.passed for r in results) else 1


if __name__ == "__main__":
    raise SystemExit(main())
