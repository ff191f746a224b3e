"""Acceptance criteria: each shipped config at its stated tolerance and runtime budget.

The run is shared across the module.  One PASS/FAIL line per criterion is
printed as it finishes and repeated in the terminal summary.
"""

import pytest

from localsieve.acceptance import run_criterion

CRITERIA = list(range(1, 13))


@pytest.fixture(scope="module")
def results(acceptance_lines):
    return {"done": {}, "reference": {}, "lines": acceptance_lines}


def _result(results, number):
    done = results["done"]
    if number not in done:
        ref = results["reference"] if number == 12 and len(results["reference"]) == 11 else None
        res = run_criterion(number, threads=1, reference=ref)
        if res.report.check != "determinism":
            results["reference"][str(number)] = res.report.csv_text()
        print("\n" + res.line)
        results["lines"].append(res.line)
        done[number] = res
    return done[number]


@pytest.mark.slow
@pytest.mark.parametrize("number", CRITERIA, ids=[f"criterion-{n:02d}" for n in CRITERIA])
def test_criterion(results, number):
    res = _result(results, number)
    assert res.report.passed, res.line
    if res.limit is not None:
        assert res.seconds < res.limit, res.line
    assert res.passed
