import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from localsieve import ExperimentReport
from localsieve._parallel import pmap, thread_count, trial_rng, trial_seed
from localsieve.report import format_value, parse_value, refinement_block, summarize


def rows():
    return [
        {"trial": 0, "N": 512, "ratio": 0.5, "passed": True},
        {"trial": 1, "N": 512, "ratio": 0.25, "passed": True},
        {"trial": 0, "N": 1024, "ratio": 0.75, "passed": False},
    ]


def test_summary_fields():
    s = summarize(rows())
    assert s == {"trials": 3, "max_ratio": 0.75, "median_ratio": 0.5, "pass_count": 2, "fail_count": 1}
    assert summarize([]) == {"trials": 0, "max_ratio": 0.0, "median_ratio": 0.0, "pass_count": 0, "fail_count": 0}


def test_refinement_block():
    ref = refinement_block(rows())
    assert ref["N_coarse"] == 512 and ref["N_fine"] == 1024
    assert ref["factor"] == pytest.approx(1.5) and ref["stable"]
    assert refinement_block(rows()[:2]) is None


def test_csv_and_json(tmp_path):
    rep = ExperimentReport("demo", ["trial", "N", "ratio", "passed"], rows(), details={"x": np.float64(1.5)})
    text = rep.csv_text()
    assert text.splitlines()[0] == "trial,N,ratio,passed"
    assert text.splitlines()[1] == "0,512,0.5,true"
    doc = json.loads(rep.json_text())
    assert doc["summary"]["max_ratio"] == 0.75 and doc["details"]["x"] == 1.5
    c, j = rep.write(tmp_path, "demo")
    back = ExperimentReport.load(c, j)
    assert back.rows == rep.rows and back.csv_text() == text


def test_load_detects_tampered_summary(tmp_path):
    rep = ExperimentReport("demo", ["trial", "N", "ratio", "passed"], rows())
    c, j = rep.write(tmp_path)
    doc = json.loads(j.read_text())
    doc["summary"]["max_ratio"] = 9.0
    j.write_text(json.dumps(doc))
    with pytest.raises(ValueError):
        ExperimentReport.load(c, j)


def test_nonfinite_values_serialize():
    rep = ExperimentReport("demo", ["ratio"], [{"ratio": 1.0}], details={"bad": math.inf})
    assert json.loads(rep.json_text())["details"]["bad"] == "inf"


@given(st.one_of(st.floats(allow_nan=False), st.integers(), st.booleans()))
def test_cell_roundtrip(v):
    back = parse_value(format_value(v))
    assert back == v and type(back) is type(v)


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv("LOCALSIEVE_THREADS", "3")
    assert thread_count() == 3
    assert thread_count(1) == 1
    monkeypatch.setenv("LOCALSIEVE_THREADS", "junk")
    assert thread_count() == 1


@given(st.lists(st.integers(), max_size=30), st.integers(1, 6))
def test_pmap_keeps_order(items, threads):
    assert pmap(lambda x: x * 2, items, threads) == [x * 2 for x in items]


def test_trial_streams_are_independent_of_schedule():
    a = trial_rng(5, 3).normal(size=4)
    b = trial_rng(5, 3).normal(size=4)
    c = trial_rng(5, 4).normal(size=4)
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    assert trial_seed(5, 3) == trial_seed(5, 3) != trial_seed(5, 3, 1)
