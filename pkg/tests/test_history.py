import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from abotune.exceptions import EmptyHistoryError, HistoryFormatError
from abotune.history import EvaluationRecord, SearchHistory, find_best, parse_history_csv, read_history_csv
from abotune.space import Parameter, ParameterSpace

SPACE = ParameterSpace(
    (
        Parameter("n", "integer", 1, 8),
        Parameter("r", "real", 0.0, 1.0),
        Parameter("c", "categorical", labels=("a", "b,c", 'q"t')),
    )
)


def record(job_id, runtime, t_end=None, status="ok", config=None):
    t_end = float(job_id + 1) if t_end is None else t_end
    config = config or {"n": 1, "r": 0.5, "c": "a"}
    return EvaluationRecord.make(job_id, 0, config, 0.0, 0.0, t_end, status, runtime)


def test_find_best_argmax():
    runtimes = [math.exp(2.3), math.exp(2.0), math.exp(2.9)]
    h = SearchHistory(SPACE, [record(i, r) for i, r in enumerate(runtimes)])
    assert find_best(h)[1] == pytest.approx(-2.0, abs=1e-12)


def test_find_best_single_and_tie_break():
    only = SearchHistory(SPACE, [record(0, 3.0)])
    assert find_best(only)[1] == -math.log(3.0)
    a = record(0, 3.0, t_end=200.0, config={"n": 2, "r": 0.5, "c": "a"})
    b = record(1, 3.0, t_end=100.0, config={"n": 3, "r": 0.5, "c": "a"})
    assert find_best(SearchHistory(SPACE, [a, b]))[0]["n"] == 3


def test_find_best_empty():
    with pytest.raises(EmptyHistoryError):
        find_best(SearchHistory(SPACE, [record(0, math.nan, status="timeout")]))


def test_record_invariants():
    with pytest.raises(ValueError):
        EvaluationRecord(0, 0, {}, 2.0, 1.0, 3.0, "ok", 1.0, 0.0)
    with pytest.raises(ValueError):
        EvaluationRecord(0, 0, {}, 0.0, 0.0, 1.0, "ok", 2.0, -0.5)
    with pytest.raises(ValueError):
        EvaluationRecord(0, 0, {}, 0.0, 0.0, 1.0, "timeout", 2.0, math.nan)
    r = record(0, 90.0)
    assert abs(r.objective + math.log(r.runtime)) < 1e-12
    failed = record(1, 5.0, status="failed")
    assert math.isnan(failed.runtime) and math.isnan(failed.objective)


def test_csv_layout():
    h = SearchHistory(SPACE, [record(0, 0.1, config={"n": 3, "r": 0.1, "c": "b,c"}), record(1, 1.0, status="timeout")])
    lines = h.to_csv().splitlines()
    assert lines[0] == "job_id,worker_id,t_submit,t_start,t_end,status,runtime,objective,p:n,p:r,p:c"
    assert lines[1] == f'0,0,0.0,0.0,1.0,ok,0.1,{-math.log(0.1)!r},3,0.1,"b,c"'
    assert lines[2] == "1,0,0.0,0.0,2.0,timeout,NaN,NaN,1,0.5,a"


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(0, 20))
def test_csv_round_trip(seed, n):
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        status = ["ok", "timeout", "failed"][rng.integers(3)]
        t0 = float(rng.random() * 100)
        records.append(EvaluationRecord.make(i, int(rng.integers(4)), SPACE.sample(rng), t0, t0, t0 + rng.random(), status, float(rng.random() * 50 + 1e-3)))
    text = SearchHistory(SPACE, records).to_csv()
    back = parse_history_csv(text, SPACE)
    assert back.to_csv() == text
    for a, b in zip(records, back.records):
        assert a.config == b.config and a.t_end == b.t_end and a.status == b.status
        assert a.runtime == b.runtime or (math.isnan(a.runtime) and math.isnan(b.runtime))


def test_parse_errors_report_row(tmp_path):
    text = SearchHistory(SPACE, [record(i, 2.0) for i in range(3)]).to_csv()
    lines = text.splitlines()
    lines[2] = lines[2].replace(",ok,", ",maybe,")
    with pytest.raises(HistoryFormatError) as info:
        parse_history_csv("\n".join(lines), SPACE)
    assert info.value.row == 3
    with pytest.raises(HistoryFormatError) as info:
        parse_history_csv("a,b\n", SPACE)
    assert info.value.row == 1
    bad_domain = text.splitlines()
    bad_domain[1] = bad_domain[1].replace(",1,0.5,a", ",9,0.5,a")
    with pytest.raises(HistoryFormatError) as info:
        parse_history_csv("\n".join(bad_domain), SPACE)
    assert info.value.row == 2
    dup = text + text.splitlines()[1] + "\n"
    with pytest.raises(HistoryFormatError):
        parse_history_csv(dup, SPACE)
    path = tmp_path / "h.csv"
    path.write_text(text)
    assert read_history_csv(path, SPACE).metadata["source"] == str(path)
