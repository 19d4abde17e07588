import csv
import io
import json

import numpy as np
import pytest

from conftest import simple_model
from invmrsort.core import ContractError, CostAtMost, Direction, GainAtLeast, PeakInterval
from invmrsort.metrics import (
    CSV_HEADER, ExperimentReport, ReplicaRecord, cag, pdr, run_experiment, run_replica,
    weight_bucket,
)
from invmrsort.mip import build_two_category
from invmrsort.core import LearningSet
from invmrsort.solve import MipSolution, interpret

G, C, SP, SV = (Direction.GAIN, Direction.COST, Direction.SINGLE_PEAKED, Direction.SINGLE_VALLEY)


@pytest.fixture
def grid_points():
    return np.array([[a / 10, b / 10] for a in range(11) for b in range(11)])


def test_cag_identity(grid_points):
    m = simple_model([[GainAtLeast(0.5)], [PeakInterval(0.2, 0.7)]], [0.5, 0.5], 0.7)
    assert cag(m, m, grid_points) == 1.0


def test_cag_ignores_zero_weight_frontier(grid_points):
    a = simple_model([[GainAtLeast(0.5)], [CostAtMost(0.3)]], [1.0, 0.0], 0.6)
    b = simple_model([[GainAtLeast(0.5)], [PeakInterval(0.1, 0.9)]], [1.0, 0.0], 0.6)
    assert cag(a, b, grid_points) == 1.0


def test_cag_symmetric_and_checked(grid_points):
    a = simple_model([[GainAtLeast(0.5)], [GainAtLeast(0.3)]], [0.5, 0.5], 0.6)
    b = simple_model([[GainAtLeast(0.4)], [GainAtLeast(0.3)]], [0.7, 0.3], 0.6)
    assert cag(a, b, grid_points) == cag(b, a, grid_points) < 1
    with pytest.raises(ContractError):
        cag(a, simple_model([[GainAtLeast(0.5)]], [1.0], 0.5), grid_points[:, :1])
    with pytest.raises(ContractError):
        cag(a, b, np.zeros((0, 2)))


def test_pdr_all_restored():
    assert pdr([G, SP, SV], [G, SP, SV], [True, True, True]) == 1.0


def test_pdr_random_baseline_quarter():
    assert pdr([G, C, SP, SV], [G, SP, SV, C], [True] * 4) == 0.25


def test_pdr_only_counts_unknown():
    assert pdr([G, C], [G, SP], [True, False]) == 1.0


def test_pdr_undefined_without_unknown():
    with pytest.raises(ContractError):
        pdr([G, G], [G, G], [False, False])


def test_pdr_counts_collapsed_case_as_gain():
    # a learned peak whose upper end reaches the data maximum reads as gain
    ls = LearningSet.from_arrays([[0.1], [0.9]], [1, 2])
    prob = build_two_category(ls, [Direction.UNKNOWN])
    x = np.zeros(len(prob.vars))
    x[prob.var("sigma", i=0)] = 1
    x[prob.var("bperp", 1, 0)], x[prob.var("b", 1, 0)] = 0.75, 0.25
    x[prob.var("w", i=0)], x[prob.var("lambda")] = 1, 1
    learned = interpret(prob, MipSolution("optimal", x, 0.0))
    assert pdr([G], [c.direction for c in learned.criteria], [True]) == 1.0


@pytest.mark.parametrize("w, bucket", [(0.0, "low"), (0.125, "low"), (0.13, "mid"),
                                       (0.49, "mid"), (0.5, "high"), (1.0, "high")])
def test_weight_buckets_for_four_criteria(w, bucket):
    assert weight_bucket(w, 4) == bucket


def _rec(t, status="optimal", **kw):
    return ReplicaRecord(4, 1, 0, status, wall_time_s=t, **kw)


def test_median_over_terminated_only():
    recs = [_rec(1.0), _rec(2.0), _rec(100.0), _rec(5000.0, "timeout")]
    assert ExperimentReport.median_time(recs) == 2.0
    assert ExperimentReport.terminated_count(recs) == 3


def test_aggregates_and_pivots():
    recs = [_rec(1.0, cag=0.9, pdr=1.0, unknown=[(0.05, True)]),
            _rec(3.0, cag=0.8, pdr=0.0, unknown=[(0.3, False)]),
            _rec(9.0, "timeout", unknown=[(0.9, True)]),
            ReplicaRecord(5, 0, 0, "optimal", wall_time_s=2.0, cag=1.0)]
    rep = ExperimentReport(recs)
    agg = rep.aggregates()["n=4,q=1"]
    assert agg["terminated_count"] == 2 and agg["replicas"] == 3
    assert agg["mean_cag"] == pytest.approx(0.85) and agg["mean_pdr"] == 0.5
    assert agg["pdr_by_weight_bucket"]["low"] == 1.0
    assert agg["pdr_by_weight_bucket"]["mid"] == 0.0
    assert np.isnan(agg["pdr_by_weight_bucket"]["high"])
    assert rep.table2() == {1: {4: (2.0, 2)}, 0: {5: (2.0, 1)}}
    payload = json.loads(rep.to_json())
    assert payload["table2"]["1"]["4"] == {"median_time": 2.0, "terminated": 2}
    assert payload["table3"]["high"] is None
    rows = list(csv.reader(io.StringIO(rep.to_csv())))
    assert tuple(rows[0]) == CSV_HEADER and len(rows) == 5
    assert rows[3][3] == "timeout" and rows[3][5] == ""


def test_experiment_cell_all_terminate():
    rep = run_experiment([4], [0], 3, learn_size=60, test_size=200)
    recs = rep.cell(4, 0)
    assert rep.terminated_count(recs) == 3
    assert all(r.ca == 1.0 for r in recs)
    assert all(np.isnan(r.pdr) for r in recs)


def test_experiment_with_tiny_time_limit_is_well_formed():
    rep = run_experiment([4], [2], 2, time_limit=0.001)
    assert rep.terminated_count(rep.records) == 0
    assert len(rep.records) == 2
    assert np.isnan(rep.median_time(rep.records))
    json.loads(rep.to_json())
    assert rep.to_csv().startswith(",".join(CSV_HEADER))


def test_replica_failures_are_recorded():
    rec = run_replica(2, 3, 0)  # q > n: invalid configuration
    assert rec.status == "error" and rec.error


def test_records_are_recomputable():
    rep = run_experiment([3], [1], 2, learn_size=40, test_size=100)
    for r in rep.records:
        assert 0 <= r.cag <= 1 and r.pdr in (0.0, 1.0)
        assert len(r.unknown) == 1 and r.pdr == float(r.unknown[0][1])
    again = run_experiment([3], [1], 2, learn_size=40, test_size=100)
    assert [(r.ca, r.cag, r.pdr) for r in again.records] == [(r.ca, r.cag, r.pdr) for r in rep.records]


def test_replicas_must_be_positive():
    with pytest.raises(ContractError):
        run_experiment([4], [0], 0)
