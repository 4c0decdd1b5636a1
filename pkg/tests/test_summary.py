import json

import pytest

from boltzgap.sweep import records as rec
from boltzgap.sweep.records import ResultRecord
from boltzgap.sweep.summary import (classify_trend, convergence_slope, limit_gap, reference_gap, summarize,
                                    summarize_records)


def record(V, N, gap, d=2, gamma=0.0, alpha=-1.0, p=0):
    return ResultRecord(d=d, gamma=gamma, alpha=alpha, V=V, N=N, p=p, backend="grad", method="nullspace",
                        M=N ** d, gap=gap, eigs=[gap])


def test_reference_lookup():
    assert reference_gap(record(5.0, 24, 0.3)) == 0.25
    assert reference_gap(record(5.0, 24, 0.3, gamma=0.5)) == 0.44
    assert reference_gap(record(5.0, 20, 0.3, d=3, alpha=-2.0, p=1)) == 0.351826
    assert reference_gap(record(5.0, 20, 0.3, d=3, gamma=1.0, alpha=-2.0)) == 1.10
    assert reference_gap(record(4.0, 24, 0.3)) is None
    assert limit_gap(3, 0.0, -2.0) == pytest.approx(1.0 / 3.0)
    assert limit_gap(2, 0.5, -1.0) is None


def test_first_order_slope():
    dv = [1.0, 0.5, 0.25, 0.125]
    gaps = [0.25 + 0.3 * h for h in dv]
    assert convergence_slope(dv, gaps, 0.25) == pytest.approx(1.0)
    assert convergence_slope([1.0], [0.5], 0.25) is None


def test_trend_classes():
    assert classify_trend([0.4, 0.41, 0.39, 0.4])["trend"] == "stable"
    decaying = classify_trend([0.4, 0.2, 0.1, 0.099])
    assert decaying["trend"] == "decaying"
    assert decaying["pseudo_plateau"] is True
    assert classify_trend([0.4, 0.1, 0.5])["trend"] == "mixed"
    assert classify_trend([0.4])["trend"] == "insufficient"


def test_summarize_records_groups():
    rows = [record(5.0, N, 0.25 + 2.0 / N) for N in (8, 16, 24)] + [record(4.0, 16, 0.3)]
    out = summarize_records(rows)
    assert out["records"] == 4
    (group,) = out["groups"]
    assert group["limit"] == 0.25
    (sweep,) = group["n_sweeps"]
    assert sweep["V"] == 5.0 and sweep["monotone"] is True
    assert sweep["slope"] == pytest.approx(1.0)
    assert group["v_sweep"]["V"] == [4.0, 5.0]
    at24 = [pt for pt in group["points"] if pt["N"] == 24][0]
    assert at24["deviation"] == pytest.approx(2.0 / 24)


def test_summarize_writes_file(tmp_path):
    rec.emit([record(5.0, 24, 0.26)], "csv", str(tmp_path / "results.csv"))
    summary = summarize(str(tmp_path))
    on_disk = json.load(open(tmp_path / "summary.json"))
    assert on_disk["records"] == summary["records"] == 1
