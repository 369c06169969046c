import json
from datetime import datetime, timedelta
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from vedar.bench import (
    NAB_DATASETS, PUBLISHED, VEDAR, BenchReport, Confusion, MissingInput, baseline_file,
    emit_report, load_baseline_results, metrics, score_against_windows,
    threshold_baseline_scores,
)

T0 = datetime(2014, 1, 1)


def at(hours):
    return T0 + timedelta(hours=hours)


WINDOWS = [(at(0), at(2)), (at(10), at(12)), (at(20), at(22))]


def test_three_hits_and_one_stray():
    alerts = [at(1), at(11), at(21), at(30)]
    assert score_against_windows(alerts, WINDOWS) == Confusion(3, 1, 0)


def test_no_alerts():
    assert score_against_windows([], WINDOWS[:2]) == Confusion(0, 0, 2)


def test_repeat_hits_count_once():
    assert score_against_windows([at(10.5 + 0.1 * k) for k in range(5)], WINDOWS[1:2]) == Confusion(1, 0, 0)


def test_window_ends_inclusive():
    assert score_against_windows([at(0), at(12)], WINDOWS) == Confusion(2, 0, 1)
    assert score_against_windows([at(2.01), at(-1)], WINDOWS) == Confusion(0, 2, 3)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-5, 30), max_size=30), st.randoms(use_true_random=False))
def test_order_and_duplicate_invariance(hours, rnd):
    alerts = [at(h) for h in hours]
    base = score_against_windows(alerts, WINDOWS)
    shuffled = list(alerts)
    rnd.shuffle(shuffled)
    assert score_against_windows(shuffled, WINDOWS) == base
    inside = [a for a in alerts if any(s <= a <= e for s, e in WINDOWS)]
    assert score_against_windows(alerts + inside, WINDOWS) == base
    assert base.tp + base.fn == len(WINDOWS)


@pytest.mark.parametrize("c, want", [
    (Confusion(3, 1, 0), (0.75, 1.0, 6 / 7)),
    (Confusion(1, 7, 1), (0.125, 0.5, 0.2)),
    (Confusion(0, 0, 0), (1.0, 1.0, 1.0)),
    (Confusion(0, 4, 2), (0.0, 0.0, 0.0)),
])
def test_metric_examples(c, want):
    assert metrics(c) == pytest.approx(want, rel=1e-15)


def exact(tp, fp, fn):
    p = Fraction(tp, tp + fp) if tp + fp else Fraction(1)
    r = Fraction(tp, tp + fn) if tp + fn else Fraction(1)
    f = 2 * p * r / (p + r) if p + r else Fraction(0)
    return p, r, f


@settings(max_examples=500, deadline=None)
@given(st.integers(0, 1000), st.integers(0, 1000), st.integers(0, 1000))
def test_metrics_match_rational_formula(tp, fp, fn):
    got = metrics(Confusion(tp, fp, fn))
    for g, w in zip(got, exact(tp, fp, fn)):
        assert g == pytest.approx(float(w), rel=1e-12, abs=1e-15)


def two_dp(q):
    return Decimal(q.numerator) / Decimal(q.denominator)


@pytest.mark.parametrize("key", sorted(PUBLISHED))
def test_published_cells_follow_from_counts(key):
    (tp, fp, fn), printed = PUBLISHED[key]
    for value, cell in zip(exact(tp, fp, fn), printed):
        rounded = two_dp(value).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)
        assert rounded == Decimal(str(cell)).quantize(Decimal("0.01"))


def test_published_grid_shape():
    assert len(PUBLISHED) == 15
    assert {d for d, _ in PUBLISHED} == set(NAB_DATASETS)
    assert {a for _, a in PUBLISHED} == {"HTM", "TwitterAdVec", VEDAR}


def test_threshold_examples():
    rows = [(at(0), 0.5), (at(1), 0.991), (at(2), 0.99)]
    assert threshold_baseline_scores(rows, 0.01) == [at(1), at(2)]
    assert threshold_baseline_scores([(at(0), 0.0), (at(1), 0.0)]) == []
    assert threshold_baseline_scores(rows, 1.0) == [at(0), at(1), at(2)]


def test_baseline_results_files(tmp_path):
    d = tmp_path / "numenta" / "realTraffic"
    d.mkdir(parents=True)
    f = d / "numenta_occupancy_6005.csv"
    f.write_text("timestamp,value,anomaly_score,label\n2014-01-01 00:00:00,3,0.995,0\n2014-01-01 00:05:00,3,0.2,0\n")
    assert baseline_file(tmp_path, "HTM", "realTraffic/occupancy_6005.csv") == f
    assert baseline_file(tmp_path / "numenta", "HTM", "realTraffic/occupancy_6005.csv") == f
    rows = load_baseline_results(f)
    assert threshold_baseline_scores(rows) == [T0]
    with pytest.raises(MissingInput):
        baseline_file(tmp_path, "TwitterAdVec", "realTraffic/occupancy_6005.csv")
    bad = tmp_path / "bad.csv"
    bad.write_text("timestamp,value\n2014-01-01 00:00:00,1\n")
    with pytest.raises(MissingInput):
        load_baseline_results(bad)


def report(ds="realTraffic/occupancy_6005.csv", algo=VEDAR, c=Confusion(3, 1, 0)):
    return BenchReport.from_confusion(ds, algo, c)


def test_text_report_single_row():
    lines = emit_report([report()]).splitlines()
    assert len(lines) == 3
    assert lines[0].split() == ["Dataset", "Algorithm", "TP", "FP", "FN", "Precision", "Recall", "F1"]
    assert lines[2].split()[-3:] == ["0.75", "1.00", "0.86"]


def test_text_report_empty():
    assert len(emit_report([]).splitlines()) == 2


def test_text_report_full_grid():
    reports = [report(d, a, Confusion(*PUBLISHED[(d, a)][0])) for d, a in sorted(PUBLISHED)]
    assert len(emit_report(reports).splitlines()) == 2 + 15


def test_jsonl_report_unrounded():
    (line,) = emit_report([report()], "jsonl").splitlines()
    rec = json.loads(line)
    assert rec["f1"] == 6 / 7 and (rec["tp"], rec["fp"], rec["fn"]) == (3, 1, 0)


def test_unknown_format():
    with pytest.raises(ValueError):
        emit_report([report()], "xml")
