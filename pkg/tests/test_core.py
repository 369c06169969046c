from datetime import datetime

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vedar.core import (
    ChangeAlert, ChangeType, DetectorConfig, NonFiniteValue, NonMonotonicTimestamp,
    RejectedValue, RingBuffer, TimedValue, VedarError, modal_interval, validate_point,
)


def test_push_evicts_oldest():
    b = RingBuffer(3, [1, 2, 3])
    b.push(4)
    assert b.values().tolist() == [2, 3, 4]


def test_push_into_empty():
    b = RingBuffer(3)
    b.push(5)
    assert b.values().tolist() == [5]


def test_capacity_one():
    b = RingBuffer(1, [7])
    b.push(9)
    assert b.values().tolist() == [9]


@pytest.mark.parametrize("bad", [float("nan"), float("inf"), -float("inf")])
def test_push_rejects_non_finite(bad):
    with pytest.raises(RejectedValue):
        RingBuffer(2).push(bad)


def test_zero_capacity_rejected():
    with pytest.raises(VedarError):
        RingBuffer(0)


@given(st.integers(1, 20), st.lists(st.floats(-1e6, 1e6), max_size=80))
def test_ring_matches_list_oracle(capacity, xs):
    b = RingBuffer(capacity)
    oracle = []
    for x in xs:
        b.push(x)
        oracle = (oracle + [x])[-capacity:]
        assert len(b) == len(oracle) <= capacity
    assert b.values().tolist() == oracle
    assert sorted(b.raw().tolist()) == sorted(oracle)
    for k in range(len(oracle)):
        assert b.back(k) == oracle[-1 - k]


def test_back_many_matches_back():
    b = RingBuffer(5, range(8))
    ks = np.array([0, 2, 4])
    assert b.back_many(ks).tolist() == [b.back(int(k)) for k in ks]


def test_validate_point_examples():
    ok = TimedValue(datetime(2014, 1, 1, 10, 5), 3.2)
    assert validate_point(datetime(2014, 1, 1, 10, 0), ok) is ok
    with pytest.raises(NonMonotonicTimestamp):
        validate_point(datetime(2014, 1, 1, 10, 5), TimedValue(datetime(2014, 1, 1, 10, 5), 1.0))
    with pytest.raises(NonFiniteValue):
        validate_point(datetime(2014, 1, 1, 10, 0), TimedValue(datetime(2014, 1, 1, 10, 5), float("nan")))


def test_default_config_is_valid():
    cfg = DetectorConfig()
    cfg.validate()
    assert cfg.sigma_multiplier == 3.0


@pytest.mark.parametrize("field, value", [
    ("pewma_alpha", 1.0), ("pewma_beta", -0.1), ("scaling_factor", 0), ("warmup_points", 0),
    ("kde_bandwidth", -1.0), ("period", 0), ("kde_norm", "other"), ("empirical_min_ratio", 0.5),
])
def test_config_rejects_bad_values(field, value):
    with pytest.raises(VedarError):
        DetectorConfig().override(**{field: value})


def test_override_rejects_unknown_field():
    with pytest.raises(VedarError):
        DetectorConfig().override(no_such_field=1)


def test_modal_interval():
    from datetime import timedelta
    ts = [datetime(2014, 1, 1) + timedelta(minutes=5 * i) for i in range(10)]
    ts.insert(5, ts[4] + timedelta(minutes=1))
    assert modal_interval(ts) == timedelta(minutes=5)


def test_alert_record_fields():
    a = ChangeAlert(datetime(2014, 1, 1), 5.0, 4.0, ChangeType.ERRATIC, 0.1, 0.2)
    assert set(a.to_record()) == {"timestamp", "actual", "expected", "type", "likelihood"}
    assert a.to_record()["type"] == "erratic"
