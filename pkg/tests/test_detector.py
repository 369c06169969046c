import itertools
import math
from datetime import datetime, timedelta

import numpy as np
import pytest

from vedar.core import ChangeAlert, ChangeType, DetectorConfig, TimedValue
from vedar.detector import Cooldown, Detector, LikelihoodTrack, classify, cooldown_filter, detect
from vedar.ingest import synth_linear_then_periodic, synth_seasonal_with_noise, synth_spike


def feed(track, values):
    for v in values:
        fired = track.empirical_rule(v)
        track.update(v, fired)


def test_constant_stream_never_fires():
    t = LikelihoodTrack()
    feed(t, [0.2] * 100)
    assert not t.empirical_rule(0.2)


def test_large_jump_fires():
    rng = np.random.default_rng(0)
    t = LikelihoodTrack()
    feed(t, 5.0 + np.cumsum(rng.normal(0, 0.01, 200)))
    assert t.delta_sigma == pytest.approx(0.01, rel=0.3)
    assert t.empirical_rule(t.prev + 1.0)


def test_no_fire_before_warmup():
    t = LikelihoodTrack(warmup=30)
    feed(t, [1.0 + 1e-3 * (i % 2) for i in range(20)])
    assert not t.empirical_rule(100.0)


def test_fired_delta_excluded_from_moments():
    t = LikelihoodTrack()
    feed(t, 1.0 + 0.01 * np.random.default_rng(1).standard_normal(100))
    var = t.delta_var
    assert t.empirical_rule(50.0)
    t.update(50.0, True)
    assert t.delta_var == var


def _filled(window_values, window=20):
    t = LikelihoodTrack(window=window)
    for v in window_values:
        t.update(v, False)
    return t


def test_scale_rule_five_orders():
    assert _filled([1e-2] * 20).scale_change_rule(1e-7)


def test_scale_rule_one_order():
    assert not _filled([1e-2] * 20).scale_change_rule(1e-3)


def test_scale_rule_zero_likelihood():
    assert _filled([1e-2] * 20).scale_change_rule(0.0)
    assert not _filled([1e-297] * 20).scale_change_rule(0.0)


def test_scale_rule_needs_full_window():
    assert not _filled([1e-2] * 19).scale_change_rule(1e-12)


def test_scale_rule_uses_older_half_median():
    values = [1e-2] * 10 + [1e-8] * 10
    assert _filled(values).scale_change_rule(1e-7)


def test_classify_table():
    cases = {
        (True, True, False): ChangeType.SEASONAL_INTERRUPTION,
        (True, False, True): ChangeType.SEASONAL_INTERRUPTION,
        (True, True, True): ChangeType.SEASONAL_INTERRUPTION,
        (False, True, False): ChangeType.ERRATIC,
        (False, True, True): ChangeType.ERRATIC,
        (False, False, True): ChangeType.LINEAR,
    }
    for key in itertools.product((False, True), repeat=3):
        if not (key[1] or key[2]):
            with pytest.raises(ValueError):
                classify(*key)
        else:
            assert classify(*key) is cases[key]


def _alert(index, kind=ChangeType.ERRATIC):
    ts = datetime(2014, 1, 1) + timedelta(minutes=5 * index)
    return ChangeAlert(ts, 1.0, 0.0, kind, 0.0, 1.0, index)


def test_cooldown_examples():
    assert [a.index for a in cooldown_filter([_alert(10), _alert(13)])] == [10]
    assert [a.index for a in cooldown_filter([_alert(10), _alert(1010)])] == [10, 1010]
    mixed = [_alert(10), _alert(12, ChangeType.LINEAR)]
    assert len(list(cooldown_filter(mixed))) == 2


def test_cooldown_horizon_follows_period():
    c = Cooldown(50)
    assert c.horizon(None) == 50
    assert c.horizon(100) == 50
    assert c.horizon(1000) == 250


def test_warmup_is_silent():
    cfg = DetectorConfig()
    res = synth_spike(seed=0, spike_at=100)
    det = Detector(cfg)
    outs = [det.process(p) for p in res.dataset.points[: cfg.warmup_points]]
    assert all(o.alert is None and o.warmup for o in outs)


@pytest.mark.parametrize("seed", [0, 2, 3])
def test_spike_gives_one_erratic_alert(seed):
    res = synth_spike(seed=seed)
    alerts = detect(res.dataset.points)
    assert [(a.index, a.change_type) for a in alerts] == [(1200, ChangeType.ERRATIC)]
    a = alerts[0]
    assert a.actual == res.dataset.points[1200].value
    assert a.expected == pytest.approx(10.0, abs=1.0)
    assert a.likelihood < a.prior_likelihood


def test_missing_peak_is_seasonal_interruption():
    res = synth_seasonal_with_noise(period=288, missing_peaks=[10])
    alerts = detect(res.dataset.points)
    assert len(alerts) == 1
    a = alerts[0]
    assert a.change_type is ChangeType.SEASONAL_INTERRUPTION
    assert abs(a.index - res.truth_indices[0]) <= 10
    # the peak was expected and the base level seen
    assert a.actual == pytest.approx(10.0, abs=1.0)
    assert a.expected > a.actual + 1.5


def test_linear_stream_types():
    alerts = detect(synth_linear_then_periodic().dataset.points)
    assert [a.change_type for a in alerts] == [ChangeType.LINEAR, ChangeType.ERRATIC, ChangeType.ERRATIC]


def test_output_diagnostics():
    det = Detector()
    outs = [det.process(p) for p in synth_spike().dataset.points]
    fired = [o for o in outs if o.alert is not None]
    assert len(fired) == 1
    o = fired[0]
    assert o.rule in ("empirical", "scale") and o.fired_empirical != o.fired_scale
    assert all(math.isfinite(o.likelihood) for o in outs[DetectorConfig().warmup_points:])


def test_deterministic():
    pts = synth_linear_then_periodic(seed=3).dataset.points
    a = [a.to_record() for a in detect(pts, DetectorConfig(seed=5))]
    b = [a.to_record() for a in detect(pts, DetectorConfig(seed=5))]
    assert a == b


@pytest.mark.parametrize("c", [0.25, 4.0, 1024.0])
def test_explicit_factor_invariance(c):
    res = synth_linear_then_periodic(seed=1)
    pts = res.dataset.points
    scaled = [TimedValue(p.timestamp, p.value * c) for p in pts]
    a = detect(pts, DetectorConfig(scaling_factor=10.0))
    b = detect(scaled, DetectorConfig(scaling_factor=10.0 * c))
    assert [(x.index, x.change_type) for x in a] == [(x.index, x.change_type) for x in b]
    assert [x.expected * c for x in a] == [x.expected for x in b]


def test_no_cooldown_emits_at_least_as_many():
    pts = synth_linear_then_periodic().dataset.points
    on = detect(pts)
    off = detect(pts, DetectorConfig(cooldown=False))
    assert len(off) >= len(on)


def test_footprint_is_bounded():
    det = Detector()
    sizes = []
    for i, p in enumerate(synth_spike(length=6000, spike_at=5000).dataset.points):
        det.process(p)
        if i in (2000, 5999):
            sizes.append(det.footprint())
    assert sizes[0] == sizes[1]
