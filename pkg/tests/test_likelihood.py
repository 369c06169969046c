import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vedar.core import RingBuffer
from vedar.likelihood import (
    DENSITY, PAPER_SUM, EmptySupport, KdeModel, StreamingKde, effective_size, fit_kde,
    kde_likelihood, lag1_autocorrelation, silverman_bandwidth,
)

trapezoid = getattr(np, "trapezoid", None) or np.trapz


@pytest.mark.parametrize("n", [100, 1000, 10_000])
def test_silverman_on_normal_draws(n):
    x = np.random.default_rng(n).standard_normal(n)
    h = fit_kde(x, []).bandwidth
    assert h == pytest.approx(1.06 * n ** -0.2, rel=0.2)
    q75, q25 = np.percentile(x, [75, 25])
    assert h == pytest.approx(0.9 * min(x.std(ddof=1), (q75 - q25) / 1.34) * n ** -0.2, rel=1e-12)


def test_identical_support_hits_floor():
    h = fit_kde(np.full(20, 4.0), []).bandwidth
    assert h == pytest.approx(1e-6 * 1e-12)
    assert h > 0


def test_explicit_bandwidth_verbatim():
    assert fit_kde([1.0, 2.0], [3.0], bandwidth=0.5).bandwidth == 0.5


def test_support_is_memory_then_buffer():
    m = fit_kde([1.0, 2.0], [3.0, 4.0], bandwidth=1.0)
    assert list(m.support) == [1.0, 2.0, 3.0, 4.0]


def test_empty_support_rejected():
    with pytest.raises(EmptySupport):
        fit_kde([], [])
    with pytest.raises(EmptySupport):
        silverman_bandwidth([])


def test_single_point_peak():
    m = fit_kde([2.5], [], bandwidth=0.3)
    assert kde_likelihood(m, 2.5) == pytest.approx(1 / (0.3 * math.sqrt(2 * math.pi)), rel=1e-15)


def test_far_tail_negligible():
    m = fit_kde([0.0, 1.0, 2.0], [], bandwidth=0.2)
    peak = m.evaluate(np.linspace(0, 2, 201)).max()
    assert m(2.0 + 10.5 * 0.2) < 1e-20 * peak


def test_density_integrates_to_one():
    rng = np.random.default_rng(3)
    for _ in range(50):
        n = int(rng.integers(1, 300))
        support = rng.normal(rng.uniform(-10, 10), rng.uniform(0.1, 5), n)
        m = fit_kde(support, [], bandwidth=float(rng.uniform(0.05, 2)))
        grid = np.linspace(support.min() - 10 * m.bandwidth, support.max() + 10 * m.bandwidth, 40_001)
        assert abs(trapezoid(m.evaluate(grid), grid) - 1.0) < 1e-6


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=1, max_size=40), st.floats(-150, 150), st.integers(0, 2**32 - 1))
def test_permutation_symmetry(xs, y, seed):
    a = KdeModel(np.array(xs), 0.7)
    b = KdeModel(np.random.default_rng(seed).permutation(np.array(xs)), 0.7)
    assert a(y) == pytest.approx(b(y), rel=1e-12, abs=1e-300)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=1, max_size=40), st.floats(0.05, 5))
def test_tail_strictly_decreasing(xs, h):
    m = KdeModel(np.array(xs), h)
    ys = max(xs) + h + np.linspace(0, 6 * h, 50)
    vals = m.evaluate(ys)
    assert np.all(np.diff(vals) < 0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=1, max_size=40), st.floats(0.05, 5), st.floats(-120, 120))
def test_paper_sum_is_scaled_density(xs, h, y):
    support = np.array(xs)
    dens = KdeModel(support, h, DENSITY)(y)
    raw = KdeModel(support, h, PAPER_SUM)(y)
    assert raw == pytest.approx(len(xs) * h * dens, rel=1e-12, abs=1e-300)


def test_bad_mode_and_bandwidth():
    with pytest.raises(ValueError):
        KdeModel(np.ones(2), 1.0, "other")
    with pytest.raises(ValueError):
        KdeModel(np.ones(2), 0.0)


def test_streaming_matches_refit_model():
    rng = np.random.default_rng(4)
    buf = RingBuffer(100, rng.standard_normal(100))
    kde = StreamingKde(buf)
    mem = rng.standard_normal(300)
    kde.refit(mem)
    for y in rng.standard_normal(20):
        buf.push(float(y))
        full, alone = kde.likelihood_parts(y + 0.1)
        ref = KdeModel(np.concatenate((mem, buf.raw())), kde.bandwidth)
        assert full == pytest.approx(ref(y + 0.1), rel=1e-12)
        assert alone == pytest.approx(KdeModel(mem, kde.bandwidth)(y + 0.1), rel=1e-12)


def test_streaming_empty_support():
    assert StreamingKde(RingBuffer(5)).likelihood_parts(1.0) == (0.0, 0.0)


def test_streaming_scale_by():
    buf = RingBuffer(10, np.arange(10.0))
    kde = StreamingKde(buf)
    kde.refit(np.arange(20.0))
    before = kde.likelihood(3.3)
    kde.scale_by(2.0)
    buf.scale_by(2.0)
    assert kde.likelihood(6.6) == pytest.approx(before / 2.0, rel=1e-12)


def test_autocorrelation_and_effective_size():
    rng = np.random.default_rng(5)
    iid = rng.standard_normal(5000)
    assert lag1_autocorrelation(iid) < 0.1
    ar = np.zeros(5000)
    for t in range(1, 5000):
        ar[t] = 0.9 * ar[t - 1] + rng.standard_normal()
    assert lag1_autocorrelation(ar) == pytest.approx(0.9, abs=0.05)
    assert effective_size(1000, 0.0) == 1000
    assert effective_size(1000, 0.9) == pytest.approx(1000 * 0.1 / 1.9)
    assert effective_size(3, 0.99) == 2.0
