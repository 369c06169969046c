"""Periodicity estimation (YIN difference function) and residual extraction.

The period is the lag of the deepest trough of the cumulative-mean
normalised difference function, after a linear ramp has been removed from
it. Residuals are taken against the most similar value in a small window
around the point one period earlier, or against an exponential trend level
when no period is active.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Optional, Sequence, Tuple

import numpy as np

from .core import RingBuffer, VedarError


# trend steps are clipped to this many noise-scale units
TREND_CLIP = 10.0


class LagOutOfRange(VedarError):
    pass


class InsufficientHistory(VedarError):
    pass


class HistoryTooShort(VedarError):
    pass


@dataclass(frozen=True)
class YinFrame:
    samples: np.ndarray
    frame_start: int = 0

    @classmethod
    def of(cls, samples: Sequence[float], frame_start: int = 0) -> "YinFrame":
        return cls(np.asarray(samples, dtype=float), frame_start)

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class PeriodicityEstimate:
    period: Optional[int]
    trough_value: float
    computed_at: int = 0


def _samples(frame) -> np.ndarray:
    return frame.samples if isinstance(frame, YinFrame) else np.asarray(frame, dtype=float)


def yin_difference(frame, rho: int) -> float:
    """Squared difference between the frame and itself shifted by ``rho``."""
    s = _samples(frame)
    if rho < 1 or rho >= len(s):
        raise LagOutOfRange(f"lag {rho} outside [1, {len(s) - 1}]")
    d = s[:-rho] - s[rho:]
    return float(np.dot(d, d))


def difference_function(frame, max_lag: int) -> np.ndarray:
    """``D(rho)`` for rho = 1..max_lag (index 0 holds lag 1).

    Uses ``D = sum s[k]^2 + sum s[k+rho]^2 - 2 * autocorr(rho)`` with the
    autocorrelation from an FFT, on the mean-removed frame.
    """
    s = _samples(frame)
    h = len(s)
    if max_lag < 1 or max_lag >= h:
        raise LagOutOfRange(f"max_lag {max_lag} outside [1, {h - 1}]")
    s = s - s.mean()
    sq = np.concatenate(([0.0], np.cumsum(s * s)))
    lags = np.arange(1, max_lag + 1)
    head = sq[h - lags]            # sum_{k < h - rho} s[k]^2
    tail = sq[h] - sq[lags]        # sum_{k >= rho} s[k]^2
    n = 1 << int(np.ceil(np.log2(2 * h)))
    spectrum = np.fft.rfft(s, n)
    acf = np.fft.irfft(spectrum * np.conj(spectrum), n)[1 : max_lag + 1]
    d = head + tail - 2.0 * acf
    # FFT round-off around exact repeats
    d[d < 1e-12 * max(sq[h], 1e-300)] = 0.0
    return d


def yin_cmnd(frame, max_lag: int) -> np.ndarray:
    """Cumulative-mean normalised difference ``D'(rho)`` for rho = 1..max_lag.

    Lags whose normalising mean is zero (constant frames) get ``D' = 1``.
    """
    d = difference_function(frame, max_lag)
    lags = np.arange(1, max_lag + 1)
    cum = np.cumsum(d)
    out = np.ones(max_lag)
    ok = cum > 0
    out[ok] = d[ok] * lags[ok] / cum[ok]
    return out


def detect_period(
    history: Sequence[float],
    min_lag: int = 4,
    max_lag: Optional[int] = None,
    threshold: float = 0.3,
    harmonic_tolerance: float = 0.1,
    computed_at: int = 0,
) -> PeriodicityEstimate:
    """Estimate the dominant period of ``history`` in samples.

    The deepest local minimum of the ramp-detrended ``D'`` curve over
    ``[min_lag, max_lag]`` is the candidate. A shorter trough whose lag
    divides the candidate and whose raw ``D'`` is within
    ``harmonic_tolerance`` of it is preferred, so multiples of the true
    period are not reported. The candidate is accepted only when its raw
    ``D'`` is below ``threshold``.
    """
    s = np.asarray(history, dtype=float)
    if max_lag is None:
        max_lag = len(s) // 2
    if len(s) < 2 * max_lag or max_lag < min_lag + 2:
        raise InsufficientHistory(f"need at least {2 * (min_lag + 2)} samples, have {len(s)}")
    cmnd = yin_cmnd(s, max_lag)
    lags = np.arange(min_lag, max_lag + 1)
    raw = cmnd[min_lag - 1 :]
    slope, intercept = np.polyfit(lags, raw, 1)
    detrended = raw - (slope * lags + intercept)

    inner = np.arange(1, len(raw) - 1)
    is_min = (detrended[inner] <= detrended[inner - 1]) & (detrended[inner] <= detrended[inner + 1])
    minima = inner[is_min]
    if minima.size == 0:
        return PeriodicityEstimate(None, float(raw.min()), computed_at)
    lowest = detrended[minima].min()
    best = int(minima[np.argmax(detrended[minima] <= lowest + 1e-6)])

    best_lag = int(lags[best])
    for m in minima:
        lag = int(lags[m])
        if lag >= best_lag:
            break
        if raw[m] >= threshold or raw[m] > raw[best] + harmonic_tolerance:
            continue
        multiple = round(best_lag / lag)
        if multiple >= 2 and abs(best_lag - multiple * lag) <= max(2, 0.02 * best_lag):
            best, best_lag = int(m), lag
            break

    trough = float(raw[best])
    if trough < threshold:
        return PeriodicityEstimate(best_lag, trough, computed_at)
    return PeriodicityEstimate(None, trough, computed_at)


def most_similar(window: Sequence[float], x: float) -> float:
    """The value in ``window`` closest to ``x``; ties go to the earliest."""
    values = window.tolist() if isinstance(window, np.ndarray) else list(window)
    return float(min(values, key=lambda v: abs(v - x)))


@dataclass
class SeasonalState:
    """State of the de-seasonalising stage.

    ``history`` holds the scaled stream up to (not including) the point
    being processed. ``mode`` is ``"auto"`` for scheduled re-estimation,
    ``"fixed"`` to pin the configured period, or ``"none"``.
    """

    history: RingBuffer
    estimate: PeriodicityEstimate = field(default_factory=lambda: PeriodicityEstimate(None, 1.0))
    trend_level: Optional[float] = None
    trend_span: int = 288
    window_w: int = 5
    recompute_interval: timedelta = timedelta(days=1)
    last_recompute: Optional[datetime] = None
    mode: str = "auto"
    min_lag: int = 4
    threshold: float = 0.3
    count: int = 0
    cycles: int = 2
    deviation: float = 0.0
    deviation_var: float = 0.0
    deviation_count: int = 0
    _window_key: Optional[tuple] = field(default=None, repr=False)
    _window_idx: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def trend_lambda(self) -> float:
        return 2.0 / (self.trend_span + 1.0)

    @property
    def period(self) -> Optional[int]:
        return self.estimate.period

    def recompute_schedule(self, now: datetime) -> bool:
        """Re-estimate the period when a recompute interval has elapsed.

        Returns True when the estimated period changed.
        """
        if self.mode != "auto":
            return False
        if self.last_recompute is not None and now - self.last_recompute < self.recompute_interval:
            return False
        self.last_recompute = now
        return self.reestimate()

    def reestimate(self) -> bool:
        old = self.estimate.period
        try:
            self.estimate = detect_period(self.history.values(), self.min_lag,
                                          threshold=self.threshold, computed_at=self.count)
        except InsufficientHistory:
            return False
        return self.estimate.period != old

    def deseasonalize(self, x: float) -> Tuple[float, float]:
        """Return ``(residual, expected)`` for the scaled value ``x``.

        ``residual = x - expected``; positive residuals mean the point is
        above what the model expected. ``deviation`` is left holding the
        distance from the mean of the reference window (or from the trend),
        a noise scale that, unlike the residual, is not shrunk by picking
        the closest candidate.
        """
        period = self.estimate.period
        if period is not None:
            try:
                window = self.seasonal_window(period)
                expected = most_similar(window, x)
                self.deviation = x - float(window.sum()) / window.size
                return x - expected, expected
            except HistoryTooShort:
                pass
        level = x if self.trend_level is None else self.trend_level
        self.deviation = x - level
        return x - level, level

    def seasonal_window(self, period: int) -> np.ndarray:
        half = self.window_w // 2
        n = len(self.history)
        # history.back(k) is the value k + 1 samples before the current one
        if period - 1 >= n:
            raise HistoryTooShort(f"period {period} exceeds history of {n}")
        cycles = max(self.cycles, 1)
        full = cycles * period - 1 + half < n
        if full and self._window_key == (period, half, cycles):
            return self.history.back_many(self._window_idx)
        spans = []
        for c in range(1, cycles + 1):
            centre = c * period - 1
            if centre >= n:
                break
            spans.append(np.arange(max(centre - half, 0), min(centre + half, n - 1) + 1))
        idx = np.concatenate(spans)
        if full:
            self._window_key, self._window_idx = (period, half, cycles), idx
        return self.history.back_many(idx)

    def update_trend(self, x: float) -> None:
        if self.trend_level is None:
            self.trend_level = x
        else:
            lam = self.trend_lambda
            step = x - self.trend_level
            scale = self.noise_scale
            if scale:
                # a lone spike barely moves the level; ordinary peaks pass untouched
                step = min(max(step, -TREND_CLIP * scale), TREND_CLIP * scale)
            self.trend_level += lam * step

    @property
    def noise_scale(self) -> Optional[float]:
        """EW root-mean-square of ``deviation``; ``None`` until ten points are seen."""
        if self.deviation_count < 10:
            return None
        return math.sqrt(self.deviation_var)

    def observe(self, x: float) -> None:
        """Record the scaled value and update the trend and noise-scale estimates."""
        self.history.push(x)
        self.update_trend(x)
        d2 = self.deviation * self.deviation
        if self.deviation_count:
            # winsorised at five rms so one anomaly cannot swamp the scale
            d2 = min(d2, 25.0 * self.deviation_var) if self.deviation_var > 0 else d2
            lam = self.trend_lambda
            self.deviation_var = (1.0 - lam) * self.deviation_var + lam * d2
        else:
            self.deviation_var = d2
        self.deviation_count += 1
        self.count += 1

    def scale_by(self, ratio: float) -> None:
        self.history.scale_by(ratio)
        if self.trend_level is not None:
            self.trend_level *= ratio
        self.deviation *= ratio
        self.deviation_var *= ratio * ratio
