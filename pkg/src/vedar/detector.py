"""Per-point pipeline, likelihood rules, change classification and alerting."""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Dict, Iterable, Iterator, List, Optional

import numpy as np

from .core import (
    AUTO, ChangeAlert, ChangeType, DetectorConfig, RingBuffer, TimedValue,
    modal_interval, samples_in, validate_point,
)
from .likelihood import StreamingKde, lag1_autocorrelation
from .memory import MemoryState
from .scaling import ScalerState
from .seasonality import PeriodicityEstimate, SeasonalState
from .smoothing import KalmanState, PewmaState, Smoother

LOG_GUARD = 1e-300


@dataclass
class LikelihoodTrack:
    """Recent likelihoods and running moments of successive differences.

    ``recent`` holds the values the scale rule watches. The detector feeds
    it the likelihood under the memorised sample alone, and the empirical
    rule the full memory-plus-buffer likelihood; used standalone, one
    stream serves both.
    """

    window: int = 20
    sigma_multiplier: float = 3.0
    min_ratio: float = 1.0
    min_share: float = 0.0
    typical: float = 0.0
    orders: float = 4.0
    warmup: int = 30
    span: int = 100
    recent: RingBuffer = None
    prev: Optional[float] = None
    delta_mu: float = 0.0
    delta_var: float = 0.0
    n_deltas: int = 0
    since_empirical: int = 1 << 30
    latched: bool = False

    def __post_init__(self) -> None:
        if self.recent is None:
            self.recent = RingBuffer(self.window)

    @property
    def delta_sigma(self) -> float:
        return math.sqrt(self.delta_var)

    def empirical_rule(self, lik: float) -> bool:
        """Three-sigma test of the jump from the previous likelihood.

        The jump must also be material: the larger of the two likelihoods
        must exceed the smaller by at least ``min_ratio``, and the jump
        must be at least ``min_share`` of ``typical``, the density of a
        typical memorised value. Successive differences of a slowly
        wandering smoothed residual are close to Gaussian, so the sigma
        test alone trips on about 0.3% of points; the share test ignores
        jitter between two likelihoods that are both already negligible.
        """
        if self.prev is None or self.n_deltas < self.warmup:
            return False
        jump = abs(lik - self.prev)
        if jump <= self.sigma_multiplier * self.delta_sigma:
            return False
        if jump < self.min_share * self.typical:
            return False
        hi, lo = max(lik, self.prev), min(lik, self.prev)
        return hi >= self.min_ratio * lo

    def scale_change_rule(self, lik: float) -> bool:
        """Has the likelihood fallen ``orders`` decades below the window's older half?

        Suppressed while a three-sigma jump lies inside the window, since
        the drop is then already accounted for as a sudden change. After a
        fire the rule stays latched until a whole window of watched
        likelihoods is back above ``min_share`` of ``typical``, i.e. until
        the series has returned to, or the memory has learned, the new
        behaviour. Without
        the latch one slow drift splits into several alerts.
        """
        if self.latched:
            return False
        if not self.recent.full or self.since_empirical < self.window:
            return False
        older = self.recent.values()[: self.window // 2].tolist()
        baseline = statistics.median(older)
        drop = math.log10(baseline + LOG_GUARD) - math.log10(lik + LOG_GUARD)
        if drop >= self.orders:
            self.latched = True
            return True
        return False

    def update(self, lik: float, fired_empirical: bool, watched: Optional[float] = None) -> None:
        if self.prev is not None:
            if fired_empirical:
                self.since_empirical = 0
            else:
                self.since_empirical += 1
                d = lik - self.prev
                a = 2.0 / (self.span + 1.0) if self.n_deltas else 1.0
                diff = d - self.delta_mu
                self.delta_mu += a * diff
                self.delta_var = (1.0 - a) * (self.delta_var + a * diff * diff)
                self.n_deltas += 1
        self.prev = lik
        self.recent.push(lik if watched is None else watched)
        if self.latched and self.recent.full and self.recent.values().min() >= self.min_share * self.typical:
            self.latched = False

    def rebase(self, old: np.ndarray, new: np.ndarray, watched: Optional[np.ndarray] = None) -> None:
        """Carry the track over to a refitted density model.

        ``old`` and ``new`` are the likelihoods of the same recent smoothed
        values under the previous and the refitted model, oldest first.
        The recent window is replaced by its values under the new model
        (``watched`` when given) and the delta moments are converted by the
        ratio of delta spreads.
        """
        if new.size == 0:
            return
        fresh = new if watched is None else watched
        k = min(fresh.size, self.window)
        self.recent.clear()
        self.recent.extend(fresh[-k:])
        self.prev = float(new[-1])
        ratio = math.nan
        if new.size > 2:
            s_old = float(np.std(np.diff(old)))
            s_new = float(np.std(np.diff(new)))
            if s_old > 0 and s_new > 0:
                ratio = s_new / s_old
        if not math.isfinite(ratio):
            m_old = float(np.median(old))
            ratio = float(np.median(new)) / m_old if m_old > 0 else 1.0
        self.delta_mu *= ratio
        self.delta_var *= ratio * ratio

    def scale_by(self, ratio: float) -> None:
        """Re-express stored densities after the density unit changed by ``ratio``."""
        self.recent.scale_by(ratio)
        self.delta_mu *= ratio
        self.delta_var *= ratio * ratio
        self.typical *= ratio
        if self.prev is not None:
            self.prev *= ratio


def classify(period_active: bool, fired_empirical: bool, fired_scale: bool) -> ChangeType:
    if not (fired_empirical or fired_scale):
        raise ValueError("classify needs at least one fired rule")
    if period_active:
        return ChangeType.SEASONAL_INTERRUPTION
    if fired_empirical:
        return ChangeType.ERRATIC
    return ChangeType.LINEAR


@dataclass
class DetectorOutput:
    alert: Optional[ChangeAlert]
    index: int
    likelihood: float = math.nan
    smoothed: float = math.nan
    residual: float = math.nan
    expected: float = math.nan
    period_active: bool = False
    rule: Optional[str] = None
    fired_empirical: bool = False
    fired_scale: bool = False
    warmup: bool = False


class Cooldown:
    """Suppress repeats of the same change type within a sample horizon.

    The horizon is a quarter of the active period, and never shorter than
    ``minimum`` samples.
    """

    def __init__(self, minimum: int = 50):
        self.minimum = minimum
        self.last: Dict[ChangeType, int] = {}

    def horizon(self, period: Optional[int]) -> int:
        return max(self.minimum, (period or 0) // 4)

    def admit(self, alert: ChangeAlert, period: Optional[int] = None) -> bool:
        last = self.last.get(alert.change_type)
        if last is not None and alert.index - last < self.horizon(period):
            return False
        self.last[alert.change_type] = alert.index
        return True


def cooldown_filter(alerts: Iterable[ChangeAlert], cooldown: int = 50) -> Iterator[ChangeAlert]:
    """Drop alerts that follow an emitted alert of the same type by fewer than ``cooldown`` samples."""
    gate = Cooldown(cooldown)
    for alert in alerts:
        if gate.admit(alert):
            yield alert


class Detector:
    """Single-pass behaviour change detector.

    Feed points in timestamp order through :meth:`process` (or :meth:`run`
    for an iterator of alerts). The first ``warmup_points`` points are
    buffered; when the buffer fills, the sampling interval, scaling
    factor, period, Kalman noise levels and first memory sample are
    estimated from it, and detection starts with the next point.

    Example:
        det = Detector()
        for alert in det.run(points):
            print(alert.change_type, alert.actual, alert.expected)
    """

    def __init__(self, config: Optional[DetectorConfig] = None):
        self.config = config or DetectorConfig()
        self.config.validate()
        self.n = 0
        self.ready = False
        self.interval: Optional[timedelta] = None
        self.samples_per_day: Optional[int] = None
        self.cooldown = Cooldown(self.config.min_cooldown) if self.config.cooldown else None
        self._prev_ts: Optional[datetime] = None
        self._warm: List[TimedValue] = []
        self.rng = np.random.default_rng(self.config.seed)
        self.scaler: Optional[ScalerState] = None
        self.seasonal: Optional[SeasonalState] = None
        self.smoother: Optional[Smoother] = None
        self.memory: Optional[MemoryState] = None
        self.kde: Optional[StreamingKde] = None
        self.kde_buffer: Optional[RingBuffer] = None
        self.track: Optional[LikelihoodTrack] = None

    # public API

    def process(self, p: TimedValue) -> DetectorOutput:
        """Run one point through the pipeline (``process_point``)."""
        validate_point(self._prev_ts, p)
        self._prev_ts = p.timestamp
        index = self.n
        self.n += 1
        if not self.ready:
            self._warm.append(p)
            if len(self._warm) >= self.config.warmup_points:
                self._bootstrap()
            return DetectorOutput(None, index, warmup=True)
        out = self._step(p, index)
        if out.alert is not None and self.cooldown is not None:
            if not self.cooldown.admit(out.alert, self.seasonal.period):
                out.alert = None
        return out

    process_point = process

    def run(self, points: Iterable[TimedValue]) -> Iterator[ChangeAlert]:
        for p in points:
            out = self.process(p)
            if out.alert is not None:
                yield out.alert

    @property
    def period(self) -> Optional[int]:
        return self.seasonal.period if self.seasonal is not None else None

    def footprint(self) -> int:
        """Number of floats held in buffers and samples; bounded by configuration."""
        if not self.ready:
            return len(self._warm)
        return (self.scaler.observation_buffer.capacity + self.seasonal.history.capacity
                + self.memory.reservoir.capacity + self.memory.samples.size
                + self.kde_buffer.capacity + self.track.recent.capacity
                + len(self._warm))

    # internals

    def _bootstrap(self) -> None:
        cfg = self.config
        warm = self._warm
        self.interval = modal_interval(p.timestamp for p in warm)
        self.samples_per_day = samples_in(timedelta(days=1), self.interval)
        history_cap = max(samples_in(cfg.periodicity_history, self.interval), cfg.warmup_points)
        slow_cadence = samples_in(cfg.periodicity_recompute_interval, self.interval)

        raw = np.array([p.value for p in warm])
        if cfg.scaling_factor == AUTO:
            self.scaler = ScalerState(factor=1.0, observation_buffer=RingBuffer(history_cap),
                                      recompute_interval=slow_cadence)
            for x in raw:
                self.scaler.observe(float(x))
            self.scaler.recompute()
        else:
            self.scaler = ScalerState.explicit(float(cfg.scaling_factor))
            self.scaler.count = len(raw)
        scaled = raw / self.scaler.factor

        if cfg.period == AUTO:
            mode = "auto"
        elif cfg.period is None:
            mode = "none"
        else:
            mode = "fixed"
        self.seasonal = SeasonalState(
            history=RingBuffer(history_cap), trend_span=self.samples_per_day,
            window_w=cfg.seasonal_window_w, recompute_interval=cfg.periodicity_recompute_interval,
            mode=mode, min_lag=cfg.min_lag, threshold=cfg.aperiodicity_threshold,
            cycles=cfg.seasonal_cycles,
        )
        if mode == "fixed":
            self.seasonal.estimate = PeriodicityEstimate(int(cfg.period), 0.0)
        elif mode == "auto":
            self.seasonal.history.extend(scaled)
            self.seasonal.reestimate()
            self.seasonal.history.clear()
            self.seasonal.last_recompute = warm[-1].timestamp

        self.smoother = Smoother(PewmaState(cfg.pewma_alpha, cfg.pewma_beta), KalmanState(),
                                 k=cfg.substitute_k, gate=cfg.kalman_gate,
                                 clip=cfg.kalman_clip)
        stage_one = []
        for x in scaled:
            residual, _ = self.seasonal.deseasonalize(float(x))
            scale = self.seasonal.noise_scale
            self.seasonal.observe(float(x))
            stage_one.append(self.smoother.stage_one(residual, scale=scale))
        r = float(np.var(stage_one))
        if not r > 0:
            r = 1e-12 * (1.0 + float(np.mean(np.abs(scaled))) ** 2)
        self.smoother.kalman = KalmanState(r=r, q=cfg.kalman_q_ratio * r)
        if cfg.kalman_adaptive_r:
            self.smoother.r_span = max(self.samples_per_day // 4, 10)
        smoothed = [self.smoother.stage_two(s) for s in stage_one]

        self.memory = MemoryState(
            reservoir=RingBuffer(history_cap, smoothed), sample_budget=cfg.sample_budget,
            min_pts=cfg.dbscan_min_pts, eps=None if cfg.dbscan_eps == AUTO else float(cfg.dbscan_eps),
            rebuild_interval=slow_cadence, resample_via_kde=cfg.resample_via_kde, rng=self.rng,
        )
        self.memory.rebuild_samples()
        self.memory.last_rebuild_count = self.n
        self.kde_buffer = RingBuffer(cfg.kde_buffer, smoothed[-cfg.kde_buffer:])
        self.kde = StreamingKde(self.kde_buffer, cfg.kde_bandwidth, cfg.kde_norm)
        self.kde.refit(self.memory.samples, lag1_autocorrelation(self.memory.reservoir.values()))

        self.track = LikelihoodTrack(
            window=cfg.linear_scale_window, sigma_multiplier=cfg.sigma_multiplier,
            min_ratio=cfg.empirical_min_ratio, min_share=cfg.empirical_min_share,
            orders=cfg.linear_scale_orders, warmup=cfg.empirical_warmup, span=cfg.delta_span,
        )
        self.track.typical = self._typical_density()
        for y in smoothed:
            lik, alone = self.kde.likelihood_parts(y)
            self.track.update(lik, self.track.empirical_rule(lik), alone)
        self._warm = []
        self.ready = True

    def _typical_density(self) -> float:
        samples = self.memory.samples
        if samples.size == 0:
            return 0.0
        # a hundred probes are plenty for a median and keep refits cheap
        step = max(samples.size // 100, 1)
        return float(np.median(self.kde.evaluate(samples[::step])))

    def _rescale(self, ratio: float) -> None:
        self.seasonal.scale_by(ratio)
        self.smoother.scale_by(ratio)
        self.memory.scale_by(ratio)
        self.kde_buffer.scale_by(ratio)
        self.kde.scale_by(ratio)
        self.track.scale_by(1.0 / ratio)

    def _step(self, p: TimedValue, index: int) -> DetectorOutput:
        raw = p.value
        old_factor = self.scaler.factor
        self.scaler.observe(raw)
        if self.scaler.maybe_recompute():
            self._rescale(old_factor / self.scaler.factor)
        factor = self.scaler.factor
        x = raw / factor

        seasonal = self.seasonal
        seasonal.recompute_schedule(p.timestamp)
        residual, expected = seasonal.deseasonalize(x)
        scale = seasonal.noise_scale
        seasonal.observe(x)
        smoothed = self.smoother.step(residual, scale=scale)

        lik, alone = self.kde.likelihood_parts(smoothed)
        track = self.track
        prior = track.prev
        fired_empirical = track.empirical_rule(lik)
        # one rule per alert: a sudden drop already explains the point
        fired_scale = not fired_empirical and track.scale_change_rule(alone)
        track.update(lik, fired_empirical, alone)

        self.memory.push(smoothed)
        self.kde_buffer.push(smoothed)
        if self.memory.maybe_rebuild(self.n):
            recent = self.kde_buffer.values()
            before = self.kde.evaluate(recent)
            self.kde.refit(self.memory.samples, lag1_autocorrelation(self.memory.reservoir.values()))
            track.rebase(before, self.kde.evaluate(recent), self.kde.evaluate_memory(recent))
            track.typical = self._typical_density()

        period_active = seasonal.period is not None
        out = DetectorOutput(None, index, lik, smoothed, residual, expected * factor, period_active,
                             fired_empirical=fired_empirical, fired_scale=fired_scale)
        if fired_empirical or fired_scale:
            out.rule = "empirical" if fired_empirical else "scale"
            out.alert = ChangeAlert(
                timestamp=p.timestamp, actual=raw, expected=expected * factor,
                change_type=classify(period_active, fired_empirical, fired_scale),
                likelihood=lik, prior_likelihood=math.nan if prior is None else prior, index=index,
            )
        return out


def detect(points: Iterable[TimedValue], config: Optional[DetectorConfig] = None) -> List[ChangeAlert]:
    """Run a fresh detector over ``points`` and return its alerts."""
    return list(Detector(config).run(points))
