"""Types and configuration shared by every layer, plus the fixed-capacity buffer."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, fields
from datetime import datetime, timedelta
from typing import Iterable, Optional, Union

import numpy as np

AUTO = "auto"
SILVERMAN = "silverman"


class VedarError(ValueError):
    """Base class for input and configuration errors."""


class RejectedValue(VedarError):
    pass


class NonFiniteValue(RejectedValue):
    pass


class NonMonotonicTimestamp(VedarError):
    pass


@dataclass(frozen=True, slots=True)
class TimedValue:
    timestamp: datetime
    value: float


class ChangeType(str, enum.Enum):
    SEASONAL_INTERRUPTION = "seasonal_interruption"
    ERRATIC = "erratic"
    LINEAR = "linear"


@dataclass(frozen=True, slots=True)
class ChangeAlert:
    """Accountability payload attached to every detected behaviour change.

    ``actual`` and ``expected`` are in the raw units of the source metric;
    ``likelihood`` is the density of the smoothed residual and
    ``prior_likelihood`` the density of the point before it.
    """

    timestamp: datetime
    actual: float
    expected: float
    change_type: ChangeType
    likelihood: float
    prior_likelihood: float
    index: int = -1

    def to_record(self) -> dict:
        return {
            "timestamp": self.timestamp.strftime("%Y-%m-%d %H:%M:%S"),
            "actual": self.actual,
            "expected": self.expected,
            "type": self.change_type.value,
            "likelihood": self.likelihood,
        }


@dataclass
class DetectorConfig:
    """Every tunable of the pipeline. The defaults need no per-dataset tuning.

    Fields accepting ``"auto"`` (or ``"silverman"`` for the bandwidth) are
    estimated from the data. ``period`` may be ``"auto"``, a fixed lag in
    samples, or ``None`` to disable de-seasonalisation.
    """

    scaling_factor: Union[float, str] = AUTO
    warmup_points: int = 300
    seasonal_window_w: int = 5
    seasonal_cycles: int = 2
    pewma_alpha: float = 0.97
    pewma_beta: float = 0.5
    substitute_k: float = 3.0
    kalman_q_ratio: float = 1e-3
    kalman_gate: float = 5.0
    kalman_clip: Optional[float] = 1.345
    kalman_adaptive_r: bool = True
    kde_bandwidth: Union[float, str] = SILVERMAN
    kde_buffer: int = 100
    kde_norm: str = "density"
    resample_via_kde: bool = False
    sample_budget: int = 500
    dbscan_eps: Union[float, str] = AUTO
    dbscan_min_pts: int = 4
    sigma_multiplier: float = 3.0
    empirical_warmup: int = 30
    delta_span: int = 100
    empirical_min_ratio: float = 2.0
    empirical_min_share: float = 0.05
    linear_scale_orders: float = 4.0
    linear_scale_window: int = 20
    period: Union[int, str, None] = AUTO
    min_lag: int = 4
    aperiodicity_threshold: float = 0.3
    periodicity_recompute_interval: timedelta = timedelta(days=1)
    periodicity_history: timedelta = timedelta(days=14)
    cooldown: bool = True
    min_cooldown: int = 50
    seed: int = 0

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.scaling_factor != AUTO and not _positive(self.scaling_factor):
            raise VedarError(f"scaling_factor must be positive or 'auto', got {self.scaling_factor!r}")
        if self.kde_bandwidth != SILVERMAN and not _positive(self.kde_bandwidth):
            raise VedarError(f"kde_bandwidth must be positive or 'silverman', got {self.kde_bandwidth!r}")
        if self.dbscan_eps != AUTO and not _positive(self.dbscan_eps):
            raise VedarError(f"dbscan_eps must be positive or 'auto', got {self.dbscan_eps!r}")
        if not 0.0 < self.pewma_alpha < 1.0:
            raise VedarError("pewma_alpha must lie in (0, 1)")
        if not 0.0 <= self.pewma_beta <= 1.0:
            raise VedarError("pewma_beta must lie in [0, 1]")
        if self.kde_norm not in ("density", "paper_sum"):
            raise VedarError("kde_norm must be 'density' or 'paper_sum'")
        for name in ("warmup_points", "seasonal_window_w", "sample_budget", "dbscan_min_pts",
                     "linear_scale_window", "kde_buffer", "min_lag", "delta_span", "seasonal_cycles"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise VedarError(f"{name} must be a positive integer, got {value!r}")
        if not self.empirical_min_ratio >= 1.0:
            raise VedarError("empirical_min_ratio must be at least 1")
        if not 0.0 <= self.empirical_min_share < 1.0:
            raise VedarError("empirical_min_share must lie in [0, 1)")
        for name in ("sigma_multiplier", "linear_scale_orders", "substitute_k"):
            if not _positive(getattr(self, name)):
                raise VedarError(f"{name} must be positive")
        if self.period not in (AUTO, None) and not (isinstance(self.period, (int, np.integer)) and self.period >= 1):
            raise VedarError(f"period must be 'auto', None or a positive integer, got {self.period!r}")
        if self.periodicity_recompute_interval <= timedelta(0) or self.periodicity_history <= timedelta(0):
            raise VedarError("periodicity intervals must be positive durations")

    def override(self, **changes) -> "DetectorConfig":
        known = {f.name for f in fields(self)}
        unknown = set(changes) - known
        if unknown:
            raise VedarError(f"unknown config fields: {sorted(unknown)}")
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return DetectorConfig(**values)


def _positive(x) -> bool:
    return isinstance(x, (int, float, np.integer, np.floating)) and math.isfinite(x) and x > 0


class RingBuffer:
    """Fixed-capacity FIFO of floats backed by a numpy array.

    Pushing at capacity evicts the oldest element. ``values()`` returns the
    elements oldest-first; ``raw()`` returns them in storage order, which is
    cheaper and sufficient for order-free consumers such as a KDE.
    """

    __slots__ = ("capacity", "_data", "_head", "_size")

    def __init__(self, capacity: int, values: Iterable[float] = ()):
        if capacity < 1:
            raise VedarError("capacity must be positive")
        self.capacity = int(capacity)
        self._data = np.zeros(self.capacity)
        self._head = 0
        self._size = 0
        for x in values:
            self.push(x)

    def push(self, x: float) -> None:
        if not math.isfinite(x):
            raise RejectedValue(f"non-finite value {x!r}")
        self._data[self._head] = x
        self._head = (self._head + 1) % self.capacity
        if self._size < self.capacity:
            self._size += 1

    def extend(self, xs: Iterable[float]) -> None:
        for x in xs:
            self.push(x)

    def __len__(self) -> int:
        return self._size

    @property
    def full(self) -> bool:
        return self._size == self.capacity

    def back(self, k: int) -> float:
        """Element ``k`` steps before the newest (``back(0)`` is the newest)."""
        if not 0 <= k < self._size:
            raise IndexError(k)
        return float(self._data[(self._head - 1 - k) % self.capacity])

    def back_many(self, ks: np.ndarray) -> np.ndarray:
        """Vectorised :meth:`back`; ``ks`` must lie in ``[0, len)``."""
        return self._data[(self._head - 1 - ks) % self.capacity]

    def values(self) -> np.ndarray:
        if self._size < self.capacity:
            return self._data[: self._size].copy()
        return np.concatenate((self._data[self._head:], self._data[: self._head]))

    def raw(self) -> np.ndarray:
        return self._data[: self._size]

    def scale_by(self, ratio: float) -> None:
        self._data *= ratio

    def clear(self) -> None:
        self._head = 0
        self._size = 0

    def __repr__(self) -> str:
        return f"RingBuffer(capacity={self.capacity}, values={self.values().tolist()!r})"


def validate_point(prev_ts: Optional[datetime], p: TimedValue) -> TimedValue:
    if prev_ts is not None and p.timestamp <= prev_ts:
        raise NonMonotonicTimestamp(f"timestamp {p.timestamp} does not follow {prev_ts}")
    if not math.isfinite(p.value):
        raise NonFiniteValue(f"non-finite value at {p.timestamp}")
    return p


def modal_interval(timestamps: Iterable[datetime]) -> timedelta:
    """Most common gap between consecutive timestamps (the sampling interval)."""
    ts = list(timestamps)
    if len(ts) < 2:
        return timedelta(minutes=5)
    gaps = np.diff(np.array([t.timestamp() for t in ts]))
    values, counts = np.unique(np.round(gaps), return_counts=True)
    seconds = float(values[np.argmax(counts)])
    return timedelta(seconds=max(seconds, 1.0))


def samples_in(duration: timedelta, interval: timedelta) -> int:
    return max(1, int(round(duration / interval)))


__all__ = [
    "AUTO", "SILVERMAN", "ChangeAlert", "ChangeType", "DetectorConfig", "NonFiniteValue",
    "NonMonotonicTimestamp", "RejectedValue", "RingBuffer", "TimedValue", "VedarError",
    "modal_interval", "samples_in", "validate_point",
]
