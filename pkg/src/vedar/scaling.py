"""Data scaling: divide the stream by an explicit or data-driven factor."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import RingBuffer, VedarError

log = logging.getLogger(__name__)

EXPLICIT = "explicit"
AUTO = "auto"


def auto_factor(observations: Sequence[float]) -> float:
    """Power of ten at or below the 95th percentile of ``|observations|``.

    Streams whose 95th percentile is below 10 keep a factor of 1, so small
    valued metrics are never inflated. An all-zero window also yields 1 and
    logs a warning.
    """
    obs = np.abs(np.asarray(observations, dtype=float))
    if obs.size == 0 or not np.any(obs):
        log.warning("all-zero scaling window; falling back to factor 1")
        return 1.0
    p95 = float(np.percentile(obs, 95))
    if p95 < 10.0:
        return 1.0
    exponent = math.floor(math.log10(p95))
    # guard against log10 rounding at exact powers of ten
    if 10.0 ** (exponent + 1) <= p95:
        exponent += 1
    elif 10.0 ** exponent > p95:
        exponent -= 1
    return 10.0 ** exponent


@dataclass
class ScalerState:
    factor: float = 1.0
    mode: str = AUTO
    observation_buffer: RingBuffer = field(default_factory=lambda: RingBuffer(4032))
    recompute_interval: int = 288
    last_recompute_count: int = 0
    count: int = 0
    degenerate: bool = False

    def __post_init__(self) -> None:
        if not self.factor > 0:
            raise VedarError("scaling factor must be positive")
        if self.mode not in (AUTO, EXPLICIT):
            raise VedarError(f"unknown scaling mode {self.mode!r}")

    @classmethod
    def explicit(cls, factor: float) -> "ScalerState":
        return cls(factor=float(factor), mode=EXPLICIT, observation_buffer=RingBuffer(1))

    def scale(self, x: float) -> float:
        return x / self.factor

    def observe(self, x: float) -> None:
        self.count += 1
        if self.mode == AUTO:
            self.observation_buffer.push(x)

    def maybe_recompute(self) -> bool:
        """Refresh the factor at recompute boundaries. Returns True when it changed."""
        if self.mode != AUTO or self.count - self.last_recompute_count < self.recompute_interval:
            return False
        return self.recompute()

    def recompute(self) -> bool:
        self.last_recompute_count = self.count
        values = self.observation_buffer.raw()
        self.degenerate = not np.any(values)
        new = auto_factor(values)
        changed = new != self.factor
        self.factor = new
        return changed
