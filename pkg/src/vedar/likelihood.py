"""Gaussian kernel density over memorised samples and the recent buffer."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .core import SILVERMAN, VedarError

DENSITY = "density"
PAPER_SUM = "paper_sum"
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class EmptySupport(VedarError):
    pass


def lag1_autocorrelation(series: Sequence[float]) -> float:
    """Robust lag-one autocorrelation, clipped to ``[0, 1)``.

    For a stationary AR(1) process ``var(diff) = 2 (1 - rho) var(x)``; both
    spreads are taken as median absolute deviations so that isolated
    outliers in the series do not masquerade as independence.
    """
    x = np.asarray(series, dtype=float)
    if x.size < 3:
        return 0.0
    spread = float(np.median(np.abs(x - np.median(x))))
    if spread == 0.0:
        return 0.0
    d = np.diff(x)
    step = float(np.median(np.abs(d - np.median(d))))
    rho = 1.0 - 0.5 * (step / spread) ** 2
    return min(max(rho, 0.0), 1.0 - 1e-9)


def effective_size(n: int, rho: float) -> float:
    """Number of independent draws carrying the information of ``n`` AR(1) draws."""
    return max(min(n * (1.0 - rho) / (1.0 + rho), float(n)), 2.0)


def silverman_bandwidth(x: Sequence[float], n: Optional[float] = None) -> float:
    """Silverman's rule ``0.9 * min(sd, IQR/1.34) * n^(-1/5)``.

    ``n`` defaults to the sample size; pass an effective size for dependent
    samples. When one of the spread estimates is zero the other is used.
    The result is floored at a millionth of the data range.
    """
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise EmptySupport("bandwidth of an empty sample")
    n = x.size if n is None else n
    sd = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
    q75, q25 = np.percentile(x, [75, 25])
    iqr = float(q75 - q25) / 1.34
    spread = min(sd, iqr) if sd > 0 and iqr > 0 else max(sd, iqr)
    h = 0.9 * spread * n ** -0.2
    return max(h, 1e-6 * (float(np.ptp(x)) + 1e-12))


def gaussian_kde_sum(support: np.ndarray, y: float, bandwidth: float) -> float:
    """Unnormalised sum of standard-normal kernels ``sum K((y - x_i) / h)``."""
    z = (y - support) / bandwidth
    return float(np.exp(-0.5 * z * z).sum()) * _INV_SQRT_2PI


@dataclass(frozen=True)
class KdeModel:
    support: np.ndarray
    bandwidth: float
    norm_mode: str = DENSITY

    def __post_init__(self) -> None:
        if self.support.size == 0:
            raise EmptySupport("KDE needs at least one support point")
        if not self.bandwidth > 0:
            raise VedarError("bandwidth must be positive")
        if self.norm_mode not in (DENSITY, PAPER_SUM):
            raise VedarError(f"unknown norm mode {self.norm_mode!r}")

    def likelihood(self, y: float) -> float:
        total = gaussian_kde_sum(self.support, y, self.bandwidth)
        if self.norm_mode == PAPER_SUM:
            return total
        return total / (self.support.size * self.bandwidth)

    __call__ = likelihood

    def evaluate(self, ys: Sequence[float]) -> np.ndarray:
        ys = np.asarray(ys, dtype=float)
        z = (ys[:, None] - self.support[None, :]) / self.bandwidth
        total = np.exp(-0.5 * z * z).sum(axis=1) * _INV_SQRT_2PI
        if self.norm_mode == PAPER_SUM:
            return total
        return total / (self.support.size * self.bandwidth)


def fit_kde(memory_samples: Sequence[float], buffer: Sequence[float],
            bandwidth: Union[float, str] = SILVERMAN, norm_mode: str = DENSITY,
            rho: float = 0.0) -> KdeModel:
    """Fit over memory plus buffer.

    ``rho`` is the lag-one autocorrelation of the process the support was
    drawn from; the Silverman rule then uses the matching effective size.
    """
    support = np.concatenate((np.asarray(memory_samples, dtype=float),
                              np.asarray(buffer, dtype=float)))
    if support.size == 0:
        raise EmptySupport("KDE needs at least one support point")
    if bandwidth == SILVERMAN:
        h = silverman_bandwidth(support, effective_size(support.size, rho))
    else:
        h = float(bandwidth)
    return KdeModel(support, h, norm_mode)


def kde_likelihood(model: KdeModel, y: float) -> float:
    return model.likelihood(y)


class StreamingKde:
    """KDE whose support is a fixed memory sample plus a live ring buffer.

    The bandwidth and the memory part change only on :meth:`refit`; the
    buffer part is read in place on every evaluation, so per-point cost is
    linear in the support size with no refitting.
    """

    def __init__(self, buffer, bandwidth: Union[float, str] = SILVERMAN, norm_mode: str = DENSITY):
        self.buffer = buffer
        self.bandwidth_rule = bandwidth
        self.norm_mode = norm_mode
        self.memory = np.empty(0)
        self.bandwidth = 1.0

    def refit(self, memory_samples: np.ndarray, rho: float = 0.0) -> KdeModel:
        model = fit_kde(memory_samples, self.buffer.raw(), self.bandwidth_rule, self.norm_mode, rho)
        self.memory = np.asarray(memory_samples, dtype=float)
        self.bandwidth = model.bandwidth
        return model

    def likelihood(self, y: float) -> float:
        return self.likelihood_parts(y)[0]

    def likelihood_parts(self, y: float) -> Tuple[float, float]:
        """``(full, memory_only)``: the density over memory plus buffer, and over memory alone."""
        h = self.bandwidth
        m = self.memory.size
        support = np.concatenate((self.memory, self.buffer.raw()))
        if support.size == 0:
            return 0.0, 0.0
        z = (y - support) / h
        k = np.exp(-0.5 * z * z)
        mem = float(k[:m].sum()) * _INV_SQRT_2PI
        total = float(k.sum()) * _INV_SQRT_2PI
        if self.norm_mode == PAPER_SUM:
            return total, mem
        full = total / (support.size * h)
        alone = mem / (m * h) if m else 0.0
        return full, alone

    def evaluate_memory(self, ys: Sequence[float]) -> np.ndarray:
        if self.memory.size == 0:
            return np.zeros(len(ys))
        return KdeModel(self.memory, self.bandwidth, self.norm_mode).evaluate(ys)

    def evaluate(self, ys: Sequence[float]) -> np.ndarray:
        return self.model().evaluate(ys)

    def model(self) -> KdeModel:
        support = np.concatenate((self.memory, self.buffer.raw()))
        return KdeModel(support, self.bandwidth, self.norm_mode)

    def scale_by(self, ratio: float) -> None:
        self.memory = self.memory * ratio
        self.bandwidth *= ratio
