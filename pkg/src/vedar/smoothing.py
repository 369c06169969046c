"""Two-stage smoothing of the residual: probabilistic EWMA, then a scalar Kalman filter."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

from .core import VedarError

log = logging.getLogger(__name__)


class ZeroInnovationCovariance(VedarError):
    pass


@dataclass
class PewmaState:
    """Local mean and spread with a probability-weighted forgetting factor.

    The effective weight on history is ``alpha * (1 - beta * p_t)``: highly
    probable points move the mean faster, improbable ones barely move it.

    By default the spread is an exponentially weighted variance of the
    innovation ``x - mu`` under the plain ``alpha``, so ``sigma`` keeps a
    memory of roughly ``1 / (1 - alpha)`` points. With ``coupled_spread``
    the second moment uses the effective weight as well; that memory is
    only a few points long when ``beta * p_t`` is large, which makes the
    substitution band erratic.
    """

    alpha: float = 0.97
    beta: float = 0.5
    mu: float = 0.0
    second_moment: float = 0.0
    variance: float = 0.0
    count: int = 0
    coupled_spread: bool = False

    @property
    def sigma(self) -> float:
        if self.coupled_spread:
            return math.sqrt(max(self.second_moment - self.mu * self.mu, 0.0))
        return math.sqrt(max(self.variance, 0.0))

    def probability(self, x: float) -> float:
        """Normal probability of ``x`` rescaled so the mode maps to 1."""
        if self.count == 0:
            return 1.0
        sigma = self.sigma
        if sigma == 0.0:
            return 1.0 if x == self.mu else 0.0
        z = (x - self.mu) / sigma
        return math.exp(-0.5 * z * z)

    def update(self, x: float, p_t: float) -> None:
        if self.count == 0:
            self.mu = x
            self.second_moment = x * x
            self.variance = 0.0
            self.count = 1
            return
        if not 0.0 <= p_t <= 1.0:
            log.debug("clamping p_t=%r into [0, 1]", p_t)
            p_t = min(max(p_t, 0.0), 1.0)
        a = self.alpha * (1.0 - self.beta * p_t)
        d = x - self.mu
        self.variance = self.alpha * self.variance + (1.0 - self.alpha) * d * d
        self.mu = a * self.mu + (1.0 - a) * x
        self.second_moment = a * self.second_moment + (1.0 - a) * x * x
        self.count += 1

    def substitute(self, x: float, k: float = 3.0) -> float:
        """Replace ``x`` by the local mean when it lies within ``k`` sigma of it."""
        if self.count == 0:
            return x
        sigma = self.sigma
        if sigma == 0.0:
            return x
        return self.mu if abs(x - self.mu) < k * sigma else x

    def scale_by(self, ratio: float) -> None:
        self.mu *= ratio
        self.second_moment *= ratio * ratio
        self.variance *= ratio * ratio


@dataclass
class KalmanState:
    """Scalar Kalman filter with unit transition and measurement functions.

    ``q`` is added to the predicted covariance on every step; without it a
    unit transition drives ``p_cov`` to zero and the filter stops tracking.
    """

    r: float = 1.0
    q: float = 1e-3
    f: float = 1.0
    h_meas: float = 1.0
    x_hat: float = 0.0
    p_cov: float = 0.0
    initialized: bool = False
    x_pred: float = 0.0
    p_pred: float = 0.0
    s: float = 0.0
    gain: float = 0.0
    innovation: float = 0.0

    def predict(self) -> Tuple[float, float]:
        self.x_pred = self.f * self.x_hat
        self.p_pred = self.f * self.p_cov * self.f + self.q
        return self.x_pred, self.p_pred

    def correct(self, z: float) -> float:
        h = self.h_meas
        self.s = h * self.p_pred * h + self.r
        if self.s == 0.0:
            raise ZeroInnovationCovariance("innovation covariance is zero; r must be positive")
        self.gain = self.p_pred * h / self.s
        self.innovation = z - h * self.x_pred
        self.x_hat = self.x_pred + self.gain * self.innovation
        self.p_cov = (1.0 - self.gain * h) * self.p_pred
        return self.x_hat

    def start(self, z: float) -> float:
        self.x_hat = z
        self.p_cov = self.r
        self.initialized = True
        return z

    def scale_by(self, ratio: float) -> None:
        r2 = ratio * ratio
        self.x_hat *= ratio
        self.x_pred *= ratio
        self.p_cov *= r2
        self.p_pred *= r2
        self.q *= r2
        self.r *= r2


class Smoother:
    """Runs one residual through both smoothing stages.

    Stage two gates on the size of the innovation measured in units of the
    stage-one spread, or of a caller-supplied noise scale: when
    ``|z - x_pred|`` exceeds ``gate * sigma`` the
    predicted covariance is widened to the squared innovation, so a large
    behaviour change is passed through instead of being averaged away while
    moderate outliers are still damped. ``gate=None`` keeps the plain filter.

    Innovations below the gate are clipped to ``clip`` innovation standard
    deviations, so a moderate outlier that escaped stage one moves the
    estimate no further than ordinary noise does. ``clip=None`` disables it.

    With ``r_span`` set, the measurement noise ``r`` follows an
    exponentially weighted variance of the ungated stage-one outputs and
    ``q`` keeps its ratio to ``r``; the steady-state gain is unchanged but
    the clip bound follows the current noise level. Squared deviations
    enter that variance capped at ``gate**2 * r``.
    """

    def __init__(self, pewma: PewmaState, kalman: KalmanState, k: float = 3.0,
                 gate: Optional[float] = 5.0, clip: Optional[float] = 1.345,
                 r_span: Optional[int] = None):
        self.pewma = pewma
        self.kalman = kalman
        self.k = k
        self.gate = gate
        self.clip = clip
        self.r_span = r_span
        self.gated = False
        self._sigma = 0.0
        self._z_mean: Optional[float] = None

    def stage_one(self, residual: float, p_t: Optional[float] = None,
                  scale: Optional[float] = None) -> float:
        """Stage one; ``scale`` overrides the spread used by the stage-two gate."""
        self._sigma = self.pewma.sigma if scale is None else scale
        out = self.pewma.substitute(residual, self.k)
        if p_t is None:
            p_t = self.pewma.probability(residual)
        self.pewma.update(residual, p_t)
        return out

    def stage_two(self, z: float) -> float:
        kf = self.kalman
        if not kf.initialized:
            return kf.start(z)
        x_pred, p_pred = kf.predict()
        y = z - x_pred
        self.gated = self.gate is not None and self._sigma > 0.0 and abs(y) > self.gate * self._sigma
        if self.gated:
            kf.p_pred = max(p_pred, y * y - kf.r)
            return kf.correct(z)
        self._track_noise(z)
        if self.clip is not None:
            bound = self.clip * math.sqrt(p_pred + kf.r)
            z = x_pred + min(max(y, -bound), bound)
        return kf.correct(z)

    def _track_noise(self, z: float) -> None:
        if self.r_span is None:
            return
        kf = self.kalman
        if self._z_mean is None:
            self._z_mean = z
            return
        a = 2.0 / (self.r_span + 1.0)
        d = z - self._z_mean
        self._z_mean += a * d
        d2 = d * d
        if self.gate is not None:
            # winsorised so a transient does not loosen the clip for days
            d2 = min(d2, self.gate * self.gate * kf.r)
        r = (1.0 - a) * (kf.r + a * d2)
        if r > 0.0:
            ratio = kf.q / kf.r if kf.r > 0 else 0.0
            kf.r = r
            kf.q = ratio * r

    def step(self, residual: float, p_t: Optional[float] = None,
             scale: Optional[float] = None) -> float:
        return self.stage_two(self.stage_one(residual, p_t, scale))

    def scale_by(self, ratio: float) -> None:
        self.pewma.scale_by(ratio)
        self.kalman.scale_by(ratio)
        self._sigma *= ratio
        if self._z_mean is not None:
            self._z_mean *= ratio


def smooth(pewma: PewmaState, kalman: KalmanState, residual: float,
           p_t: Optional[float] = None, k: float = 3.0, gate: Optional[float] = 5.0,
           clip: Optional[float] = 1.345) -> float:
    """Functional form of :meth:`Smoother.step`; mutates both states."""
    return Smoother(pewma, kalman, k, gate, clip).step(residual, p_t)
