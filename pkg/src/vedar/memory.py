"""Memorisation of past behaviour: 1-D DBSCAN over smoothed residuals plus
per-cluster sampling to a fixed budget."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import RingBuffer
from .likelihood import silverman_bandwidth

NOISE = -1
EPS_FLOOR = 1e-9


@dataclass(frozen=True)
class ClusterLabeling:
    labels: np.ndarray
    eps: float
    min_pts: int

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    @property
    def noise(self) -> np.ndarray:
        return self.labels == NOISE


def dbscan_1d(points: Sequence[float], eps: float, min_pts: int) -> ClusterLabeling:
    """DBSCAN on the real line via sorting.

    A point is core when at least ``min_pts`` points (itself included) lie
    within ``eps``. Consecutive core points closer than ``eps`` share a
    cluster. A border point joins the cluster of the nearest core point on
    its left when one is in reach, otherwise the one on its right, which is
    the assignment a classic DBSCAN sweep over sorted input produces.
    Labels are returned in input order; clusters are numbered left to right.
    """
    x = np.asarray(points, dtype=float)
    n = x.size
    labels = np.full(n, NOISE, dtype=int)
    if n == 0:
        return ClusterLabeling(labels, eps, min_pts)
    order = np.argsort(x, kind="stable")
    xs = x[order]
    counts = np.searchsorted(xs, xs + eps, side="right") - np.searchsorted(xs, xs - eps, side="left")
    core = counts >= min_pts
    sorted_labels = np.full(n, NOISE, dtype=int)
    core_idx = np.flatnonzero(core)
    if core_idx.size:
        breaks = np.diff(xs[core_idx]) > eps
        cluster_of_core = np.concatenate(([0], np.cumsum(breaks)))
        sorted_labels[core_idx] = cluster_of_core

        border = np.flatnonzero(~core)
        if border.size:
            pos = np.searchsorted(core_idx, border)
            left = core_idx[np.maximum(pos - 1, 0)]
            right = core_idx[np.minimum(pos, core_idx.size - 1)]
            has_left = (pos > 0) & (xs[border] - xs[left] <= eps)
            has_right = (pos < core_idx.size) & (xs[right] - xs[border] <= eps)
            sorted_labels[border[has_left]] = sorted_labels[left[has_left]]
            take_right = ~has_left & has_right
            sorted_labels[border[take_right]] = sorted_labels[right[take_right]]
    labels[order] = sorted_labels
    return ClusterLabeling(labels, eps, min_pts)


def k_distances(points: Sequence[float], k: int) -> np.ndarray:
    """Distance from each point to its k-th nearest other point."""
    xs = np.sort(np.asarray(points, dtype=float))
    n = xs.size
    k = min(k, n - 1)
    best = np.full(n, np.inf)
    idx = np.arange(n)
    # the k nearest neighbours plus the point itself form a contiguous block
    for j in range(k + 1):
        start = idx - j
        end = start + k
        ok = (start >= 0) & (end < n)
        span = np.maximum(xs[idx[ok]] - xs[start[ok]], xs[end[ok]] - xs[idx[ok]])
        best[ok] = np.minimum(best[ok], span)
    return best


def auto_eps(points: Sequence[float], min_pts: int) -> float:
    """Knee of the sorted k-distance curve: the point farthest from its chord."""
    x = np.asarray(points, dtype=float)
    if x.size < 2 or np.ptp(x) == 0:
        return EPS_FLOOR
    curve = np.sort(k_distances(x, min_pts))
    n = curve.size
    if n < 3 or curve[-1] == curve[0]:
        return max(float(curve[-1]), EPS_FLOOR)
    u = np.linspace(0.0, 1.0, n)
    v = (curve - curve[0]) / (curve[-1] - curve[0])
    # distance to the chord from (0, 0) to (1, 1), up to a constant
    knee = int(np.argmax(u - v))
    return max(float(curve[knee]), EPS_FLOOR)


def proportional_quotas(sizes: Sequence[int], budget: int) -> np.ndarray:
    """Split ``budget`` proportionally to ``sizes`` by largest remainder, capped at each size."""
    sizes = np.asarray(sizes, dtype=int)
    total = int(sizes.sum())
    if total <= budget:
        return sizes.copy()
    exact = sizes * (budget / total)
    quotas = np.floor(exact).astype(int)
    short = budget - int(quotas.sum())
    if short > 0:
        order = np.argsort(-(exact - quotas), kind="stable")
        quotas[order[:short]] += 1
    return np.minimum(quotas, sizes)


@dataclass
class MemoryState:
    """Reservoir of recent smoothed residuals and its representative sample."""

    reservoir: RingBuffer
    sample_budget: int = 500
    min_pts: int = 4
    eps: Optional[float] = None
    rebuild_interval: int = 288
    resample_via_kde: bool = False
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))
    samples: np.ndarray = field(default_factory=lambda: np.empty(0))
    last_rebuild_count: int = 0
    labeling: Optional[ClusterLabeling] = None

    def push(self, x: float) -> None:
        self.reservoir.push(x)

    def rebuild_samples(self) -> np.ndarray:
        points = self.reservoir.values()
        if points.size == 0:
            return self.samples
        eps = self.eps if self.eps is not None else auto_eps(points, self.min_pts)
        self.labeling = dbscan_1d(points, eps, self.min_pts)
        labels = self.labeling.labels
        n_clusters = self.labeling.n_clusters
        if n_clusters == 0:
            take = min(self.sample_budget, points.size)
            self.samples = self.rng.choice(points, size=take, replace=False)
            return self.samples
        members = [points[labels == c] for c in range(n_clusters)]
        quotas = proportional_quotas([m.size for m in members], self.sample_budget)
        parts = []
        for m, quota in zip(members, quotas):
            if quota == 0:
                continue
            if self.resample_via_kde:
                # draw from the cluster's own Gaussian KDE
                h = silverman_bandwidth(m) if m.size > 1 else EPS_FLOOR
                centres = self.rng.choice(m, size=quota, replace=True)
                parts.append(centres + h * self.rng.standard_normal(quota))
            else:
                parts.append(self.rng.choice(m, size=quota, replace=False))
        self.samples = np.concatenate(parts)
        return self.samples

    def maybe_rebuild(self, points_seen: int) -> bool:
        if points_seen - self.last_rebuild_count < self.rebuild_interval:
            return False
        self.last_rebuild_count = points_seen
        self.rebuild_samples()
        return True

    def scale_by(self, ratio: float) -> None:
        self.reservoir.scale_by(ratio)
        self.samples = self.samples * ratio
