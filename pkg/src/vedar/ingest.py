"""NAB-format loading and synthetic benchmark signals.

NAB data files are ``timestamp,value`` CSVs with ``YYYY-MM-DD HH:MM:SS``
stamps; label windows come from ``combined_windows.json``, a map from
dataset path (``category/name.csv``) to ``[start, end]`` string pairs.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .core import NonMonotonicTimestamp, TimedValue, VedarError

TIMESTAMP_FORMAT = "%Y-%m-%d %H:%M:%S"
DEFAULT_START = datetime(2014, 1, 1)
FIVE_MINUTES = timedelta(minutes=5)

PathLike = Union[str, Path]
Window = Tuple[datetime, datetime]


class MalformedRow(VedarError):
    def __init__(self, line: int, text: str = ""):
        super().__init__(f"malformed row at line {line}: {text!r}")
        self.line = line


class MalformedWindows(VedarError):
    pass


@dataclass
class Dataset:
    name: str
    points: List[TimedValue] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def values(self) -> np.ndarray:
        return np.array([p.value for p in self.points])

    @property
    def timestamps(self) -> List[datetime]:
        return [p.timestamp for p in self.points]


@dataclass
class SynthResult:
    """A generated dataset with the indices of its injected changes."""

    dataset: Dataset
    truth: List[Tuple[int, str]] = field(default_factory=list)

    @property
    def truth_indices(self) -> List[int]:
        return [i for i, _ in self.truth]


def parse_timestamp(text: str) -> datetime:
    return datetime.strptime(text.strip(), TIMESTAMP_FORMAT)


def iter_nab_rows(lines) -> Iterator[TimedValue]:
    """Parse ``timestamp,value`` rows lazily; an empty input yields nothing."""
    reader = csv.reader(lines)
    prev: Optional[datetime] = None
    for lineno, row in enumerate(reader, start=1):
        if lineno == 1:
            if [c.strip() for c in row[:2]] != ["timestamp", "value"]:
                raise MalformedRow(1, ",".join(row))
            continue
        if not row or all(not c.strip() for c in row):
            continue
        try:
            ts = parse_timestamp(row[0])
            value = float(row[1])
        except (ValueError, IndexError):
            raise MalformedRow(lineno, ",".join(row)) from None
        if not math.isfinite(value):
            raise MalformedRow(lineno, ",".join(row))
        if prev is not None and ts <= prev:
            raise NonMonotonicTimestamp(f"line {lineno}: {ts} does not follow {prev}")
        prev = ts
        yield TimedValue(ts, value)


def read_nab_rows(lines, name: str = "") -> Dataset:
    return Dataset(name, list(iter_nab_rows(lines)))


def load_nab_csv(path: PathLike, name: Optional[str] = None) -> Dataset:
    path = Path(path)
    with path.open(newline="") as fh:
        return read_nab_rows(fh, name or path.stem)


def write_csv(dataset: Dataset, path: Optional[PathLike] = None) -> str:
    buf = io.StringIO()
    buf.write("timestamp,value\n")
    for p in dataset.points:
        buf.write(f"{p.timestamp.strftime(TIMESTAMP_FORMAT)},{p.value!r}\n")
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def parse_label_windows(data) -> Dict[str, List[Window]]:
    if not isinstance(data, dict):
        raise MalformedWindows("label file must map dataset names to window lists")
    out: Dict[str, List[Window]] = {}
    for name, windows in data.items():
        if not isinstance(windows, list):
            raise MalformedWindows(f"{name}: windows must be a list")
        parsed = []
        for w in windows:
            if not (isinstance(w, (list, tuple)) and len(w) == 2):
                raise MalformedWindows(f"{name}: window {w!r} is not a [start, end] pair")
            try:
                # NAB stamps sometimes carry fractional seconds
                start, end = (datetime.fromisoformat(str(s).strip()) for s in w)
            except ValueError:
                raise MalformedWindows(f"{name}: unparseable window {w!r}") from None
            if end < start:
                raise MalformedWindows(f"{name}: window ends before it starts: {w!r}")
            parsed.append((start, end))
        parsed.sort()
        for (_, e1), (s2, _) in zip(parsed, parsed[1:]):
            if s2 <= e1:
                raise MalformedWindows(f"{name}: overlapping windows")
        out[name] = parsed
    return out


def load_label_windows(path: PathLike) -> Dict[str, List[Window]]:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MalformedWindows(f"{path}: {exc}") from None
    return parse_label_windows(data)


def dump_label_windows(windows: Dict[str, Sequence[Window]]) -> str:
    data = {name: [[s.strftime(TIMESTAMP_FORMAT), e.strftime(TIMESTAMP_FORMAT)] for s, e in ws]
            for name, ws in windows.items()}
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def truth_windows(result: "SynthResult", fraction: float = 0.1) -> List[Window]:
    """Label windows around the injected changes, sized the way NAB sizes them.

    Each window spans ``fraction`` of the series divided by the number of
    changes, centred on the change and clipped to the series. Windows that
    would overlap are cut at the midpoint between their changes.
    """
    points = result.dataset.points
    idx = sorted(i for i in result.truth_indices if 0 <= i < len(points))
    if not idx:
        return []
    half = max(int(fraction * len(points) / len(idx)) // 2, 1)
    bounds = []
    for k, i in enumerate(idx):
        lo, hi = max(i - half, 0), min(i + half, len(points) - 1)
        if k > 0:
            lo = max(lo, (idx[k - 1] + i) // 2 + 1)
        if k + 1 < len(idx):
            hi = min(hi, (i + idx[k + 1]) // 2)
        bounds.append((points[lo].timestamp, points[hi].timestamp))
    return bounds


def _dataset(name: str, values: Sequence[float], start: datetime = DEFAULT_START,
             interval: timedelta = FIVE_MINUTES) -> Dataset:
    return Dataset(name, [TimedValue(start + i * interval, float(v)) for i, v in enumerate(values)])


def synth_linear_then_periodic(
    seed: int = 0,
    length: int = 2600,
    ramp_start: int = 700,
    ramp_length: int = 250,
    ramp_slope: float = 0.08,
    period: int = 48,
    amplitude: float = 1.5,
    noise_sigma: float = 0.5,
    base: float = 20.0,
    spike_at: Sequence[int] = (1700, 2150),
    spike_magnitudes: Sequence[float] = (12.0, 10.0),
) -> SynthResult:
    """Flat lead-in, a linear climb to an upper level, then periodic data with spikes.

    Ground truth: one ``linear`` change at the start of the climb and one
    ``erratic`` change per spike. With ``ramp_slope=0`` the climb is flat
    and only the segment boundary is recorded.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(length)
    level = np.full(length, base, dtype=float)
    ramp = (t >= ramp_start) & (t < ramp_start + ramp_length)
    level[ramp] += ramp_slope * (t[ramp] - ramp_start)
    top = ramp_start + ramp_length
    level[t >= top] += ramp_slope * ramp_length
    wave = np.where(t >= top, amplitude * np.sin(2 * np.pi * (t - top) / period), 0.0)
    values = level + wave + noise_sigma * rng.standard_normal(length)
    truth: List[Tuple[int, str]] = []
    if ramp_slope != 0:
        truth.append((ramp_start, "linear"))
    else:
        truth.append((top, "boundary"))
    for idx, mag in zip(spike_at, spike_magnitudes):
        if 0 <= idx < length:
            values[idx] += mag
            truth.append((int(idx), "erratic"))
    return SynthResult(_dataset("synthetic/linear_then_periodic", values), truth)


def synth_period_shift(
    seed: int = 0,
    period_a: int = 288,
    period_b: int = 576,
    shift_at: Optional[int] = None,
    length: int = 8064,
    low: float = 10.0,
    high: float = 20.0,
    noise_sigma: float = 0.5,
) -> SynthResult:
    """Square steps with period ``period_a`` that switch to ``period_b`` at ``shift_at``.

    Each cycle spends its first half at ``high`` and its second half at
    ``low``. ``shift_at`` defaults to the midpoint.
    """
    if period_a < 2 or period_b < 2:
        raise VedarError("periods must be at least 2")
    if shift_at is None:
        shift_at = length // 2
    if not 0 <= shift_at <= length:
        raise VedarError("shift_at outside the series")
    rng = np.random.default_rng(seed)
    t = np.arange(length)
    phase_a = (t % period_a) < period_a // 2
    phase_b = ((t - shift_at) % period_b) < period_b // 2
    step = np.where(t < shift_at, phase_a, phase_b)
    values = np.where(step, high, low) + noise_sigma * rng.standard_normal(length)
    truth = [] if period_a == period_b or shift_at in (0, length) else [(shift_at, "period_shift")]
    return SynthResult(_dataset("synthetic/period_shift", values), truth)


def synth_seasonal_with_noise(
    seed: int = 0,
    period: Optional[int] = 224,
    peak_shape: str = "gaussian",
    noise_sigma: float = 0.3,
    length: Optional[int] = None,
    base: float = 10.0,
    amplitude: float = 5.0,
    missing_peaks: Sequence[int] = (),
) -> SynthResult:
    """One peak and one trough per period on a flat base, plus white noise.

    ``peak_shape`` is ``"gaussian"`` (smooth bumps) or ``"spike"``
    (single-sample peaks). ``period=None`` or ``0`` gives noise only.
    ``missing_peaks`` lists cycle numbers whose peak is dropped; the
    index of each gap is recorded as a ``seasonal`` change.
    """
    rng = np.random.default_rng(seed)
    if length is None:
        length = 14 * (period or 288)
    values = base + noise_sigma * rng.standard_normal(length)
    truth: List[Tuple[int, str]] = []
    if period:
        if period < 2:
            raise VedarError("period must be at least 2")
        t = np.arange(length)
        phase = t % period
        cycle = t // period
        if peak_shape == "gaussian":
            width = max(period / 40.0, 1.0)
            peak = amplitude * np.exp(-0.5 * ((phase - period / 4) / width) ** 2)
            trough = 0.5 * amplitude * np.exp(-0.5 * ((phase - 3 * period / 4) / width) ** 2)
        elif peak_shape == "spike":
            peak = np.where(phase == period // 4, amplitude, 0.0)
            trough = np.where(phase == (3 * period) // 4, 0.5 * amplitude, 0.0)
        else:
            raise VedarError(f"unknown peak shape {peak_shape!r}")
        drop = np.isin(cycle, list(missing_peaks))
        values = values + np.where(drop, 0.0, peak) - trough
        for c in missing_peaks:
            idx = int(c * period + period // 4)
            if idx < length:
                truth.append((idx, "seasonal"))
    return SynthResult(_dataset("synthetic/seasonal_with_noise", values), truth)


def synth_spike(
    seed: int = 0,
    length: int = 2000,
    spike_at: int = 1200,
    magnitude: float = 10.0,
    base: float = 10.0,
    noise_sigma: float = 0.5,
) -> SynthResult:
    """Flat noisy series with one multiplicative spike of ``magnitude`` times the base."""
    rng = np.random.default_rng(seed)
    values = base + noise_sigma * rng.standard_normal(length)
    values[spike_at] = magnitude * base
    return SynthResult(_dataset("synthetic/spike", values), [(spike_at, "erratic")])


GENERATORS = {
    "linear_then_periodic": synth_linear_then_periodic,
    "period_shift": synth_period_shift,
    "seasonal_with_noise": synth_seasonal_with_noise,
    "spike": synth_spike,
}
