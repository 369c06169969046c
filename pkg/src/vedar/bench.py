"""Window-hit scoring against NAB labels and the detector-versus-baselines report.

A label window with at least one alert inside it (ends inclusive) is one
true positive; an empty window is a false negative. Alerts outside all
windows count as false positives.
"""

from __future__ import annotations

import bisect
import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from .core import ChangeAlert, DetectorConfig, VedarError
from .detector import Detector
from .ingest import Window, load_label_windows, load_nab_csv, parse_timestamp

TEXT = "text"
JSONL = "jsonl"
VEDAR = "VEDAR"

# the five NAB files of the published comparison, one per data domain
NAB_DATASETS = (
    "realKnownCause/ec2_request_latency_system_failure.csv",
    "realAWSCloudwatch/rds_cpu_utilization_e47b3b.csv",
    "realTraffic/occupancy_6005.csv",
    "realTweets/Twitter_volume_FB.csv",
    "realAdExchange/exchange-4_cpm_results.csv",
)

# published (tp, fp, fn) with the printed (precision, recall, f1), 2-decimal rounding
PUBLISHED: Dict[Tuple[str, str], Tuple[Tuple[int, int, int], Tuple[float, float, float]]] = {
    (NAB_DATASETS[0], "HTM"): ((3, 9, 0), (0.25, 1, 0.4)),
    (NAB_DATASETS[0], "TwitterAdVec"): ((3, 5, 0), (0.38, 1, 0.55)),
    (NAB_DATASETS[0], VEDAR): ((3, 1, 0), (0.75, 1, 0.86)),
    (NAB_DATASETS[1], "HTM"): ((2, 2, 0), (0.5, 1, 0.67)),
    (NAB_DATASETS[1], "TwitterAdVec"): ((1, 7, 1), (0.13, 0.5, 0.2)),
    (NAB_DATASETS[1], VEDAR): ((2, 0, 0), (1, 1, 1)),
    (NAB_DATASETS[2], "HTM"): ((1, 1, 0), (0.5, 1, 0.67)),
    (NAB_DATASETS[2], "TwitterAdVec"): ((1, 3, 0), (0.25, 1, 0.4)),
    (NAB_DATASETS[2], VEDAR): ((1, 0, 0), (1, 1, 1)),
    (NAB_DATASETS[3], "HTM"): ((2, 4, 0), (0.33, 1, 0.5)),
    (NAB_DATASETS[3], "TwitterAdVec"): ((2, 26, 0), (0.07, 1, 0.13)),
    (NAB_DATASETS[3], VEDAR): ((2, 1, 0), (0.67, 1, 0.8)),
    (NAB_DATASETS[4], "HTM"): ((3, 4, 0), (0.43, 1, 0.6)),
    (NAB_DATASETS[4], "TwitterAdVec"): ((2, 1, 1), (0.67, 0.67, 0.67)),
    (NAB_DATASETS[4], VEDAR): ((3, 1, 0), (0.75, 1, 0.86)),
}

# NAB results sub-directory and file prefix of each baseline
BASELINES = {"HTM": "numenta", "TwitterAdVec": "twitterADVec"}


class MissingInput(VedarError):
    pass


@dataclass(frozen=True)
class Confusion:
    tp: int = 0
    fp: int = 0
    fn: int = 0


@dataclass(frozen=True)
class BenchReport:
    dataset: str
    algorithm: str
    confusion: Confusion
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_confusion(cls, dataset: str, algorithm: str, c: Confusion) -> "BenchReport":
        return cls(dataset, algorithm, c, *metrics(c))

    def to_record(self) -> dict:
        return {
            "dataset": self.dataset, "algorithm": self.algorithm,
            "tp": self.confusion.tp, "fp": self.confusion.fp, "fn": self.confusion.fn,
            "precision": self.precision, "recall": self.recall, "f1": self.f1,
        }


Stamp = Union[ChangeAlert, datetime]


def _stamp(a: Stamp) -> datetime:
    return a.timestamp if isinstance(a, ChangeAlert) else a


def score_against_windows(alerts: Iterable[Stamp], windows: Sequence[Window]) -> Confusion:
    """Window-hit confusion counts for one dataset.

    ``windows`` must be sorted and disjoint, as :func:`load_label_windows`
    returns them. Alerts may be :class:`ChangeAlert` objects or timestamps.
    """
    starts = [s for s, _ in windows]
    hit = [False] * len(windows)
    fp = 0
    for a in alerts:
        t = _stamp(a)
        k = bisect.bisect_right(starts, t) - 1
        if k >= 0 and t <= windows[k][1]:
            hit[k] = True
        else:
            fp += 1
    tp = sum(hit)
    return Confusion(tp, fp, len(windows) - tp)


def metrics(c: Confusion) -> Tuple[float, float, float]:
    """``(precision, recall, f1)``; empty denominators give 1, 1 and 0 respectively."""
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp else 1.0
    recall = c.tp / (c.tp + c.fn) if c.tp + c.fn else 1.0
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def threshold_baseline_scores(rows: Iterable[Tuple[datetime, float]], epsilon: float = 0.01) -> List[datetime]:
    """Timestamps whose anomaly score is at least ``1 - epsilon``."""
    cut = 1.0 - epsilon
    return [t for t, score in rows if score >= cut]


def load_baseline_results(path: Union[str, Path]) -> List[Tuple[datetime, float]]:
    """``(timestamp, anomaly_score)`` rows of a NAB results CSV."""
    path = Path(path)
    rows = []
    with path.open(newline="") as fh:
        for rec in csv.DictReader(fh):
            try:
                rows.append((parse_timestamp(rec["timestamp"]), float(rec["anomaly_score"])))
            except (KeyError, TypeError, ValueError):
                raise MissingInput(f"{path}: not a NAB results file") from None
    return rows


def baseline_file(results_dir: Union[str, Path], algorithm: str, dataset: str) -> Path:
    """Locate a baseline's results file for ``dataset`` (``category/name.csv``).

    ``results_dir`` is either NAB's ``results`` directory or the
    algorithm's own sub-directory of it.
    """
    root = Path(results_dir)
    sub = BASELINES.get(algorithm, algorithm)
    category, name = dataset.split("/", 1)
    for base in (root / sub, root):
        candidate = base / category / f"{sub}_{name}"
        if candidate.exists():
            return candidate
    raise MissingInput(f"no {algorithm} results for {dataset} under {root}")


def detect_dataset(path: Union[str, Path], config: DetectorConfig) -> List[ChangeAlert]:
    data = load_nab_csv(path)
    return list(Detector(config).run(data.points))


def run_benchmark(
    data_dir: Union[str, Path],
    labels_path: Union[str, Path],
    datasets: Sequence[str] = NAB_DATASETS,
    config: Optional[DetectorConfig] = None,
    cooldown_variants: Sequence[bool] = (True,),
    baselines: Optional[Mapping[str, Union[str, Path]]] = None,
    epsilon: float = 0.01,
    workers: int = 1,
) -> List[BenchReport]:
    """Score the detector (and optional baselines) on each dataset.

    One report per dataset and algorithm, in dataset order. The detector
    runs once per entry of ``cooldown_variants``; the variant without
    cooldown is reported as ``"VEDAR (no cooldown)"``. ``baselines`` maps
    an algorithm name to its results directory.
    """
    config = config or DetectorConfig()
    data_dir = Path(data_dir)
    if not Path(labels_path).exists():
        raise MissingInput(f"labels file not found: {labels_path}")
    labels = load_label_windows(labels_path)
    for ds in datasets:
        if not (data_dir / ds).exists():
            raise MissingInput(f"dataset not found: {data_dir / ds}")
        if ds not in labels:
            raise MissingInput(f"no label windows for {ds}")

    jobs = []
    for ds in datasets:
        for cool in cooldown_variants:
            name = VEDAR if cool else f"{VEDAR} (no cooldown)"
            jobs.append((ds, name, config.override(cooldown=cool)))

    def run(job):
        ds, name, cfg = job
        alerts = detect_dataset(data_dir / ds, cfg)
        return BenchReport.from_confusion(ds, name, score_against_windows(alerts, labels[ds]))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            ours = list(pool.map(run, jobs))
    else:
        ours = [run(j) for j in jobs]

    reports = []
    for ds in datasets:
        for algorithm, root in (baselines or {}).items():
            rows = load_baseline_results(baseline_file(root, algorithm, ds))
            hits = threshold_baseline_scores(rows, epsilon)
            reports.append(BenchReport.from_confusion(ds, algorithm, score_against_windows(hits, labels[ds])))
        reports.extend(r for r in ours if r.dataset == ds)
    return reports


HEADER = ("Dataset", "Algorithm", "TP", "FP", "FN", "Precision", "Recall", "F1")


def _cells(r: BenchReport) -> Tuple[str, ...]:
    c = r.confusion
    return (r.dataset, r.algorithm, str(c.tp), str(c.fp), str(c.fn),
            f"{r.precision:.2f}", f"{r.recall:.2f}", f"{r.f1:.2f}")


def emit_report(reports: Sequence[BenchReport], fmt: str = TEXT) -> str:
    """Render reports as an aligned text table or as JSON lines with unrounded metrics."""
    if fmt == JSONL:
        return "".join(json.dumps(r.to_record(), sort_keys=True) + "\n" for r in reports)
    if fmt != TEXT:
        raise VedarError(f"unknown report format {fmt!r}")
    rows = [HEADER] + [_cells(r) for r in reports]
    widths = [max(len(row[i]) for row in rows) for i in range(len(HEADER))]
    lines = []
    for k, row in enumerate(rows):
        left = [row[i].ljust(widths[i]) for i in range(2)]
        right = [row[i].rjust(widths[i]) for i in range(2, len(HEADER))]
        lines.append("  ".join(left + right).rstrip())
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
