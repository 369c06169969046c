from pathlib import Path

import numpy as np

from vedar.bench import BASELINES, NAB_DATASETS
from vedar.ingest import (
    dump_label_windows, synth_linear_then_periodic, synth_seasonal_with_noise, synth_spike,
    truth_windows, write_csv,
)


def make_nab_corpus(root, with_baselines=True):
    """Write the five comparison files, their labels and fake baseline
    results under ``root`` in NAB's directory layout. Returns (data, labels, results)."""
    root = Path(root)
    data, results = root / "data", root / "results"
    makers = [
        lambda: synth_spike(seed=0),
        lambda: synth_spike(seed=2, spike_at=1500),
        lambda: synth_linear_then_periodic(seed=0),
        lambda: synth_seasonal_with_noise(seed=1, period=288, missing_peaks=[6], length=2600),
        lambda: synth_spike(seed=3, length=1600, spike_at=900),
    ]
    windows = {}
    for ds, make in zip(NAB_DATASETS, makers):
        res = make()
        path = data / ds
        path.parent.mkdir(parents=True, exist_ok=True)
        write_csv(res.dataset, path)
        windows[ds] = truth_windows(res)
        if not with_baselines:
            continue
        rng = np.random.default_rng(len(windows))
        category, name = ds.split("/")
        for sub in BASELINES.values():
            out = results / sub / category / f"{sub}_{name}"
            out.parent.mkdir(parents=True, exist_ok=True)
            scores = rng.uniform(0, 1, len(res.dataset)) ** 40
            lines = ["timestamp,value,anomaly_score,label"]
            for p, s in zip(res.dataset.points, scores):
                lines.append(f"{p.timestamp:%Y-%m-%d %H:%M:%S},{p.value!r},{float(s)!r},0")
            out.write_text("\n".join(lines) + "\n")
    labels = root / "labels" / "combined_windows.json"
    labels.parent.mkdir(parents=True, exist_ok=True)
    labels.write_text(dump_label_windows(windows))
    return data, labels, results


_criteria = {}


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when not in ("setup", "call"):
        return
    number, title = mark.args
    entry = _criteria.setdefault(number, {"title": title, "ok": True, "why": []})
    if call.excinfo is not None:
        entry["ok"] = False
        entry["why"].append(f"{item.name}: {call.excinfo.value}".splitlines()[0][:160])


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        e = _criteria[number]
        line = f"C{number} {'PASS' if e['ok'] else 'FAIL'}  {e['title']}"
        terminalreporter.write_line(line)
        for why in e["why"]:
            terminalreporter.write_line(f"     {why}")
