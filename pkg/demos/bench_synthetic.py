"""Score the detector on a throwaway corpus laid out like NAB.

Writes the five comparison file names filled with synthetic data, label
windows around each injected change, then runs the same scorer the
``vedar bench`` command uses. Point ``vedar bench --data`` at a real NAB
checkout for the genuine numbers.

    python demos/bench_synthetic.py
"""

import tempfile
from pathlib import Path

from vedar.bench import NAB_DATASETS, emit_report, run_benchmark
from vedar.ingest import (
    dump_label_windows, synth_linear_then_periodic, synth_seasonal_with_noise, synth_spike,
    truth_windows, write_csv,
)

makers = [
    lambda: synth_spike(seed=0),
    lambda: synth_spike(seed=2, spike_at=1500),
    lambda: synth_linear_then_periodic(),
    lambda: synth_seasonal_with_noise(seed=1, period=288, missing_peaks=[6], length=2600),
    lambda: synth_spike(seed=3, length=1600, spike_at=900),
]


with tempfile.TemporaryDirectory() as tmp:
    root = Path(tmp)
    windows = {}
    for ds, make in zip(NAB_DATASETS, makers):
        res = make()
        (root / ds).parent.mkdir(parents=True, exist_ok=True)
        write_csv(res.dataset, root / ds)
        windows[ds] = truth_windows(res)
    labels = root / "combined_windows.json"
    labels.write_text(dump_label_windows(windows))
    reports = run_benchmark(root, labels, cooldown_variants=(True, False))
    print(emit_report(reports), end="")
