"""Walk one stream through all three change types.

A flat series climbs linearly to a new level, turns periodic, then takes
two spikes. Each alert reports the observed value next to the expected one.

    python demos/taxonomy.py
"""

from vedar import Detector
from vedar.ingest import synth_linear_then_periodic, synth_seasonal_with_noise


def show(title, result):
    print(title)
    det = Detector()
    for alert in det.run(result.dataset.points):
        print(f"  #{alert.index:<5} {alert.change_type.value:<22} "
              f"actual {alert.actual:8.2f}  expected {alert.expected:8.2f}  "
              f"likelihood {alert.likelihood:.3g}")
    print(f"  injected: {result.truth}")
    print(f"  final period estimate: {det.period}\n")


show("ramp, then periodic data with two spikes", synth_linear_then_periodic())
show("daily peaks, one of them missing", synth_seasonal_with_noise(period=288, missing_peaks=[10]))
