"""Follow the period estimate through a shift from one day to two days.

Square steps with a 288-sample cycle (one day at five-minute sampling)
switch to 576 samples halfway through. The estimate is refreshed once a
day from the last two weeks of data.

    python demos/period_shift.py
"""

from vedar import Detector
from vedar.ingest import synth_period_shift

res = synth_period_shift()
det = Detector()
last = "unset"
for p in res.dataset.points:
    out = det.process(p)
    if det.period != last:
        print(f"#{out.index:<5} {p.timestamp}  period -> {det.period}")
        last = det.period
    if out.alert is not None:
        a = out.alert
        print(f"#{a.index:<5} {a.timestamp}  alert {a.change_type.value}")
print(f"shift injected at #{res.truth_indices[0]}")
