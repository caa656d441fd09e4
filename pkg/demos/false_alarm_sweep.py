"""
Calibrating the Doppler band
============================

A narrow band catches weaker attacks but flags honest receivers that turn.
The test only runs after an outage, so each run here is a 60 s jamming
window with no spoofing afterwards. The sweep counts false alarms for a few
minimum band widths, once for a parked receiver and once for one driving in
circles.
"""
from gnssguard.config import ScenarioConfig, apply_overrides
from gnssguard.scenario import sweep

SEEDS = range(5)
for kind in ("static", "circular"):
    base = apply_overrides(ScenarioConfig(), {"trajectory.kind": kind, "attack.enabled": True,
                                              "attack.spoof": False})
    rows = sweep(base, "detectors.dst_min_band", [10.0, 20.0, 50.0, 200.0], seeds=SEEDS)
    print(kind)
    for band in (10.0, 20.0, 50.0, 200.0):
        fa = sum(r["false_alarms"] > 0 for r in rows if r["value"] == band)
        print(f"  min band {band:5.0f} Hz: runs with a false alarm {fa}/{len(SEEDS)}")
