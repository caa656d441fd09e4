"""
Clock holdover
==============

During an outage the receiver clock free-runs. The clock test only accepts
the first fix after the outage if its time offset stays within what the
oscillator could have drifted. A good oscillator leaves almost no room for
a 20 ms replay; a cheap one leaves plenty.
"""
from gnssguard.config import ScenarioConfig, apply_overrides
from gnssguard.detectors import CLOCK_PROFILES, ClockModel
from gnssguard.scenario import run

for name, profile in CLOCK_PROFILES.items():
    cm = ClockModel(0.0, 0.0, 0.0, profile)
    env = ", ".join(f"{gap:>3d} s: {cm.envelope(gap) * 1e3:8.4f} ms" for gap in (30, 60, 120, 240))
    print(f"{name:>17} envelope  {env}")

print()
for clock in ("quartz_stable", "quartz_commodity"):
    cfg = apply_overrides(ScenarioConfig(), {
        "attack.enabled": True, "attack.jam_start": 60.0, "attack.jam_duration": 120.0,
        "receiver.clock_class": clock, "detectors.location": False, "detectors.doppler": False,
        "seed": 5})
    m = run(cfg)
    s = m.summary
    first = m.series["spoofing"].index(True)
    print(f"{clock:>17}: clock test at t={m.series['t'][first]:.0f} s "
          f"{'fails' if m.series['clock_pass'][first] == 0 else 'passes'} "
          f"(discrepancy {m.series['clock_disc'][first] * 1e3:.3f} ms); "
          f"run detected={s['detected']}, latency={s['detection_latency']}")
