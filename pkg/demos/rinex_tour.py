"""
Reading RINEX 2 files
=====================

Observation and navigation files from the test fixtures, parsed and turned
into a plain table.
"""
from pathlib import Path

from gnssguard.constellation import sat_state
from gnssguard.rinex_io import calendar, epochs_to_table, parse_nav, parse_obs, write_series

DATA = Path(__file__).resolve().parents[1] / "tests" / "data"

obs = parse_obs((DATA / "minimal.obs").read_text())
print(f"RINEX {obs.header.version} observation file from {obs.header.marker_name}, "
      f"types {' '.join(obs.header.obs_types)}")
for ep in obs.epochs:
    print("epoch", calendar(ep.week, ep.t))
    for sid, o in ep.sats.items():
        print(f"  {sid}  C1 {o.pseudorange:14.3f} m  D1 {o.doppler} Hz")

print(write_series(epochs_to_table(obs.epochs), "csv", digits=12).decode())

nav = parse_nav((DATA / "sample.nav").read_text())
rec = nav.records[0]
s = sat_state(rec, rec.toe)
print(f"{rec.sat_id} at toe: ECEF {s.pos.round(1)} m, speed {float((s.vel ** 2).sum() ** 0.5):.1f} m/s")
