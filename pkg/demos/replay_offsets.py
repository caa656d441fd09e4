"""
What a replayed signal does to a position fix
=============================================

A replayed satellite signal arrives late, so its pseudorange is too long.
Delay every satellite by the same amount and the solver blames its own
clock. Delay only one and the error lands in the position instead.
"""
import numpy as np

from gnssguard.constants import C
from gnssguard.constellation import DEFAULT_SITE, DEFAULT_T0, lla_to_ecef, propagate, synth_constellation
from gnssguard.pvt import PseudorangeSet, dop, solve_pvt
from gnssguard.scenario import replicate_figure

ephs = synth_constellation(8, seed=1)
t = DEFAULT_T0 + 60
sat_pos, sat_vel = propagate(ephs, t)
rx = lla_to_ecef(*DEFAULT_SITE)
ids = tuple(e.sat_id for e in ephs)
ranges = np.linalg.norm(sat_pos - rx, axis=1)


def fix(delays):
    obs = PseudorangeSet(t, ids, sat_pos, sat_vel, ranges + C * np.asarray(delays))
    return solve_pvt(obs)


print(f"PDOP of this sky: {dop(PseudorangeSet(t, ids, sat_pos, sat_vel, ranges), rx).pdop:.2f}")

# %% every satellite 20 ms late
sol = fix(np.full(len(ids), 0.020))
print(f"all satellites +20 ms -> clock {sol.clock_offset * 1e3:.6f} ms, "
      f"position moved {np.linalg.norm(sol.pos - rx):.2e} m")

# %% one satellite late, growing delay
for delay in (1e-7, 1e-6, 5e-6, 1e-3):
    d = np.zeros(len(ids))
    d[0] = delay
    sol = fix(d)
    print(f"{ids[0]} +{delay * 1e6:8.1f} us -> position moved {np.linalg.norm(sol.pos - rx):12.1f} m")

# %% the staircase: each 30 s resync folds another replay delay into the receiver clock
m = replicate_figure("fig2b")
tt = np.array(m.series["t"])
off = np.array(m.series["time_offset"])
print("\nreceiver time offset under a 20 ms replay starting at t = 31 s")
for ts in range(0, 301, 30):
    print(f"  t = {ts:3d} s   offset {off[tt == ts][0] * 1e3:7.3f} ms")
