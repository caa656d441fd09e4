import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gnssguard.constants import C, F_L1
from gnssguard.constellation import DEFAULT_SITE, DEFAULT_T0, lla_to_ecef, propagate, synth_constellation
from gnssguard.errors import GeometryError, UnderdeterminedError
from gnssguard.pvt import PseudorangeSet, dop, predict_pseudorange, solve_pvt


@pytest.fixture(scope="module")
def geometry():
    ephs = synth_constellation(8, seed=2)
    t = DEFAULT_T0 + 900
    pos, vel = propagate(ephs, t)
    rx = lla_to_ecef(*DEFAULT_SITE)
    return t, tuple(e.sat_id for e in ephs), pos, vel, rx


def make_obs(geometry, t_v=0.0, rx_vel=np.zeros(3), drift=0.0, delays=None):
    t, ids, pos, vel, rx = geometry
    rho = np.linalg.norm(pos - rx, axis=1) + C * t_v
    if delays is not None:
        rho = rho + C * np.asarray(delays)
    unit = (pos - rx) / np.linalg.norm(pos - rx, axis=1)[:, None]
    range_rate = np.einsum("ij,ij->i", vel - rx_vel, unit) + C * drift
    doppler = -F_L1 * range_rate / C
    return PseudorangeSet(t, ids, pos, vel, rho, doppler)


def test_predict_pseudorange():
    assert predict_pseudorange([3.0, 4.0, 0.0], [0.0, 0.0, 0.0], 1e-9) == pytest.approx(5.0 + C * 1e-9)


def test_noiseless_solution(geometry):
    sol = solve_pvt(make_obs(geometry, t_v=3e-4, rx_vel=np.array([10.0, -5.0, 1.0]), drift=2e-7))
    assert sol.converged
    assert np.linalg.norm(sol.pos - geometry[4]) < 1e-6
    assert sol.clock_offset == pytest.approx(3e-4, abs=1e-15)
    assert np.allclose(sol.vel, [10.0, -5.0, 1.0], atol=1e-6)
    assert sol.clock_drift == pytest.approx(2e-7, abs=1e-12)
    assert sol.velocity_valid
    assert np.max(np.abs(sol.residuals)) < 1e-6


def test_warm_start_converges_faster(geometry):
    obs = make_obs(geometry)
    cold = solve_pvt(obs)
    warm = solve_pvt(obs, guess=(*geometry[4] + 10.0, 0.0))
    assert warm.iterations < cold.iterations


def test_missing_doppler_disables_velocity(geometry):
    obs = make_obs(geometry)
    d = obs.doppler.copy()
    d[0] = np.nan
    sol = solve_pvt(PseudorangeSet(obs.t, obs.sat_ids, obs.sat_pos, obs.sat_vel, obs.pseudorange, d))
    assert not sol.velocity_valid
    assert np.all(sol.vel == 0)


def test_underdetermined(geometry):
    obs = make_obs(geometry).subset([0, 1, 2])
    with pytest.raises(UnderdeterminedError):
        solve_pvt(obs)


def test_degenerate_geometry():
    rx = np.zeros(3)
    sat = np.array([[2e7, 0, 0]] * 5, dtype=float)
    obs = PseudorangeSet(0.0, tuple("G0%d" % i for i in range(5)), sat, np.zeros_like(sat),
                         np.full(5, 2e7))
    with pytest.raises(GeometryError):
        solve_pvt(obs)


def test_residual_threshold_marks_inconsistent_fix(geometry):
    delays = np.zeros(len(geometry[1]))
    delays[0] = 1e-6
    sol = solve_pvt(make_obs(geometry, delays=delays), residual_threshold=1.0)
    assert not sol.converged


@settings(max_examples=40, deadline=None)
@given(st.floats(-0.05, 0.05))
def test_common_delay_goes_to_clock(delta):
    geometry = _GEOM
    base = solve_pvt(make_obs(geometry))
    shifted = solve_pvt(make_obs(geometry, delays=np.full(len(geometry[1]), delta)))
    assert shifted.clock_offset - base.clock_offset == pytest.approx(delta, abs=1e-12)
    assert np.linalg.norm(shifted.pos - base.pos) < 1e-3


def test_dop_factors(geometry):
    d = dop(make_obs(geometry), geometry[4])
    assert d.gdop >= d.pdop >= d.hdop > 0
    assert d.pdop ** 2 == pytest.approx(d.hdop ** 2 + d.vdop ** 2)
    assert d.gdop ** 2 == pytest.approx(d.pdop ** 2 + d.tdop ** 2)
    assert d.pdop < 6


_eph = synth_constellation(8, seed=2)
_t = DEFAULT_T0 + 900
_p, _v = propagate(_eph, _t)
_GEOM = (_t, tuple(e.sat_id for e in _eph), _p, _v, lla_to_ecef(*DEFAULT_SITE))


def test_predict_pseudorange_clock_sign():
    rx, sat = np.zeros(3), np.array([2.0e7, 0.0, 0.0])
    assert predict_pseudorange(sat, rx, 0.0) == 2.0e7
    assert predict_pseudorange(sat, rx, 1e-3) == pytest.approx(2.0e7 + 299792.458)
    assert predict_pseudorange(sat, rx, -1e-3) == pytest.approx(2.0e7 - 299792.458)


def _sky(directions):
    rx = lla_to_ecef(0.0, 0.0, 0.0)
    up = rx / np.linalg.norm(rx)
    east, north = np.array([0.0, 1.0, 0.0]), np.array([0.0, 0.0, 1.0])
    u = np.array([d[0] * east + d[1] * north + d[2] * up for d in directions], float)
    u /= np.linalg.norm(u, axis=1)[:, None]
    sats = rx + 2.2e7 * u
    ids = tuple(f"G{k + 1:02d}" for k in range(len(sats)))
    return PseudorangeSet(0.0, ids, sats, np.zeros_like(sats), np.full(len(sats), 2.2e7)), rx


def test_tetrahedral_geometry_pdop():
    s = np.sqrt(8.0) / 3.0
    obs, rx = _sky([(0, 0, 1), (s, 0, -1 / 3), (-s / 2, s * np.sqrt(3) / 2, -1 / 3),
                    (-s / 2, -s * np.sqrt(3) / 2, -1 / 3)])
    assert dop(obs, rx).pdop <= 2.0


def test_coplanar_and_duplicate_geometries_rejected():
    obs, rx = _sky([(1, 0, 1), (-1, 0, 1), (0.3, 0, 1), (-0.5, 0, 1), (0, 0, 1)])
    with pytest.raises(GeometryError):
        dop(obs, rx)
    obs, rx = _sky([(1, 0, 1)] * 2 + [(0, 1, 1)] * 2 + [(0, 0, 1)])
    with pytest.raises(GeometryError):
        dop(obs, rx)
