"""Satellite orbits, visibility and the Doppler model.

Orbits follow the broadcast-ephemeris Keplerian model (Δn and Ω̇
corrections, second-harmonic terms honoured when present). Earth rotation
during signal transit is ignored, which biases satellite positions by a
few tens of metres; the simulation never needs better than that.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .constants import (
    C, DEFAULT_MASK_DEG, EPHEMERIS_VALIDITY, F_L1, HALF_WEEK, MIN_SATS, MU,
    OMEGA_E, SECONDS_PER_WEEK, WGS84_A, WGS84_E2,
)
from .errors import (
    ConstellationError, GeometryError, KeplerConvergenceError, StaleEphemerisError,
)

DEFAULT_T0 = 345600.0     # Thursday 00:00 GPS time, seconds of week
DEFAULT_SITE = (45.0, 7.0, 400.0)


@dataclass(frozen=True)
class SatelliteEphemeris:
    sat_id: str
    sqrt_a: float
    e: float
    i0: float
    omega0: float          # longitude of ascending node at weekly epoch
    omega: float           # argument of perigee
    m0: float
    delta_n: float
    omega_dot: float
    toe: float
    af0: float = 0.0
    af1: float = 0.0
    af2: float = 0.0
    toc: float | None = None
    idot: float = 0.0
    cuc: float = 0.0
    cus: float = 0.0
    crc: float = 0.0
    crs: float = 0.0
    cic: float = 0.0
    cis: float = 0.0
    week: int = 0
    iode: float = 0.0
    health: float = 0.0

    @property
    def a(self) -> float:
        return self.sqrt_a ** 2

    def sat_clock_bias(self, t: float) -> float:
        dt = _wrap_week(t - (self.toe if self.toc is None else self.toc))
        return self.af0 + self.af1 * dt + self.af2 * dt * dt


@dataclass(frozen=True)
class SatState:
    sat_id: str
    t: float
    pos: np.ndarray
    vel: np.ndarray


@dataclass(frozen=True)
class ReceiverState:
    t: float
    pos: np.ndarray
    vel: np.ndarray = field(default_factory=lambda: np.zeros(3))


def _wrap_week(dt):
    return np.where(dt > HALF_WEEK, dt - SECONDS_PER_WEEK,
                    np.where(dt < -HALF_WEEK, dt + SECONDS_PER_WEEK, dt))


# ---------------------------------------------------------------------------
# geodesy

def lla_to_ecef(lat_deg: float, lon_deg: float, h: float = 0.0) -> np.ndarray:
    lat, lon = np.radians(lat_deg), np.radians(lon_deg)
    n = WGS84_A / np.sqrt(1.0 - WGS84_E2 * np.sin(lat) ** 2)
    return np.array([
        (n + h) * np.cos(lat) * np.cos(lon),
        (n + h) * np.cos(lat) * np.sin(lon),
        (n * (1.0 - WGS84_E2) + h) * np.sin(lat),
    ])


def ecef_to_lla(pos) -> tuple[float, float, float]:
    x, y, z = pos
    lon = np.arctan2(y, x)
    p = np.hypot(x, y)
    lat = np.arctan2(z, p * (1.0 - WGS84_E2))
    for _ in range(8):
        n = WGS84_A / np.sqrt(1.0 - WGS84_E2 * np.sin(lat) ** 2)
        h = p / np.cos(lat) - n
        lat = np.arctan2(z, p * (1.0 - WGS84_E2 * n / (n + h)))
    n = WGS84_A / np.sqrt(1.0 - WGS84_E2 * np.sin(lat) ** 2)
    h = p / np.cos(lat) - n
    return float(np.degrees(lat)), float(np.degrees(lon)), float(h)


def enu_rotation(lat_deg: float, lon_deg: float) -> np.ndarray:
    """Rows are the local east, north and up unit vectors in ECEF."""
    lat, lon = np.radians(lat_deg), np.radians(lon_deg)
    sl, cl = np.sin(lat), np.cos(lat)
    so, co = np.sin(lon), np.cos(lon)
    return np.array([
        [-so, co, 0.0],
        [-sl * co, -sl * so, cl],
        [cl * co, cl * so, sl],
    ])


def elevation(sat_pos, rx_pos) -> np.ndarray:
    """Elevation angle(s) in degrees of satellite position(s) seen from rx_pos.

    The local vertical is the ellipsoid normal.
    """
    rx_pos = np.asarray(rx_pos, dtype=float)
    lat, lon, _ = ecef_to_lla(rx_pos)
    up = enu_rotation(lat, lon)[2]
    los = np.asarray(sat_pos, dtype=float) - rx_pos
    rng = np.linalg.norm(los, axis=-1)
    return np.degrees(np.arcsin(np.clip((los @ up) / rng, -1.0, 1.0)))


# ---------------------------------------------------------------------------
# orbit propagation

class EphemerisArrays:
    """Column-wise view of a set of ephemerides for vectorised propagation."""

    _fields = ("sqrt_a", "e", "i0", "omega0", "omega", "m0", "delta_n",
               "omega_dot", "toe", "idot", "cuc", "cus", "crc", "crs", "cic", "cis")

    def __init__(self, ephs: Sequence[SatelliteEphemeris]):
        self.ephs = tuple(ephs)
        self.sat_ids = [e.sat_id for e in self.ephs]
        for name in self._fields:
            setattr(self, name, np.array([getattr(e, name) for e in self.ephs], dtype=float))

    def __len__(self):
        return len(self.ephs)


def _solve_kepler(m, e, tol=1e-12, max_iter=30):
    ecc_anom = np.array(m, dtype=float, copy=True)
    for _ in range(max_iter):
        step = (ecc_anom - e * np.sin(ecc_anom) - m) / (1.0 - e * np.cos(ecc_anom))
        ecc_anom = ecc_anom - step
        if np.all(np.abs(step) < tol):
            return ecc_anom
    raise KeplerConvergenceError(f"Kepler iteration did not converge in {max_iter} steps")


def propagate(eph: EphemerisArrays | Sequence[SatelliteEphemeris], t: float,
              check_validity: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """ECEF positions (n, 3) and velocities (n, 3) of every satellite at time t."""
    ea = eph if isinstance(eph, EphemerisArrays) else EphemerisArrays(eph)
    tk = _wrap_week(t - ea.toe)
    if check_validity and np.any(np.abs(tk) >= EPHEMERIS_VALIDITY):
        bad = [s for s, dt in zip(ea.sat_ids, tk) if abs(dt) >= EPHEMERIS_VALIDITY]
        raise StaleEphemerisError(f"ephemeris older than {EPHEMERIS_VALIDITY:.0f} s for {bad}")

    a = ea.sqrt_a ** 2
    e = ea.e
    n = np.sqrt(MU / a ** 3) + ea.delta_n
    ecc_anom = _solve_kepler(ea.m0 + n * tk, e)
    cos_e, sin_e = np.cos(ecc_anom), np.sin(ecc_anom)
    one_m_ecos = 1.0 - e * cos_e
    nu = np.arctan2(np.sqrt(1.0 - e * e) * sin_e, cos_e - e)
    phi = nu + ea.omega
    s2, c2 = np.sin(2 * phi), np.cos(2 * phi)

    u = phi + ea.cus * s2 + ea.cuc * c2
    r = a * one_m_ecos + ea.crs * s2 + ea.crc * c2
    inc = ea.i0 + ea.idot * tk + ea.cis * s2 + ea.cic * c2
    big_omega = ea.omega0 + (ea.omega_dot - OMEGA_E) * tk - OMEGA_E * ea.toe

    e_dot = n / one_m_ecos
    nu_dot = e_dot * np.sqrt(1.0 - e * e) / one_m_ecos
    u_dot = nu_dot * (1.0 + 2.0 * (ea.cus * c2 - ea.cuc * s2))
    r_dot = a * e * sin_e * e_dot + 2.0 * nu_dot * (ea.crs * c2 - ea.crc * s2)
    inc_dot = ea.idot + 2.0 * nu_dot * (ea.cis * c2 - ea.cic * s2)
    big_omega_dot = ea.omega_dot - OMEGA_E

    xp, yp = r * np.cos(u), r * np.sin(u)
    xp_dot = r_dot * np.cos(u) - r * u_dot * np.sin(u)
    yp_dot = r_dot * np.sin(u) + r * u_dot * np.cos(u)
    co, so = np.cos(big_omega), np.sin(big_omega)
    ci, si = np.cos(inc), np.sin(inc)

    x = xp * co - yp * ci * so
    y = xp * so + yp * ci * co
    z = yp * si
    vx = xp_dot * co - yp_dot * ci * so + yp * si * so * inc_dot - y * big_omega_dot
    vy = xp_dot * so + yp_dot * ci * co - yp * si * co * inc_dot + x * big_omega_dot
    vz = yp_dot * si + yp * ci * inc_dot
    return np.column_stack([x, y, z]), np.column_stack([vx, vy, vz])


def sat_state(eph: SatelliteEphemeris, t: float) -> SatState:
    pos, vel = propagate([eph], t)
    return SatState(eph.sat_id, float(t), pos[0], vel[0])


def sat_states(ephs, t: float) -> list[SatState]:
    ea = ephs if isinstance(ephs, EphemerisArrays) else EphemerisArrays(ephs)
    pos, vel = propagate(ea, t)
    return [SatState(s, float(t), p, v) for s, p, v in zip(ea.sat_ids, pos, vel)]


def select_ephemeris(records: Sequence[SatelliteEphemeris], t: float) -> list[SatelliteEphemeris]:
    """Per satellite, the record whose toe is closest to t (within validity)."""
    best: dict[str, SatelliteEphemeris] = {}
    for rec in records:
        dt = abs(float(_wrap_week(t - rec.toe)))
        if dt >= EPHEMERIS_VALIDITY:
            continue
        cur = best.get(rec.sat_id)
        if cur is None or dt < abs(float(_wrap_week(t - cur.toe))):
            best[rec.sat_id] = rec
    return [best[k] for k in sorted(best)]


# ---------------------------------------------------------------------------
# visibility and Doppler

def visible(sat: SatState, rx: ReceiverState, mask_deg: float = DEFAULT_MASK_DEG) -> bool:
    # inclusive at the mask; tiny tolerance absorbs arcsin round-off
    return bool(elevation(sat.pos, rx.pos) >= mask_deg - 1e-9)


def doppler_shift(sat: SatState, rx: ReceiverState, f_t: float = F_L1) -> float:
    """Received minus transmitted frequency [Hz]; positive while approaching."""
    los = np.asarray(sat.pos, dtype=float) - np.asarray(rx.pos, dtype=float)
    dist = np.linalg.norm(los)
    if dist == 0.0:
        raise GeometryError("satellite and receiver positions coincide")
    v_rel = np.asarray(sat.vel, dtype=float) - np.asarray(rx.vel, dtype=float)
    return float(-f_t * np.dot(v_rel, los / dist) / C)


def doppler_shifts(sat_pos, sat_vel, rx_pos, rx_vel, f_t: float = F_L1) -> np.ndarray:
    """Vectorised doppler_shift over rows of sat_pos/sat_vel."""
    los = np.asarray(sat_pos) - rx_pos
    unit = los / np.linalg.norm(los, axis=1)[:, None]
    return -f_t * np.einsum("ij,ij->i", np.asarray(sat_vel) - rx_vel, unit) / C


# ---------------------------------------------------------------------------
# synthetic constellation

def _elements_through(target_dir, t_ref, toe, a, e, inc, omega, omega_dot, ascending):
    """Ω0 and M0 placing a satellite along target_dir (ECEF unit vector) at t_ref."""
    lat = np.arcsin(target_dir[2])
    lon = np.arctan2(target_dir[1], target_dir[0])
    u = np.arcsin(np.clip(np.sin(lat) / np.sin(inc), -1.0, 1.0))
    if not ascending:
        u = np.pi - u
    big_omega_k = lon - np.arctan2(np.cos(inc) * np.sin(u), np.cos(u))
    omega0 = big_omega_k - (omega_dot - OMEGA_E) * (t_ref - toe) + OMEGA_E * toe
    nu = u - omega
    ecc_anom = 2.0 * np.arctan(np.sqrt((1.0 - e) / (1.0 + e)) * np.tan(nu / 2.0))
    m_ref = ecc_anom - e * np.sin(ecc_anom)
    m0 = m_ref - np.sqrt(MU / a ** 3) * (t_ref - toe)
    wrap = lambda ang: float(np.mod(ang + np.pi, 2 * np.pi) - np.pi)
    return wrap(omega0), wrap(m0)


def min_visible_count(ephs, sites, times, mask_deg: float = DEFAULT_MASK_DEG) -> int:
    ea = EphemerisArrays(ephs)
    up_vecs = []
    for site in sites:
        lat, lon, _ = ecef_to_lla(site)
        up_vecs.append(enu_rotation(lat, lon)[2])
    worst = len(ea)
    sin_mask = np.sin(np.radians(mask_deg))
    for t in times:
        pos, _ = propagate(ea, t)
        for site, up in zip(sites, up_vecs):
            los = pos - site
            sin_el = (los @ up) / np.linalg.norm(los, axis=1)
            worst = min(worst, int(np.sum(sin_el >= sin_mask - 1e-12)))
    return worst


MAX_SYNTH_PDOP = 4.0


def _pdop(ephs, rx, t) -> float:
    pos, _ = propagate(ephs, t)
    los = pos - rx
    h = np.column_stack([-los / np.linalg.norm(los, axis=1)[:, None], np.ones(len(pos))])
    try:
        q = np.linalg.inv(h.T @ h)
    except np.linalg.LinAlgError:
        return np.inf
    return float(np.sqrt(np.trace(q[:3, :3])))


def synth_constellation(n_sats: int, seed: int, site=DEFAULT_SITE,
                        t_start: float = DEFAULT_T0, span: float = 3600.0,
                        mask_deg: float = DEFAULT_MASK_DEG, max_attempts: int = 200,
                        ) -> list[SatelliteEphemeris]:
    """Deterministic GPS-like constellation covering a service area.

    Satellites are placed (a ≈ 26,560 km, e ≤ 0.02, i ≈ 55°, spread in Ω)
    so that each passes over the service site during [t_start, t_start+span]
    with PDOP at most 4 at the middle of the window.
    The result is checked on a 60 s grid over that window for the site and
    four points 1° away; at least four satellites must clear the mask
    everywhere or ConstellationError is raised.
    """
    if n_sats < MIN_SATS:
        raise ValueError(f"need at least {MIN_SATS} satellites, got {n_sats}")
    rng = np.random.default_rng(seed)
    lat0, lon0, h0 = site
    rx = lla_to_ecef(lat0, lon0, h0)
    enu = enu_rotation(lat0, lon0)
    toe = t_start + span / 2.0
    t_ref = toe
    grid_sites = [rx] + [lla_to_ecef(lat0 + dl, lon0 + dn, h0)
                         for dl, dn in ((1, 0), (-1, 0), (0, 1), (0, -1))]
    grid_times = np.arange(t_start, t_start + span + 1e-9, 60.0)

    for _ in range(max_attempts):
        ephs = []
        az_base = rng.uniform(0.0, 2 * np.pi)
        for k in range(n_sats):
            while True:
                az = az_base + 2 * np.pi * k / n_sats + rng.uniform(-0.3, 0.3)
                el = np.radians(rng.uniform(70.0, 85.0) if k == 0 else rng.uniform(20.0, 75.0))
                d_enu = np.array([np.cos(el) * np.sin(az), np.cos(el) * np.cos(az), np.sin(el)])
                d = enu.T @ d_enu
                a = (5153.6 + rng.uniform(-2.0, 2.0)) ** 2
                # range to the orbit sphere along d
                b = rx @ d
                rho = -b + np.sqrt(b * b - (rx @ rx - a * a))
                target = rx + rho * d
                inc = np.radians(55.0 + rng.uniform(-1.0, 1.0))
                if abs(target[2] / np.linalg.norm(target)) < np.sin(inc) - 1e-3:
                    break
            e = rng.uniform(0.0, 0.02)
            omega = rng.uniform(-np.pi, np.pi)
            omega_dot = -8.0e-9 + rng.uniform(-5e-10, 5e-10)
            omega0, m0 = _elements_through(target / np.linalg.norm(target), t_ref, toe,
                                           a, e, inc, omega, omega_dot,
                                           ascending=bool(rng.integers(0, 2)))
            ephs.append(SatelliteEphemeris(
                sat_id=f"G{k + 1:02d}", sqrt_a=float(np.sqrt(a)), e=float(e), i0=float(inc),
                omega0=omega0, omega=float(omega), m0=m0, delta_n=0.0,
                omega_dot=float(omega_dot), toe=float(toe),
            ))
        if (_pdop(ephs, rx, t_ref) <= MAX_SYNTH_PDOP
                and min_visible_count(ephs, grid_sites, grid_times, mask_deg) >= MIN_SATS):
            return ephs
    raise ConstellationError(
        f"could not keep {MIN_SATS} satellites above {mask_deg}° with n_sats={n_sats}; "
        "request more satellites")
