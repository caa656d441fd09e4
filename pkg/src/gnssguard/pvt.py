"""Snapshot least-squares navigation solution from pseudoranges and Doppler."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .constants import C, F_L1, MIN_SATS
from .errors import GeometryError, UnderdeterminedError

MAX_CONDITION = 1e12


@dataclass(frozen=True)
class PseudorangeSet:
    t: float
    sat_ids: tuple[str, ...]
    sat_pos: np.ndarray                 # (n, 3) m
    sat_vel: np.ndarray                 # (n, 3) m/s
    pseudorange: np.ndarray             # (n,) m
    doppler: np.ndarray | None = None   # (n,) Hz, NaN where missing

    def __len__(self):
        return len(self.sat_ids)

    def subset(self, keep) -> "PseudorangeSet":
        keep = np.asarray(keep)
        return PseudorangeSet(
            self.t, tuple(np.asarray(self.sat_ids)[keep]), self.sat_pos[keep],
            self.sat_vel[keep], self.pseudorange[keep],
            None if self.doppler is None else self.doppler[keep])


@dataclass(frozen=True)
class PvtSolution:
    pos: np.ndarray
    vel: np.ndarray
    clock_offset: float             # t_V [s]
    residuals: np.ndarray           # post-fit pseudorange residuals [m]
    n_sats: int
    converged: bool
    iterations: int
    velocity_valid: bool = False
    clock_drift: float = 0.0        # [s/s]
    sat_ids: tuple[str, ...] = field(default=())


@dataclass(frozen=True)
class Dop:
    gdop: float
    pdop: float
    hdop: float
    vdop: float
    tdop: float


def predict_pseudorange(sat_pos, rx_pos, t_v: float) -> float:
    """|s - x| + c·t_V."""
    return float(np.linalg.norm(np.asarray(sat_pos, float) - np.asarray(rx_pos, float)) + C * t_v)


def _geometry(sat_pos, x):
    los = sat_pos - x
    rng = np.linalg.norm(los, axis=1)
    unit = los / rng[:, None]
    h = np.empty((len(rng), 4))
    h[:, :3] = -unit
    h[:, 3] = 1.0
    return h, rng, unit


def _check_condition(h):
    # column scaling keeps the geometric test independent of units
    s = np.linalg.svd(h, compute_uv=False)
    if s[-1] <= 0.0 or s[0] / s[-1] > MAX_CONDITION:
        raise GeometryError(f"singular satellite geometry (condition {s[0] / max(s[-1], 1e-300):.3g})")


def solve_pvt(obs: PseudorangeSet, guess=None, tol: float = 1e-4,
              max_iter: int = 20, residual_threshold: float | None = None) -> PvtSolution:
    """Gauss-Newton fix for (x, y, z, c·t_V), then a linear velocity fix.

    `guess` is (x, y, z, t_V) or None for the Earth centre. The iteration
    stops once the position update drops below `tol` metres. Velocity and
    clock drift come from the Doppler shifts when every satellite carries
    one; otherwise velocity is zero and velocity_valid is False.
    """
    n = len(obs)
    if n < MIN_SATS:
        raise UnderdeterminedError(f"{n} satellites, need {MIN_SATS}")
    sat_pos = np.asarray(obs.sat_pos, float)
    rho = np.asarray(obs.pseudorange, float)
    if guess is None:
        state = np.zeros(4)
    else:
        g = np.asarray(guess, float)
        state = np.array([g[0], g[1], g[2], C * g[3]])

    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        h, rng, _ = _geometry(sat_pos, state[:3])
        if it == 1:
            _check_condition(h)
        resid = rho - (rng + state[3])
        dx, *_ = np.linalg.lstsq(h, resid, rcond=None)
        state = state + dx
        if np.linalg.norm(dx[:3]) < tol:
            converged = True
            break

    h, rng, unit = _geometry(sat_pos, state[:3])
    _check_condition(h)
    resid = rho - (rng + state[3])
    if residual_threshold is not None and converged:
        converged = bool(np.max(np.abs(resid)) < residual_threshold)

    vel = np.zeros(3)
    drift = 0.0
    vel_ok = False
    dop_hz = None if obs.doppler is None else np.asarray(obs.doppler, float)
    if dop_hz is not None and np.all(np.isfinite(dop_hz)):
        # range rate = -c·D/f = (v_s - v_r)·a + c·drift
        range_rate = -C * dop_hz / F_L1
        sat_vel = np.asarray(obs.sat_vel, float)
        a_mat = np.column_stack([unit, -np.ones(n)])
        b = np.einsum("ij,ij->i", sat_vel, unit) - range_rate
        sol, *_ = np.linalg.lstsq(a_mat, b, rcond=None)
        vel = sol[:3]
        drift = sol[3] / C
        vel_ok = True

    return PvtSolution(
        pos=state[:3].copy(), vel=vel, clock_offset=state[3] / C, residuals=resid,
        n_sats=n, converged=converged, iterations=it, velocity_valid=vel_ok,
        clock_drift=drift, sat_ids=tuple(obs.sat_ids),
    )


def dop(obs: PseudorangeSet, pos) -> Dop:
    """Dilution-of-precision factors at `pos` for the satellites in `obs`."""
    if len(obs) < MIN_SATS:
        raise UnderdeterminedError(f"{len(obs)} satellites, need {MIN_SATS}")
    h, _, _ = _geometry(np.asarray(obs.sat_pos, float), np.asarray(pos, float))
    _check_condition(h)
    q = np.linalg.inv(h.T @ h)
    # horizontal/vertical split in the local frame
    from .constellation import ecef_to_lla, enu_rotation
    lat, lon, _ = ecef_to_lla(pos)
    r = enu_rotation(lat, lon)
    q_enu = r @ q[:3, :3] @ r.T
    return Dop(
        gdop=float(np.sqrt(np.trace(q))),
        pdop=float(np.sqrt(np.trace(q[:3, :3]))),
        hdop=float(np.sqrt(q_enu[0, 0] + q_enu[1, 1])),
        vdop=float(np.sqrt(q_enu[2, 2])),
        tdop=float(np.sqrt(q[3, 3])),
    )
