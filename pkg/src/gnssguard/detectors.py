"""Normal / alert / under-attack protocol and the three consistency tests.

The receiver learns location, clock and Doppler behaviour while it trusts
its fixes (normal mode). When lock is lost or a fix jumps, it enters alert
mode, predicts each quantity forward and compares the predictions with
what the reacquired signals produce. Any failed test moves it to
under-attack and throws away the fixes buffered during the alert.
"""
from __future__ import annotations

import enum
import warnings
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .constellation import ReceiverState
from .errors import InsufficientDataError, KalmanError, StalePredictionError


class Mode(str, enum.Enum):
    NORMAL = "Normal"
    ALERT = "Alert"
    UNDER_ATTACK = "UnderAttack"


@dataclass(frozen=True)
class TestOutcome:
    __test__ = False
    passed: bool | None          # None: inconclusive
    discrepancy: float = float("nan")
    detail: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if self.passed is not None:
            object.__setattr__(self, "passed", bool(self.passed))


def aggregate(results: Mapping[str, TestOutcome] | None) -> bool | None:
    """OR of failures; None when nothing failed but something was inconclusive."""
    if not results:
        return True
    values = [r.passed for r in results.values()]
    if any(v is not None and not v for v in values):
        return False
    if any(v is None for v in values):
        return None
    return True


# ---------------------------------------------------------------------------
# mode machine

@dataclass(frozen=True)
class EpochStatus:
    locked: bool
    n_sats: int = 0
    suspicious: bool = False


@dataclass(frozen=True)
class ModeState:
    mode: Mode = Mode.NORMAL
    entered_at: float = 0.0
    buffer: tuple = ()
    passes: int = 0
    failed_in_episode: bool = False
    released: tuple = ()          # solutions accepted by this step
    discarded: tuple = ()         # solutions rejected by this step


def mode_step(state: ModeState, t: float, status: EpochStatus,
              test_results: Mapping[str, TestOutcome] | None = None,
              solution=None, verify_epochs: int = 1, quarantine: int = 10) -> ModeState:
    state = replace(state, released=(), discarded=())
    locked = status.locked and status.n_sats >= 4

    if state.mode is Mode.NORMAL:
        if locked and not status.suspicious:
            if test_results is not None:
                warnings.warn("test results ignored in normal mode", stacklevel=2)
            return state
        state = ModeState(Mode.ALERT, t)
        if not locked:
            return state

    if state.mode is Mode.ALERT:
        if not locked:
            return state
        buffer = state.buffer + ((solution,) if solution is not None else ())
        verdict = aggregate(test_results)
        if verdict is False:
            return ModeState(Mode.UNDER_ATTACK, t, failed_in_episode=True, discarded=buffer)
        if verdict is None:
            return replace(state, buffer=buffer, passes=0)
        passes = state.passes + 1
        if passes >= verify_epochs:
            return ModeState(Mode.NORMAL, t, released=buffer)
        return replace(state, buffer=buffer, passes=passes)

    # under attack: leave only after a clean quarantine
    if locked and aggregate(test_results) is True:
        passes = state.passes + 1
        if passes >= quarantine:
            return ModeState(Mode.NORMAL, t)
        return replace(state, passes=passes)
    return replace(state, passes=0)


# ---------------------------------------------------------------------------
# Kalman filter (constant velocity, state X Y Z Vx Vy Vz)

@dataclass(frozen=True)
class KalmanState:
    x: np.ndarray
    P: np.ndarray
    q: float = 0.01              # white-acceleration PSD [m^2/s^3]
    t: float = 0.0

    @property
    def pos(self):
        return self.x[:3]

    @property
    def vel(self):
        return self.x[3:]

    @property
    def position_sigma(self) -> float:
        """RMS 3-D position uncertainty, sqrt(trace of the position block)."""
        return float(np.sqrt(max(np.trace(self.P[:3, :3]), 0.0)))


def _checked_cov(P: np.ndarray) -> np.ndarray:
    P = 0.5 * (P + P.T)
    w = np.linalg.eigvalsh(P)
    if w[0] < -1e-9 * max(1.0, w[-1]):
        raise KalmanError(f"covariance not positive semidefinite (min eigenvalue {w[0]:.3g})")
    return P


def transition(dt: float) -> np.ndarray:
    phi = np.eye(6)
    phi[:3, 3:] = dt * np.eye(3)
    return phi


def process_noise(dt: float, q: float) -> np.ndarray:
    Q = np.zeros((6, 6))
    Q[:3, :3] = q * dt ** 3 / 3.0 * np.eye(3)
    Q[:3, 3:] = Q[3:, :3] = q * dt ** 2 / 2.0 * np.eye(3)
    Q[3:, 3:] = q * dt * np.eye(3)
    return Q


def kalman_init(pos, vel=(0.0, 0.0, 0.0), pos_sigma: float = 10.0, vel_sigma: float = 1.0,
                q: float = 0.01, t: float = 0.0) -> KalmanState:
    P = np.diag([pos_sigma ** 2] * 3 + [vel_sigma ** 2] * 3)
    return KalmanState(np.concatenate([np.asarray(pos, float), np.asarray(vel, float)]), P, q, t)


def kalman_predict(ks: KalmanState, dt: float) -> KalmanState:
    """S_{k+1} = Φ S_k with P <- Φ P Φᵀ + Q."""
    if dt <= 0:
        raise ValueError("prediction step must be positive")
    P = _checked_cov(ks.P)
    phi = transition(dt)
    return KalmanState(phi @ ks.x, phi @ P @ phi.T + process_noise(dt, ks.q), ks.q, ks.t + dt)


_H = {
    "position": np.hstack([np.eye(3), np.zeros((3, 3))]),
    "velocity": np.hstack([np.zeros((3, 3)), np.eye(3)]),
}


def kalman_update(ks: KalmanState, z, R, kind: str = "position") -> KalmanState:
    """Measurement update (Joseph form). `kind` is position, velocity or an H matrix."""
    H = _H[kind] if isinstance(kind, str) else np.asarray(kind, float)
    R = np.atleast_2d(np.asarray(R, float))
    if R.shape == (1, 1):
        R = R[0, 0] * np.eye(H.shape[0])
    R = _checked_cov(R)
    P = _checked_cov(ks.P)
    S = H @ P @ H.T + R
    if np.linalg.cond(S) > 1e14:
        raise KalmanError("innovation covariance is singular")
    K = np.linalg.solve(S, H @ P).T
    innov = np.asarray(z, float) - H @ ks.x
    I_KH = np.eye(6) - K @ H
    P_new = I_KH @ P @ I_KH.T + K @ R @ K.T
    return KalmanState(ks.x + K @ innov, 0.5 * (P_new + P_new.T), ks.q, ks.t)


# ---------------------------------------------------------------------------
# location inertial test

@dataclass(frozen=True)
class ImuErrorModel:
    """Stand-alone inertial position error after dt seconds: a·dt² + b·dt."""
    a: float
    b: float
    name: str = ""

    def error(self, dt: float) -> float:
        dt = max(float(dt), 0.0)
        return self.a * dt * dt + self.b * dt


IMU_PROFILES = {
    # MEMS-grade free inertial drift; representative values for a Crista IMU-15 class unit
    "crista_imu15": ImuErrorModel(a=0.05, b=0.5, name="crista_imu15"),
    "tactical": ImuErrorModel(a=0.005, b=0.05, name="tactical"),
}


def inertial_predict(last_fix: ReceiverState, imu: ImuErrorModel, dt: float,
                     rng: np.random.Generator | int | None = None,
                     truth_pos=None) -> tuple[np.ndarray, float]:
    """Dead-reckoned position after dt and its uncertainty radius.

    The prediction is the true position (propagated from `last_fix` at
    constant velocity unless `truth_pos` is given) displaced by an error
    drawn uniformly from the ball of radius imu.error(dt).
    """
    if dt < 0:
        raise ValueError("dt must be non-negative")
    radius = imu.error(dt)
    base = (np.asarray(truth_pos, float) if truth_pos is not None
            else np.asarray(last_fix.pos, float) + np.asarray(last_fix.vel, float) * dt)
    if radius == 0.0:
        return base.copy(), 0.0
    rng = np.random.default_rng(rng)
    d = rng.normal(size=3)
    d /= np.linalg.norm(d)
    return base + d * radius * rng.random() ** (1.0 / 3.0), radius


def location_test(predicted_pos, radius: float, solved_pos, k_sigma: float = 3.0,
                  floor: float = 0.0) -> TestOutcome:
    """Fail when the fix lies more than k_sigma·radius from the prediction.

    `floor` adds the fix's own noise scale in quadrature to the radius.
    """
    disc = float(np.linalg.norm(np.asarray(solved_pos, float) - np.asarray(predicted_pos, float)))
    limit = k_sigma * float(np.hypot(radius, floor))
    return TestOutcome(disc <= limit, disc, {"limit": limit})


# ---------------------------------------------------------------------------
# clock offset test

@dataclass(frozen=True)
class ClockProfile:
    """Holdover acceptance envelope: floor + rate·Δt (plus a 1e-7 s epsilon)."""
    floor: float
    rate: float
    name: str = ""


CLOCK_EPSILON = 1e-7
CLOCK_PROFILES = {
    # microsecond-level holdover over 350 s
    "quartz_stable": ClockProfile(floor=0.0, rate=1e-6 / 350.0, name="quartz_stable"),
    # commodity receiver: ten-millisecond instability plus fast wander; ~30 ms after 2 min
    "quartz_commodity": ClockProfile(floor=15e-3, rate=1.2e-4, name="quartz_commodity"),
}


@dataclass(frozen=True)
class ClockModel:
    last_sync_time: float
    last_offset: float
    drift_rate: float = 0.0
    profile: ClockProfile = CLOCK_PROFILES["quartz_commodity"]

    def envelope(self, dt: float) -> float:
        dt = max(dt, 0.0)
        return CLOCK_EPSILON + self.profile.floor + self.profile.rate * dt


def fit_clock_model(times, offsets, profile: ClockProfile) -> ClockModel:
    """Line fit of normal-mode offsets; the model anchors at the last sample time."""
    times = np.asarray(times, float)
    offsets = np.asarray(offsets, float)
    if len(times) == 0:
        raise InsufficientDataError("no clock samples")
    if len(times) == 1:
        return ClockModel(float(times[0]), float(offsets[0]), 0.0, profile)
    tm = times.mean()
    slope = np.sum((times - tm) * (offsets - offsets.mean())) / np.sum((times - tm) ** 2)
    end = float(times[-1])
    return ClockModel(end, float(offsets.mean() + slope * (end - tm)), float(slope), profile)


def clock_predict(cm: ClockModel, t: float) -> tuple[float, float]:
    dt = t - cm.last_sync_time
    if dt < -1e-9:
        raise ValueError("prediction time precedes last synchronisation")
    return cm.last_offset + cm.drift_rate * dt, cm.envelope(dt)


def clock_test(cm: ClockModel, solved_offset: float, t: float) -> TestOutcome:
    expected, env = clock_predict(cm, t)
    disc = abs(solved_offset - expected)
    return TestOutcome(disc <= env, disc, {"envelope": env, "expected": expected})


# ---------------------------------------------------------------------------
# Doppler shift test

MIN_FIT_SAMPLES = 10


class DopplerHistory:
    """Per-satellite ring buffers of (t, measured Doppler)."""

    def __init__(self, window: int = 50):
        self.window = window
        self.buffers: dict[str, deque] = {}

    def push(self, sat_id: str, t: float, value: float):
        buf = self.buffers.setdefault(sat_id, deque(maxlen=self.window))
        if buf and t <= buf[-1][0]:
            raise ValueError("Doppler samples must be time-ordered")
        buf.append((t, value))

    def samples(self, sat_id: str) -> np.ndarray:
        return np.array(self.buffers.get(sat_id, ()), dtype=float).reshape(-1, 2)

    def copy(self) -> "DopplerHistory":
        new = DopplerHistory(self.window)
        new.buffers = {k: deque(v, maxlen=self.window) for k, v in self.buffers.items()}
        return new

    def __contains__(self, sat_id):
        return sat_id in self.buffers


@dataclass(frozen=True)
class DopplerFit:
    rate: float          # Hz/s
    intercept: float     # Hz at t = 0 of the sample time axis
    sigma: float         # residual standard deviation [Hz]
    t_mean: float
    t_end: float
    n: int
    sxx: float
    residuals: np.ndarray = field(repr=False, default=None)

    def value(self, t: float) -> float:
        return self.intercept + self.rate * t


def dst_fit(samples) -> DopplerFit:
    """Least-squares line through (t, Doppler) samples."""
    s = np.asarray(samples, float).reshape(-1, 2)
    if len(s) < MIN_FIT_SAMPLES:
        raise InsufficientDataError(f"{len(s)} Doppler samples, need {MIN_FIT_SAMPLES}")
    t, d = s[:, 0], s[:, 1]
    tm = t.mean()
    sxx = float(np.sum((t - tm) ** 2))
    rate = float(np.sum((t - tm) * (d - d.mean())) / sxx)
    centre = float(d.mean())
    resid = d - (centre + rate * (t - tm))
    sigma = float(np.sqrt(np.sum(resid ** 2) / (len(s) - 2)))
    return DopplerFit(rate, centre - rate * tm, sigma, float(tm), float(t[-1]), len(s), sxx, resid)


@dataclass(frozen=True)
class DstParams:
    k_sigma: float = 5.0
    min_band: float = 20.0          # Δf_min [Hz]
    rate_term: float = 40.0 / 60.0  # band growth per second of extrapolation [Hz/s]
    sigma_floor: float = 1.0        # [Hz]
    horizon: float = 300.0          # [s] past the fit window
    m_of_n: int = 1


def dst_predict(fit: DopplerFit, t: float, params: DstParams = DstParams()) -> tuple[float, float]:
    """Extrapolated Doppler at t and the half-width of its acceptance band."""
    h = t - fit.t_end
    if h > params.horizon:
        raise StalePredictionError(f"prediction {h:.0f} s past the fit window (limit {params.horizon:.0f} s)")
    sigma = max(fit.sigma, params.sigma_floor)
    spread = np.sqrt(1.0 + 1.0 / fit.n + (t - fit.t_mean) ** 2 / fit.sxx)
    band = max(params.min_band, params.k_sigma * sigma * spread) + params.rate_term * max(h, 0.0)
    return fit.value(t), float(band)


def dst_test(predicted: Mapping[str, tuple[float, float]], measured: Mapping[str, float],
             m_of_n: int = 1) -> TestOutcome:
    """Compare per-satellite Doppler with (prediction, band); fail if at least
    m_of_n satellites fall outside their band."""
    common = [s for s in predicted if s in measured and np.isfinite(measured[s])]
    if not common:
        return TestOutcome(None, float("nan"), {"reason": "no overlapping satellites"})
    disc = {s: abs(measured[s] - predicted[s][0]) for s in common}
    outside = [s for s in common if disc[s] > predicted[s][1]]
    return TestOutcome(len(outside) < m_of_n, max(disc.values()),
                       {"per_sat": disc, "outside": outside})


# ---------------------------------------------------------------------------
# receiver-side monitor tying the pieces together

@dataclass(frozen=True)
class DetectorConfig:
    location: bool = True
    clock: bool = True
    doppler: bool = True
    location_predictor: str = "imu"         # imu | kalman
    location_k_sigma: float = 3.0
    location_floor: float = 15.0            # fix noise scale [m]
    imu_profile: str = "crista_imu15"
    kalman_q: float = 0.01
    kalman_imu_aiding: bool = False
    imu_velocity_sigma: float = 0.5
    clock_profile: str = "quartz_commodity"
    clock_window: int = 60
    dst: DstParams = DstParams()
    dst_window: int = 50
    verify_epochs: int = 1
    quarantine: int = 10
    discontinuity: bool = True
    discontinuity_factor: float = 3.0
    discontinuity_window: int = 30
    discontinuity_floor_m: float = 10.0
    discontinuity_floor_s: float = 1e-6
    warmup: int = 10


@dataclass
class EpochVerdict:
    mode: Mode
    tests: dict
    predicted_doppler: dict
    released: tuple = ()
    discarded: tuple = ()
    suspicious: bool = False


class ReceiverMonitor:
    """Per-receiver detector state, stepped once per epoch in time order."""

    def __init__(self, config: DetectorConfig = DetectorConfig(), rng=None):
        self.cfg = config
        self.rng = np.random.default_rng(rng)
        self.state = ModeState()
        self.kf: KalmanState | None = None
        self.dop_hist = DopplerHistory(config.dst_window)
        self.clock_hist: deque = deque(maxlen=config.clock_window)
        self.pos_innov: deque = deque(maxlen=config.discontinuity_window)
        self.clk_innov: deque = deque(maxlen=config.discontinuity_window)
        self.last_fix: ReceiverState | None = None
        self.n_normal = 0
        # frozen at alert entry
        self.fits: dict[str, DopplerFit] = {}
        self.clock_model: ClockModel | None = None
        self.kf_alert: KalmanState | None = None
        self.alert_start_fix: ReceiverState | None = None

    # -- normal-mode learning --------------------------------------------
    def _learn(self, t, sol, dopplers, raw_offset):
        if self.kf is None:
            self.kf = kalman_init(sol.pos, sol.vel if sol.velocity_valid else np.zeros(3),
                                  q=self.cfg.kalman_q, t=t)
        else:
            dt = t - self.kf.t
            kf = kalman_predict(self.kf, dt) if dt > 0 else self.kf
            kf = kalman_update(kf, sol.pos, self.cfg.location_floor ** 2 / 3.0)
            if sol.velocity_valid:
                kf = kalman_update(kf, sol.vel, 0.1 ** 2, kind="velocity")
            self.kf = kf
        for sid, d in dopplers.items():
            if np.isfinite(d):
                self.dop_hist.push(sid, t, d)
        self.clock_hist.append((t, raw_offset))
        self.last_fix = ReceiverState(t, np.asarray(sol.pos, float),
                                      np.asarray(sol.vel if sol.velocity_valid else np.zeros(3)))
        self.n_normal += 1

    def _suspicious(self, t, sol, raw_offset) -> bool:
        if not self.cfg.discontinuity or self.kf is None or self.n_normal < self.cfg.warmup:
            return False
        pred = kalman_predict(self.kf, t - self.kf.t) if t > self.kf.t else self.kf
        d_pos = float(np.linalg.norm(np.asarray(sol.pos) - pred.pos))
        cm = self._clock_model()
        d_clk = abs(raw_offset - clock_predict(cm, t)[0]) if cm else 0.0
        f = self.cfg.discontinuity_factor
        pos_scale = max(max(self.pos_innov, default=0.0), self.cfg.discontinuity_floor_m)
        clk_scale = max(max(self.clk_innov, default=0.0), self.cfg.discontinuity_floor_s)
        jump = (len(self.pos_innov) >= self.cfg.warmup
                and (d_pos > f * pos_scale or d_clk > f * clk_scale))
        if not jump:
            self.pos_innov.append(d_pos)
            self.clk_innov.append(d_clk)
        return jump

    def _clock_model(self):
        if not self.clock_hist:
            return None
        ts, vals = zip(*self.clock_hist)
        return fit_clock_model(ts, vals, CLOCK_PROFILES[self.cfg.clock_profile])

    def _enter_alert(self, t):
        self.fits = {}
        for sid in self.dop_hist.buffers:
            s = self.dop_hist.samples(sid)
            if len(s) >= MIN_FIT_SAMPLES:
                self.fits[sid] = dst_fit(s)
        self.clock_model = self._clock_model()
        self.kf_alert = self.kf
        self.alert_start_fix = self.last_fix

    # -- alert-mode predictions ------------------------------------------
    def _advance_kalman(self, t, truth_vel=None):
        if self.kf_alert is None or t <= self.kf_alert.t:
            return
        kf = kalman_predict(self.kf_alert, t - self.kf_alert.t)
        if self.cfg.kalman_imu_aiding and truth_vel is not None:
            sig = self.cfg.imu_velocity_sigma
            z = np.asarray(truth_vel, float) + self.rng.normal(0.0, sig, 3)
            kf = kalman_update(kf, z, sig ** 2, kind="velocity")
        self.kf_alert = kf

    def predicted_dopplers(self, t) -> dict:
        out = {}
        for sid, fit in self.fits.items():
            try:
                out[sid] = dst_predict(fit, t, self.cfg.dst)
            except StalePredictionError:
                continue
        return out

    def _run_tests(self, t, sol, dopplers, raw_offset, truth_pos):
        cfg = self.cfg
        results = {}
        if cfg.location and self.alert_start_fix is not None:
            if cfg.location_predictor == "kalman" and self.kf_alert is not None:
                pred, radius = self.kf_alert.pos, self.kf_alert.position_sigma
            else:
                dt = t - self.alert_start_fix.t
                pred, radius = inertial_predict(self.alert_start_fix, IMU_PROFILES[cfg.imu_profile],
                                                dt, self.rng, truth_pos)
            results["location"] = location_test(pred, radius, sol.pos, cfg.location_k_sigma,
                                                cfg.location_floor)
        if cfg.clock and self.clock_model is not None:
            results["clock"] = clock_test(self.clock_model, raw_offset, t)
        predicted = {}
        if cfg.doppler:
            predicted = self.predicted_dopplers(t)
            results["doppler"] = dst_test(predicted, dopplers, cfg.dst.m_of_n)
        return results, predicted

    def step(self, t: float, sol=None, dopplers: Mapping[str, float] | None = None,
             raw_offset: float = 0.0, truth: ReceiverState | None = None) -> EpochVerdict:
        """Advance one epoch. `sol` is the PVT fix (None when lock is lost),
        `raw_offset` the solved oscillator offset, `truth` the true state
        used only to synthesise inertial sensor readings."""
        dopplers = dict(dopplers or {})
        locked = sol is not None
        status = EpochStatus(locked, sol.n_sats if locked else 0)
        prev_mode = self.state.mode
        suspicious = False
        if prev_mode is Mode.NORMAL and locked:
            suspicious = self._suspicious(t, sol, raw_offset)
            status = replace(status, suspicious=suspicious)

        truth_pos = None if truth is None else truth.pos
        truth_vel = None if truth is None else truth.vel
        if prev_mode is Mode.NORMAL and (not locked or suspicious):
            self._enter_alert(t)
        if prev_mode is not Mode.NORMAL or not locked or suspicious:
            self._advance_kalman(t, truth_vel)

        tests, predicted = {}, {}
        if locked and (prev_mode is not Mode.NORMAL or suspicious):
            tests, predicted = self._run_tests(t, sol, dopplers, raw_offset, truth_pos)
            item = (t, sol, dopplers, raw_offset)
            self.state = mode_step(self.state, t, status, tests, item,
                                   self.cfg.verify_epochs, self.cfg.quarantine)
        else:
            self.state = mode_step(self.state, t, status, None, None,
                                   self.cfg.verify_epochs, self.cfg.quarantine)
            if self.state.mode is Mode.NORMAL and locked:
                self._learn(t, sol, dopplers, raw_offset)
        if prev_mode is not Mode.NORMAL and self.state.mode is Mode.NORMAL:
            self._resume(t, sol)
        elif prev_mode is not Mode.NORMAL and not self.state.mode is Mode.NORMAL and locked:
            pass
        return EpochVerdict(self.state.mode, tests, predicted, self.state.released,
                            self.state.discarded, suspicious)

    def _resume(self, t, sol):
        """Back to normal: fold released fixes into the learned history."""
        items = self.state.released or ((t, sol, {}, None),)
        self.kf = None
        self.pos_innov.clear()
        self.clk_innov.clear()
        self.n_normal = 0
        for (ti, si, di, ri) in items:
            if ri is None:
                continue
            self._learn(ti, si, di, ri)
        self.fits = {}
        self.kf_alert = None
