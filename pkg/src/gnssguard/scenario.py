"""End-to-end experiments: truth, measurements, attack, receiver, detectors.

A run steps a single receiver through ``duration/step + 1`` epochs. Each
epoch propagates the true trajectory and oscillator, synthesises
pseudorange and Doppler observations, passes them through the jamming and
replay transforms, solves a fix, steps the detector and, while the
receiver trusts its fixes, re-synchronises its clock every 30 s.
"""
from __future__ import annotations

import functools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from . import __version__
from .attack import (AdversaryFreqPolicy, AttackScenario, believed_state, calibrate_policy,
                     in_window, jam_epoch, replay_epoch)
from .config import ScenarioConfig, apply_overrides, dump_config
from .constants import C, SECONDS_PER_WEEK
from .constellation import (DEFAULT_T0, EphemerisArrays, ReceiverState, SatState, doppler_shifts,
                            ecef_to_lla, enu_rotation, lla_to_ecef, propagate, select_ephemeris,
                            synth_constellation)
from .detectors import (IMU_PROFILES, DetectorConfig, DstParams, KalmanState, Mode,
                        ReceiverMonitor, inertial_predict, kalman_predict, location_test)
from .errors import ConfigError, ConstellationError, GnssError
from .pvt import PseudorangeSet, PvtSolution, solve_pvt
from .rinex_io import ObservationEpoch, SatObservation, parse_nav, write_series


# ---------------------------------------------------------------------------
# trajectories

class Trajectory:
    """Parametric ground trajectory around a geodetic site (ENU offsets)."""

    def __init__(self, cfg):
        self.kind = cfg.kind
        lat, lon, h = cfg.site
        self.origin = lla_to_ecef(lat, lon, h)
        self.to_ecef = enu_rotation(lat, lon).T
        self.cfg = cfg
        if cfg.kind == "polyline":
            pts = np.asarray(cfg.waypoints, float)
            if pts.shape[1] == 2:
                pts = np.column_stack([pts, np.zeros(len(pts))])
            legs = np.diff(pts, axis=0)
            lengths = np.linalg.norm(legs, axis=1)
            self.pts = pts
            self.dirs = legs / np.where(lengths > 0, lengths, 1.0)[:, None]
            self.speeds = np.asarray(cfg.speeds, float)
            self.t_knots = np.concatenate([[0.0], np.cumsum(lengths / self.speeds)])

    def enu(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        if self.kind == "static":
            return np.zeros(3), np.zeros(3)
        if self.kind == "circular":
            r, w = self.cfg.radius, self.cfg.speed / self.cfg.radius
            pos = np.array([r * np.cos(w * t) - r, r * np.sin(w * t), 0.0])
            vel = np.array([-r * w * np.sin(w * t), r * w * np.cos(w * t), 0.0])
            return pos, vel
        k = int(np.searchsorted(self.t_knots, t, side="right")) - 1
        if k >= len(self.speeds):
            return self.pts[-1].copy(), np.zeros(3)
        v = self.dirs[k] * self.speeds[k]
        return self.pts[k] + v * (t - self.t_knots[k]), v

    def __call__(self, t: float) -> ReceiverState:
        """True receiver state `t` seconds after the run starts."""
        p, v = self.enu(t)
        return ReceiverState(t, self.origin + self.to_ecef @ p, self.to_ecef @ v)


# ---------------------------------------------------------------------------
# true oscillator

# (initial frequency offset, white phase noise [s], frequency random walk [1/sqrt(s)])
CLOCK_PROCESS = {
    "quartz_stable": (1e-8, 5e-9, 1e-11),
    "quartz_commodity": (2e-6, 2e-4, 6.4e-7),
}


def simulate_clock(clock_class: str, times, rng: np.random.Generator) -> np.ndarray:
    """Receiver oscillator bias [s] at each time: offset + drift + wander + noise."""
    f0_sigma, white, rw = CLOCK_PROCESS[clock_class]
    times = np.asarray(times, float)
    dt = np.diff(times, prepend=times[0])
    bias0 = rng.uniform(-1e-3, 1e-3)
    freq = rng.uniform(-1.0, 1.0) * f0_sigma + np.cumsum(rng.normal(0.0, 1.0, len(times)) * rw * np.sqrt(dt))
    phase = bias0 + np.cumsum(freq * dt)
    return phase + rng.normal(0.0, white, len(times))


# ---------------------------------------------------------------------------
# measurements

@functools.lru_cache(maxsize=32)
def _synthetic(n_sats, seed, site, t_start, span, mask_deg):
    return tuple(synth_constellation(n_sats, seed, site=site, t_start=t_start,
                                     span=span, mask_deg=mask_deg))


def load_constellation(cfg: ScenarioConfig, t_start: float) -> list:
    con = cfg.constellation
    if con.source == "rinex":
        try:
            nav = parse_nav(Path(con.nav_path).read_bytes())
        except OSError as exc:
            raise ConfigError(f"constellation.nav_path: {exc}") from None
        ephs = select_ephemeris(nav.records, t_start)
        if len(ephs) < 4:
            raise ConfigError("constellation.nav_path: fewer than 4 satellites valid at the start time")
        return ephs
    span = max(float(cfg.duration), 600.0)
    return list(_synthetic(con.n_sats, con.seed, tuple(cfg.trajectory.site), t_start, span, con.mask_deg))


class MeasurementModel:
    """Noisy pseudorange/Doppler generator for one constellation."""

    def __init__(self, ephs, mask_deg: float = 10.0, sigma_pr: float = 0.0,
                 sigma_doppler: float = 0.0, rng=None):
        self.eph = EphemerisArrays(ephs)
        self.sat_ids = list(self.eph.sat_ids)
        self.mask = mask_deg
        self.sigma_pr = sigma_pr
        self.sigma_doppler = sigma_doppler
        self.rng = np.random.default_rng(rng)

    def states(self, t: float):
        return propagate(self.eph, t)

    def visible_mask(self, sat_pos, rx_pos) -> np.ndarray:
        lat, lon, _ = ecef_to_lla(rx_pos)
        up = enu_rotation(lat, lon)[2]
        los = sat_pos - rx_pos
        sin_el = (los @ up) / np.linalg.norm(los, axis=1)
        return sin_el >= np.sin(np.radians(self.mask)) - 1e-12


def generate_measurements(model: MeasurementModel, t: float, truth: ReceiverState,
                          clock_error: float = 0.0):
    """Observation epoch at GPS time t for the true state `truth`.

    ρ = |s − x| + c·clock_error + N(0, σ_ρ), D = Doppler + N(0, σ_D) for
    each satellite above the mask. Returns the epoch and the satellite
    states used. Fewer than four visible satellites yields flag 1 with the
    observations marked unavailable.
    """
    pos, vel = model.states(t)
    n = len(model.sat_ids)
    # draw for every satellite so the noise stream does not depend on visibility
    pr_noise = model.rng.normal(0.0, 1.0, n) * model.sigma_pr
    d_noise = model.rng.normal(0.0, 1.0, n) * model.sigma_doppler
    rx_pos = np.asarray(truth.pos, float)
    vis = model.visible_mask(pos, rx_pos)
    rng_m = np.linalg.norm(pos - rx_pos, axis=1)
    dop = doppler_shifts(pos, vel, rx_pos, np.asarray(truth.vel, float))
    enough = int(vis.sum()) >= 4
    sats, states = {}, {}
    for i in np.flatnonzero(vis):
        sid = model.sat_ids[i]
        pr = float(rng_m[i] + C * clock_error + pr_noise[i])
        sats[sid] = SatObservation(pr, float(dop[i] + d_noise[i]), None, enough)
        states[sid] = SatState(sid, t, pos[i], vel[i])
    week = int(t // SECONDS_PER_WEEK)
    return ObservationEpoch(t, sats, week, 0 if enough else 1), states, d_noise


# ---------------------------------------------------------------------------
# metrics

MODES = (Mode.NORMAL.value, Mode.ALERT.value, Mode.UNDER_ATTACK.value)


@dataclass
class RunMetrics:
    series: dict
    doppler: dict
    summary: dict
    config: ScenarioConfig
    seeds: dict
    extra: dict = field(default_factory=dict)

    def manifest(self) -> dict:
        return {"tool": "gnssguard", "version": __version__,
                "config_hash": self.config.digest(), "seeds": self.seeds,
                "epochs": len(self.series["t"])}

    def doppler_table(self) -> dict:
        table = {"t": self.series["t"]}
        for sid in sorted(self.doppler):
            for kind, vals in self.doppler[sid].items():
                table[f"{sid}_{kind}"] = vals
        return table

    def write(self, out_dir, fmt: str | None = None) -> list[Path]:
        """Write series, Doppler, summary, config and manifest files."""
        fmt = fmt or self.config.output.format
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = {
            f"series.{fmt}": write_series(self.series, fmt, digits=12),
            f"doppler.{fmt}": write_series(self.doppler_table(), fmt, digits=10),
            "summary.json": _json_bytes(self.summary),
            "config.yaml": dump_config(self.config).encode(),
            "manifest.json": _json_bytes(self.manifest()),
        }
        for name, table in self.extra.items():
            files[f"{name}.{fmt}"] = write_series(table, fmt, digits=10)
        paths = []
        for name, blob in files.items():
            p = out / name
            p.write_bytes(blob)
            paths.append(p)
        return paths


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n").encode()


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    raise TypeError(f"not serialisable: {type(v)}")


def _nanmax(values) -> float | None:
    a = np.asarray(values, float)
    a = a[np.isfinite(a)]
    return float(a.max()) if len(a) else None


def summary_from_series(series: Mapping, spoof_onset: float | None) -> dict:
    """Detection and offset statistics recomputed from per-epoch series."""
    t = np.asarray(series["t"], float)
    modes = list(series["mode"])
    spoofing = np.asarray(series["spoofing"], bool)
    under = np.array([m == Mode.UNDER_ATTACK.value for m in modes])
    prev = [Mode.NORMAL.value] + modes[:-1]
    entries = np.array([m == Mode.UNDER_ATTACK.value and p != m for m, p in zip(modes, prev)])
    alerts = sum(m == Mode.ALERT.value and p == Mode.NORMAL.value for m, p in zip(modes, prev))
    hit = np.flatnonzero(under & spoofing)
    attacked = bool(spoofing.any())
    latency = float(t[hit[0]] - spoof_onset) if (attacked and len(hit) and spoof_onset is not None) else None
    n = len(modes)
    return {
        "epochs": n,
        "attacked": attacked,
        "detected": bool(len(hit)),
        "detection_latency": latency,
        "false_alarms": int(np.sum(entries & ~spoofing)),
        "missed_detection": bool(attacked and not len(hit)),
        "alert_episodes": int(alerts),
        "max_location_offset": _nanmax(series["location_offset"]),
        "max_time_offset": _nanmax(np.abs(np.asarray(series["time_offset"], float))),
        "max_doppler_discrepancy": _nanmax(series["doppler_disc"]),
        "mode_fraction": {m: round(sum(x == m for x in modes) / n, 6) for m in MODES},
    }


# ---------------------------------------------------------------------------
# run

def detector_config(cfg: ScenarioConfig) -> DetectorConfig:
    d = cfg.detectors
    return DetectorConfig(
        location=d.location, clock=d.clock, doppler=d.doppler,
        location_predictor=d.location_predictor, location_k_sigma=d.location_k_sigma,
        location_floor=d.location_floor, imu_profile=cfg.receiver.imu_profile,
        kalman_q=d.kalman_q, kalman_imu_aiding=d.kalman_imu_aiding,
        clock_profile=cfg.receiver.clock_class, clock_window=d.clock_window,
        dst=DstParams(k_sigma=d.dst_k_sigma, min_band=d.dst_min_band, rate_term=d.dst_rate_term,
                      horizon=d.dst_horizon, m_of_n=d.dst_m_of_n),
        dst_window=d.dst_window, verify_epochs=d.verify_epochs, quarantine=d.quarantine,
        discontinuity=d.discontinuity, discontinuity_factor=d.discontinuity_factor,
    )


@dataclass
class _Setup:
    t0: float
    times: np.ndarray
    trajectory: Trajectory
    model: MeasurementModel
    bias: np.ndarray
    attack: AttackScenario | None
    frozen_belief: ReceiverState | None
    monitor: ReceiverMonitor
    seeds: dict


def _build_attack(cfg, t0, trajectory, model, rng) -> tuple[AttackScenario | None, ReceiverState | None]:
    at = cfg.attack
    if not at.enabled:
        return None, None
    jam = None
    if at.jam_start is not None:
        jam = (t0 + at.jam_start, t0 + at.jam_start + at.jam_duration)
    if not at.spoof:
        return AttackScenario(jam_window=jam), None
    onset_rel = at.spoof_onset
    if onset_rel is None:
        onset_rel = at.jam_start + at.jam_duration + cfg.step
    onset = t0 + onset_rel
    truth = trajectory(onset_rel)
    pos, vel = model.states(onset)
    vis = model.visible_mask(pos, truth.pos)
    vis_ids = [s for s, v in zip(model.sat_ids, vis) if v]
    affected = at.affected_sats
    if isinstance(affected, int):
        if not 1 <= affected <= len(vis_ids):
            raise ConfigError(f"attack.affected_sats: {affected} outside 1..{len(vis_ids)} visible satellites")
        affected = tuple(sorted(vis_ids)[:affected])
    elif affected is not None:
        unknown = sorted(set(affected) - set(model.sat_ids))
        if unknown:
            raise ConfigError(f"attack.affected_sats: unknown satellites {unknown}")
        affected = tuple(affected)

    if at.adversary_class == 1:
        policy = AdversaryFreqPolicy(1, offset_hz=at.offset_hz)
    elif at.residual_hz is not None:
        direction = rng.normal(size=3)
        target = [i for i, s in enumerate(model.sat_ids) if vis[i] and (affected is None or s in affected)]
        if at.residual_hz == 0:
            policy = AdversaryFreqPolicy(at.adversary_class)
        else:
            policy = calibrate_policy(at.residual_hz, pos[target], vel[target], truth, direction,
                                      adversary_class=at.adversary_class)
    else:
        policy = AdversaryFreqPolicy(at.adversary_class, pos_error=tuple(at.pos_error),
                                     vel_error=tuple(at.vel_error))
    scenario = AttackScenario(jam_window=jam, spoof_onset=onset, t_min_replay=at.t_replay_ms * 1e-3,
                              tau=at.tau_ms * 1e-3, affected_sats=affected, policy=policy,
                              accumulate=at.accumulate, nav_frame=cfg.receiver.resync_period)
    frozen = believed_state(policy, truth) if at.adversary_class == 2 else None
    return scenario, frozen


def prepare(cfg: ScenarioConfig) -> _Setup:
    """Validate and build everything a run needs before epoch 0."""
    cfg.validate()
    t0 = float(cfg.receiver.t_start if cfg.receiver.t_start is not None else DEFAULT_T0)
    n = int(round(cfg.duration / cfg.step))
    times = t0 + cfg.step * np.arange(n + 1)
    ss = np.random.SeedSequence(cfg.seed)
    s_clock, s_meas, s_det, s_attack = ss.spawn(4)
    seeds = {"master": cfg.seed, "constellation": cfg.constellation.seed}
    try:
        ephs = load_constellation(cfg, t0)
    except ConstellationError as exc:
        raise ConfigError(f"constellation: {exc}") from None
    trajectory = Trajectory(cfg.trajectory)
    model = MeasurementModel(ephs, cfg.constellation.mask_deg, cfg.receiver.sigma_pr,
                             cfg.receiver.sigma_doppler, np.random.default_rng(s_meas))
    try:
        model.states(times[0])
        model.states(times[-1])
    except GnssError as exc:
        raise ConfigError(f"constellation: {exc}") from None
    bias = simulate_clock(cfg.receiver.clock_class, times, np.random.default_rng(s_clock))
    attack, frozen = _build_attack(cfg, t0, trajectory, model, np.random.default_rng(s_attack))
    monitor = ReceiverMonitor(detector_config(cfg), np.random.default_rng(s_det))
    return _Setup(t0, times, trajectory, model, bias, attack, frozen, monitor, seeds)


def run(cfg: ScenarioConfig) -> RunMetrics:
    """Execute one scenario; deterministic for a given config and seed."""
    st = prepare(cfg)
    model, attack, monitor = st.model, st.attack, st.monitor
    n_ep = len(st.times)
    ids = model.sat_ids
    nan = float("nan")
    cols = ("t", "true_x", "true_y", "true_z", "solved_x", "solved_y", "solved_z",
            "location_offset", "time_offset", "solved_clock", "raw_clock", "n_sats",
            "jammed", "spoofing", "mode", "location_pass", "clock_pass", "doppler_pass",
            "location_disc", "clock_disc", "doppler_disc")
    series = {c: [] for c in cols}
    dop = {s: {"true": [nan] * n_ep, "measured": [nan] * n_ep, "predicted": [nan] * n_ep,
               "band": [nan] * n_ep} for s in ids}

    correction = float(st.bias[0])      # receiver starts synchronised
    guess = None
    resync = cfg.receiver.resync_period
    for k, t in enumerate(st.times):
        t = float(t)
        t_rel = t - st.t0
        truth = st.trajectory(t_rel)
        clock_error = st.bias[k] - correction
        ep, states, d_noise = generate_measurements(model, t, truth, clock_error)
        true_dop = {}
        if states:
            sp = np.array([s.pos for s in states.values()])
            sv = np.array([s.vel for s in states.values()])
            true_dop = dict(zip(states, doppler_shifts(sp, sv, truth.pos, truth.vel)))

        jammed = attack is not None and in_window(t, attack.jam_window)
        spoofing = attack is not None and attack.spoofing(t) and not jammed
        if jammed:
            ep = jam_epoch(ep)
        elif spoofing:
            assumed = None
            if st.frozen_belief is not None:
                assumed = ReceiverState(t, st.frozen_belief.pos, st.frozen_belief.vel)
            noise = np.array([d_noise[ids.index(s)] for s in ep.sats])
            ep = replay_epoch(ep, attack, states, truth, assumed, noise)

        sol = _solve(ep, states, guess)
        measured = {s: o.doppler for s, o in ep.sats.items() if o.available and o.doppler is not None}
        raw = sol.clock_offset + correction if sol is not None else nan
        verdict = monitor.step(t, sol, measured, raw, truth)

        if sol is not None:
            guess = (*sol.pos, sol.clock_offset)
            if verdict.mode is Mode.NORMAL and _on_grid(t, resync):
                correction += sol.clock_offset
                guess = (*sol.pos, 0.0)

        tests = verdict.tests
        series["t"].append(t_rel)
        for j, axis in enumerate("xyz"):
            series[f"true_{axis}"].append(float(truth.pos[j]))
            series[f"solved_{axis}"].append(float(sol.pos[j]) if sol is not None else nan)
        series["location_offset"].append(
            float(np.linalg.norm(sol.pos - truth.pos)) if sol is not None else nan)
        series["time_offset"].append(float(correction - st.bias[k]))
        series["solved_clock"].append(sol.clock_offset if sol is not None else nan)
        series["raw_clock"].append(raw)
        series["n_sats"].append(sol.n_sats if sol is not None else len(ep.available_ids))
        series["jammed"].append(bool(jammed))
        series["spoofing"].append(bool(spoofing))
        series["mode"].append(verdict.mode.value)
        for name in ("location", "clock", "doppler"):
            res = tests.get(name)
            series[f"{name}_pass"].append(nan if res is None or res.passed is None else float(res.passed))
            series[f"{name}_disc"].append(nan if res is None else float(res.discrepancy))
        for sid in states:
            dop[sid]["true"][k] = float(true_dop[sid])
            if sid in measured:
                dop[sid]["measured"][k] = float(measured[sid])
        for sid, (p, band) in verdict.predicted_doppler.items():
            if sid in dop:
                dop[sid]["predicted"][k] = float(p)
                dop[sid]["band"][k] = float(band)

    onset = None if attack is None or attack.spoof_onset is None else attack.spoof_onset - st.t0
    summary = summary_from_series(series, onset)
    return RunMetrics(series, dop, summary, cfg, st.seeds)


def _on_grid(t: float, period: float) -> bool:
    r = t % period
    return r < 1e-6 or period - r < 1e-6


def _solve(ep: ObservationEpoch, states: Mapping[str, SatState], guess) -> PvtSolution | None:
    ids = [s for s in ep.available_ids if s in states]
    if len(ids) < 4:
        return None
    obs = PseudorangeSet(
        ep.t, tuple(ids),
        np.array([states[s].pos for s in ids]), np.array([states[s].vel for s in ids]),
        np.array([ep.sats[s].pseudorange for s in ids]),
        np.array([np.nan if ep.sats[s].doppler is None else ep.sats[s].doppler for s in ids]))
    try:
        sol = solve_pvt(obs, guess)
    except GnssError:
        return None
    return sol if sol.converged else None


# ---------------------------------------------------------------------------
# figure replication

FIGURES = ("fig2a", "fig2b", "fig5", "fig6", "fig8", "fig9")

_QUIET = {"detectors.location": False, "detectors.clock": False, "detectors.doppler": False,
          "detectors.discontinuity": False}

FIGURE_PRESETS = {
    # location offset growth when a subset of satellites is replayed
    "fig2a": {**_QUIET, "attack.enabled": True, "attack.jam_start": None, "attack.spoof_onset": 30.0,
              "attack.affected_sats": 1, "attack.t_replay_ms": 0.001,
              "receiver.clock_class": "quartz_stable", "receiver.sigma_pr": 0.5},
    # time offset staircase with every satellite replayed
    "fig2b": {**_QUIET, "attack.enabled": True, "attack.jam_start": None, "attack.spoof_onset": 31.0,
              "receiver.clock_class": "quartz_stable", "receiver.sigma_pr": 0.5},
    # stand-alone inertial error against Kalman prediction over a long outage
    "fig5": {"attack.enabled": True, "attack.jam_start": 60.0, "attack.jam_duration": 239.0,
             "attack.spoof_onset": None, "detectors.location_predictor": "kalman"},
    # clean Doppler history for the linear fit
    "fig6": {"attack.enabled": False},
    # fixed-frequency ground transmitter
    "fig8": {"attack.enabled": True, "attack.adversary_class": 1, "detectors.location": False,
             "detectors.clock": False},
    # adversary predicting the Doppler with a belief error
    "fig9": {"attack.enabled": True, "attack.adversary_class": 3, "attack.residual_hz": 300.0,
             "detectors.location": False, "detectors.clock": False},
}


def replicate_figure(name: str, overrides=None, base: ScenarioConfig | None = None,
                     out_dir=None) -> RunMetrics:
    """Run the preset for a figure and attach its plot-ready series."""
    if name not in FIGURE_PRESETS:
        raise ValueError(f"unknown figure {name!r}; available: {', '.join(FIGURES)}")
    preset = FIGURE_PRESETS[name]
    cfg = apply_overrides(base or ScenarioConfig(), preset)
    cfg = apply_overrides(cfg, overrides)
    metrics = run(cfg)
    metrics.extra = _figure_extra(name, cfg, metrics)
    if out_dir is not None:
        metrics.write(out_dir)
    return metrics


def _figure_extra(name, cfg, metrics) -> dict:
    s = metrics.series
    if name == "fig2a":
        return {"fig2a": {"t": s["t"], "location_offset": s["location_offset"]}}
    if name == "fig2b":
        return {"fig2b": {"t": s["t"], "time_offset": s["time_offset"]}}
    if name == "fig5":
        gap = np.arange(0.0, cfg.attack.jam_duration + cfg.step, cfg.step)
        imu = IMU_PROFILES[cfg.receiver.imu_profile]
        kf = _kalman_at_jam(cfg)
        return {"fig5": {"gap": gap.tolist(),
                         "imu_error": [imu.error(g) for g in gap],
                         "kalman_sigma": kalman_uncertainty_curve(kf, gap).tolist()}}
    if name == "fig6":
        return {"fig6": doppler_fit_series(metrics, window=cfg.detectors.dst_window)}
    return {name: _doppler_attack_series(metrics)}


def _kalman_at_jam(cfg) -> KalmanState:
    """Filter state at the start of the jamming window of `cfg`."""
    pre = apply_overrides(cfg, {"attack.enabled": False,
                                "duration": float(cfg.attack.jam_start)})
    st = prepare(pre)
    correction = float(st.bias[0])
    guess = None
    for k, t in enumerate(st.times[:-1]):
        truth = st.trajectory(t - st.t0)
        ep, states, _ = generate_measurements(st.model, float(t), truth, st.bias[k] - correction)
        sol = _solve(ep, states, guess)
        if sol is None:
            continue
        guess = (*sol.pos, sol.clock_offset)
        measured = {s: o.doppler for s, o in ep.sats.items()}
        st.monitor.step(float(t), sol, measured, sol.clock_offset + correction, truth)
    return st.monitor.kf


def kalman_uncertainty_curve(kf: KalmanState, gaps) -> np.ndarray:
    """RMS position sigma of a predict-only filter after each gap length."""
    out = []
    for g in gaps:
        out.append(kf.position_sigma if g <= 0 else kalman_predict(kf, float(g)).position_sigma)
    return np.array(out)


def doppler_fit_series(metrics: RunMetrics, window: int = 50, sat_id: str | None = None) -> dict:
    """Measured Doppler of one satellite, the line fitted to its last `window`
    samples and the residuals."""
    from .detectors import dst_fit
    t = np.asarray(metrics.series["t"], float)
    candidates = sorted(metrics.doppler) if sat_id is None else [sat_id]
    for sid in candidates:
        meas = np.asarray(metrics.doppler[sid]["measured"], float)
        ok = np.isfinite(meas)
        if ok.sum() >= window:
            break
    else:
        raise ValueError("no satellite has a full Doppler window")
    idx = np.flatnonzero(ok)[-window:]
    fit = dst_fit(np.column_stack([t[idx], meas[idx]]))
    fitted = fit.intercept + fit.rate * t[idx]
    return {"t": t[idx].tolist(), "measured": meas[idx].tolist(), "fit": fitted.tolist(),
            "residual": (meas[idx] - fitted).tolist(), "sat": [sid] * len(idx)}


def _doppler_attack_series(metrics: RunMetrics) -> dict:
    """Predicted, band and measured Doppler for the satellite with the largest gap."""
    best, best_gap = None, -1.0
    for sid, d in metrics.doppler.items():
        gap = np.abs(np.asarray(d["measured"], float) - np.asarray(d["predicted"], float))
        g = np.nanmax(gap) if np.isfinite(gap).any() else -1.0
        if g > best_gap:
            best, best_gap = sid, g
    if best is None:
        return {"t": metrics.series["t"]}
    d = metrics.doppler[best]
    return {"t": metrics.series["t"], "true": d["true"], "measured": d["measured"],
            "predicted": d["predicted"], "band": d["band"], "sat": [best] * len(d["true"])}


# ---------------------------------------------------------------------------
# Monte Carlo helpers

def location_detection_rate(gaps, displacement: float = 500.0, trials: int = 1000,
                            imu_profile: str = "crista_imu15", k_sigma: float = 3.0,
                            floor: float = 15.0, seed: int = 0) -> np.ndarray:
    """Fraction of trials in which the inertial location test flags a fix
    displaced by `displacement` metres after each unavailability gap."""
    imu = IMU_PROFILES[imu_profile]
    rng = np.random.default_rng(seed)
    fix = ReceiverState(0.0, np.zeros(3))
    rates = []
    for gap in gaps:
        hits = 0
        for _ in range(trials):
            d = rng.normal(size=3)
            solved = displacement * d / np.linalg.norm(d)
            pred, radius = inertial_predict(fix, imu, gap, rng)
            hits += not location_test(pred, radius, solved, k_sigma, floor).passed
        rates.append(hits / trials)
    return np.array(rates)


def linear_r2(x, y) -> float:
    x, y = np.asarray(x, float), np.asarray(y, float)
    coef = np.polyfit(x, y, 1)
    resid = y - np.polyval(coef, x)
    ss_tot = np.sum((y - y.mean()) ** 2)
    return float(1.0 - np.sum(resid ** 2) / ss_tot) if ss_tot > 0 else 1.0


def sweep(cfg: ScenarioConfig, param: str, values, seeds=(None,)) -> list[dict]:
    """One run per (value, seed); rows carry the value, seed and summary."""
    values = list(values)
    if not values:
        raise ConfigError("sweep: empty value list")
    rows = []
    for v in values:
        vcfg = apply_overrides(cfg, {param: v})
        for s in seeds:
            rcfg = vcfg if s is None else apply_overrides(vcfg, {"seed": int(s)})
            summ = run(rcfg).summary
            rows.append({"value": v, "seed": rcfg.seed, **{k: summ[k] for k in (
                "detected", "detection_latency", "false_alarms", "max_location_offset",
                "max_time_offset", "max_doppler_discrepancy")}})
    return rows
