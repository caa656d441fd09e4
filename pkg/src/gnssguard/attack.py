"""Jamming and replay transformations of observation series.

Replay is modelled at message level: a replayed satellite's pseudorange
carries the extra delay c·t_replay and its Doppler is whatever the
adversary's transmitter produces at the victim. With ``accumulate`` set,
the adversary re-captures at every NAV frame boundary (30 s of GPS time)
so the delay grows by t_replay per frame; a victim that re-synchronises
its clock at the same boundaries then drifts away from true time in
t_replay steps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .constants import C, F_L1, NAV_FRAME, T_MIN_REPLAY
from .constellation import ReceiverState, SatState, doppler_shift, doppler_shifts
from .errors import AttackConfigError
from .rinex_io import ObservationEpoch, SatObservation


@dataclass(frozen=True)
class AdversaryFreqPolicy:
    adversary_class: int = 1
    offset_hz: float = 0.0                       # class 1 transmit offset
    pos_error: tuple = (0.0, 0.0, 0.0)           # class 2/3 belief error on victim position [m]
    vel_error: tuple = (0.0, 0.0, 0.0)           # ... and velocity [m/s]

    def __post_init__(self):
        if self.adversary_class not in (1, 2, 3):
            raise AttackConfigError(f"adversary class must be 1, 2 or 3, got {self.adversary_class}")


@dataclass(frozen=True)
class AttackScenario:
    jam_window: tuple[float, float] | None = None
    spoof_onset: float | None = None
    t_min_replay: float = T_MIN_REPLAY
    tau: float | Mapping[str, float] = 0.0
    affected_sats: tuple[str, ...] | None = None     # None: every satellite
    policy: AdversaryFreqPolicy = field(default_factory=AdversaryFreqPolicy)
    accumulate: bool = True
    nav_frame: float = NAV_FRAME

    def __post_init__(self):
        if self.t_min_replay <= 0:
            raise AttackConfigError("t_min_replay must be positive")
        taus = self.tau.values() if isinstance(self.tau, Mapping) else [self.tau]
        if any(t < 0 for t in taus):
            raise AttackConfigError("tau must be non-negative")
        if self.jam_window is not None:
            start, end = self.jam_window
            if end < start:
                raise AttackConfigError(f"inverted jam window {self.jam_window}")
            if self.spoof_onset is not None and self.spoof_onset <= end:
                raise AttackConfigError("spoof onset must follow the jam window")

    @property
    def adversary_class(self) -> int:
        return self.policy.adversary_class

    def affects(self, sat_id: str) -> bool:
        return self.affected_sats is None or sat_id in self.affected_sats

    def t_replay(self, sat_id: str) -> float:
        tau = self.tau.get(sat_id, 0.0) if isinstance(self.tau, Mapping) else self.tau
        return self.t_min_replay + tau

    def frames_elapsed(self, t: float) -> int:
        """NAV frame boundaries b with spoof_onset < b < t."""
        if self.spoof_onset is None or t <= self.spoof_onset:
            return 0
        f = self.nav_frame
        first = math.floor(self.spoof_onset / f + 1e-9) + 1
        last = math.ceil(t / f - 1e-9) - 1
        return max(0, last - first + 1)

    def delay(self, sat_id: str, t: float) -> float:
        steps = 1 + self.frames_elapsed(t) if self.accumulate else 1
        return steps * self.t_replay(sat_id)

    def spoofing(self, t: float) -> bool:
        return self.spoof_onset is not None and t >= self.spoof_onset - 1e-9


def in_window(t: float, window) -> bool:
    return window is not None and window[0] - 1e-9 <= t <= window[1] + 1e-9


# ---------------------------------------------------------------------------

def jam_epoch(ep: ObservationEpoch) -> ObservationEpoch:
    lost = {s: SatObservation(None, None, None, False, o.raw) for s, o in ep.sats.items()}
    return replace(ep, sats=lost)


def apply_jamming(series: Sequence[ObservationEpoch], window) -> list[ObservationEpoch]:
    """Flag every observation inside the closed window as unavailable."""
    start, end = window
    if end < start:
        raise AttackConfigError(f"inverted jam window {window}")
    return [jam_epoch(ep) if in_window(ep.t, window) else ep for ep in series]


def adversary_doppler(policy: AdversaryFreqPolicy, sat: SatState, true_rx: ReceiverState,
                      t: float, assumed_rx: ReceiverState | None = None) -> float:
    """Doppler the victim observes on the adversary's replayed signal.

    Class 1 transmits on a fixed frequency from a static ground position,
    so the victim sees just the transmit offset. Classes 2 and 3 predict
    the Doppler at where they believe the victim is; `assumed_rx`
    overrides that belief (class 2 freezes it at spoof onset).
    """
    if policy.adversary_class == 1:
        return float(policy.offset_hz)
    if assumed_rx is None:
        assumed_rx = believed_state(policy, true_rx)
    return doppler_shift(sat, assumed_rx)


def believed_state(policy: AdversaryFreqPolicy, true_rx: ReceiverState) -> ReceiverState:
    return ReceiverState(true_rx.t, np.asarray(true_rx.pos) + np.asarray(policy.pos_error, float),
                         np.asarray(true_rx.vel) + np.asarray(policy.vel_error, float))


def replay_epoch(ep: ObservationEpoch, scenario: AttackScenario,
                 sat_states: Mapping[str, SatState], true_rx: ReceiverState,
                 assumed_rx: ReceiverState | None = None,
                 doppler_noise: np.ndarray | float = 0.0) -> ObservationEpoch:
    if not scenario.spoofing(ep.t):
        return ep
    out = dict(ep.sats)
    for k, (sid, o) in enumerate(ep.sats.items()):
        if not scenario.affects(sid) or sid not in sat_states:
            continue
        pr = o.pseudorange
        if pr is None:
            continue
        noise = doppler_noise[k] if np.ndim(doppler_noise) else doppler_noise
        dop = adversary_doppler(scenario.policy, sat_states[sid], true_rx, ep.t, assumed_rx) + noise
        out[sid] = SatObservation(pr + C * scenario.delay(sid, ep.t), dop, None, True, o.raw)
    return replace(ep, sats=out)


def apply_replay(series: Sequence[ObservationEpoch], scenario: AttackScenario,
                 truth: Callable[[float], ReceiverState] | Sequence[ReceiverState],
                 constellation: Callable[[float], Mapping[str, SatState]],
                 known_sats: Sequence[str] | None = None) -> list[ObservationEpoch]:
    """Replace affected satellites' observations from spoof onset on.

    `truth` gives the victim's true state per epoch (callable on t, or a
    sequence aligned with `series`); `constellation(t)` returns satellite
    states keyed by id. `known_sats` lists the satellites the adversary can
    see; when omitted the ids returned by the first constellation call are
    used.
    """
    if scenario.affected_sats and series:
        known = set(known_sats) if known_sats is not None else set(constellation(series[0].t))
        missing = sorted(set(scenario.affected_sats) - known)
        if missing:
            raise AttackConfigError(f"replay schedule names unknown satellites {missing}")
    out = []
    frozen = None
    for k, ep in enumerate(series):
        rx = truth(ep.t) if callable(truth) else truth[k]
        if not scenario.spoofing(ep.t):
            out.append(ep)
            continue
        assumed = None
        if scenario.adversary_class == 2:
            if frozen is None:
                frozen = believed_state(scenario.policy, rx)
            assumed = ReceiverState(ep.t, frozen.pos, frozen.vel)
        out.append(replay_epoch(ep, scenario, constellation(ep.t), rx, assumed))
    return out


def doppler_residuals(policy: AdversaryFreqPolicy, sat_pos, sat_vel, rx: ReceiverState,
                      assumed_rx: ReceiverState | None = None) -> np.ndarray:
    """Adversary-produced minus genuine Doppler for each satellite row."""
    true_d = doppler_shifts(sat_pos, sat_vel, rx.pos, rx.vel)
    if policy.adversary_class == 1:
        return policy.offset_hz - true_d
    a = assumed_rx or believed_state(policy, rx)
    return doppler_shifts(sat_pos, sat_vel, a.pos, a.vel) - true_d


def calibrate_policy(target_hz: float, sat_pos, sat_vel, rx: ReceiverState,
                     direction=(1.0, 0.0, 0.0), kind: str = "velocity",
                     adversary_class: int = 3, tol: float = 1e-3) -> AdversaryFreqPolicy:
    """Scale a belief error along `direction` until the largest per-satellite
    Doppler residual equals `target_hz` (bisection on the magnitude)."""
    d = np.asarray(direction, float)
    d = d / np.linalg.norm(d)

    def policy(mag):
        err = tuple(float(x) for x in mag * d)
        if kind == "velocity":
            return AdversaryFreqPolicy(adversary_class, vel_error=err)
        return AdversaryFreqPolicy(adversary_class, pos_error=err)

    def worst(mag):
        return float(np.max(np.abs(doppler_residuals(policy(mag), sat_pos, sat_vel, rx))))

    lo, hi = 0.0, 1.0
    while worst(hi) < target_hz:
        hi *= 2.0
        if hi > 1e9:
            raise AttackConfigError("target residual unreachable along this direction")
    while hi - lo > tol * max(hi, 1.0):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if worst(mid) < target_hz else (lo, mid)
    return policy(0.5 * (lo + hi))


def velocity_error_for(target_hz: float) -> float:
    """Radial velocity belief error that shifts Doppler by target_hz."""
    return target_hz * C / F_L1
