"""RINEX 2.x observation/navigation readers and time-series writers.

Only the GPS flavour of RINEX 2 is handled. Field positions follow the
fixed-width RINEX 2.11 layout; a blank field or a literal 0.0 in an
observation slot is read as "missing". Doppler is kept in the RINEX sign
convention (positive while the satellite approaches), which is also the
convention used by the rest of the package.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from datetime import date
from typing import Iterable, Mapping, Sequence

import numpy as np

from .constants import SECONDS_PER_WEEK
from .constellation import SatelliteEphemeris
from .errors import (
    RinexParseError, RinexStructureError, SeriesError, UnsupportedVersionError,
)

GPS_EPOCH = date(1980, 1, 6)
PSEUDORANGE_BOUNDS = (1.8e7, 3.0e7)
DOPPLER_BOUND = 9000.0
DEFAULT_CODES = {"pseudorange": ("C1", "P1"), "doppler": ("D1",), "phase": ("L1",)}


@dataclass(frozen=True)
class SatObservation:
    pseudorange: float | None
    doppler: float | None
    phase: float | None
    available: bool
    # every code in header order -> (value, LLI, SSI); None when blank
    raw: Mapping[str, tuple] = field(default_factory=dict)


@dataclass(frozen=True)
class ObservationEpoch:
    t: float                              # GPS seconds of week
    sats: Mapping[str, SatObservation]
    week: int = 0
    flag: int = 0
    clock_offset: float | None = None

    @property
    def available_ids(self) -> list[str]:
        return [s for s, o in self.sats.items() if o.available]


@dataclass(frozen=True)
class ObsHeader:
    version: float
    obs_types: tuple[str, ...]
    marker_name: str = ""
    receiver: tuple[str, str, str] = ("", "", "")
    approx_position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    interval: float | None = None
    extra: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class RinexObsFile:
    header: ObsHeader
    epochs: tuple[ObservationEpoch, ...]


@dataclass(frozen=True)
class NavHeader:
    version: float
    ion_alpha: tuple[float, ...] | None = None
    ion_beta: tuple[float, ...] | None = None
    delta_utc: tuple[float, ...] | None = None
    leap_seconds: int | None = None


@dataclass(frozen=True)
class RinexNavFile:
    header: NavHeader
    records: tuple[SatelliteEphemeris, ...]

    def by_satellite(self) -> dict[str, list[SatelliteEphemeris]]:
        out: dict[str, list[SatelliteEphemeris]] = {}
        for rec in self.records:
            out.setdefault(rec.sat_id, []).append(rec)
        return out


# ---------------------------------------------------------------------------
# helpers

def _text_lines(text) -> list[str]:
    if isinstance(text, (bytes, bytearray)):
        text = bytes(text).decode("ascii", errors="replace")
    elif not isinstance(text, str):
        text = text.read()
        if isinstance(text, bytes):
            text = text.decode("ascii", errors="replace")
    return text.splitlines()


def rinex_float(field_text: str) -> float:
    """Parse a RINEX float, accepting the Fortran 'D' exponent letter."""
    s = field_text.strip().replace("D", "E").replace("d", "e")
    value = float(s)
    if not math.isfinite(value):
        raise ValueError(f"non-finite value {field_text!r}")
    return value


def _int(s: str) -> int:
    s = s.strip()
    if not s or not (s.lstrip("+-").isdigit()):
        raise ValueError(f"bad integer {s!r}")
    return int(s)


def full_year(yy: int) -> int:
    if yy >= 100:
        return yy
    return 1900 + yy if yy >= 80 else 2000 + yy


def gps_time(year: int, month: int, day: int, hour: int, minute: int,
             second: float) -> tuple[int, float]:
    """(GPS week, seconds of week) for a calendar epoch already in GPS time."""
    if not (0 <= hour < 24 and 0 <= minute < 60 and 0.0 <= second < 61.0):
        raise ValueError("time of day out of range")
    days = (date(year, month, day) - GPS_EPOCH).days
    week, dow = divmod(days, 7)
    return week, dow * 86400.0 + hour * 3600.0 + minute * 60.0 + second


def calendar(week: int, sow: float) -> tuple[int, int, int, int, int, float]:
    day_index, rem = divmod(sow, 86400.0)
    d = date.fromordinal(GPS_EPOCH.toordinal() + week * 7 + int(day_index))
    hour, rem = divmod(rem, 3600.0)
    minute, second = divmod(rem, 60.0)
    return d.year, d.month, d.day, int(hour), int(minute), second


def _sat_id(token: str, default_system: str = "G") -> str:
    sys_char = token[0] if token[0] != " " else default_system
    if sys_char not in "GRESCJ":
        raise ValueError(f"bad satellite system {token!r}")
    prn = _int(token[1:3])
    if not 0 < prn < 100:
        raise ValueError(f"bad PRN {token!r}")
    return f"{sys_char}{prn:02d}"


# ---------------------------------------------------------------------------
# observation files

def _parse_version_line(line: str, expected_type: str) -> float:
    try:
        version = float(line[:9])
    except ValueError:
        raise RinexParseError("unreadable RINEX version", line=1) from None
    if not 2.0 <= version < 3.0:
        raise UnsupportedVersionError(f"RINEX version {version} not supported (2.x only)")
    ftype = line[20:21].upper()
    if ftype != expected_type:
        raise RinexParseError(f"file type {ftype!r}, expected {expected_type!r}", line=1)
    return version


def _parse_obs_header(lines: list[str]) -> tuple[ObsHeader, int]:
    if not lines or "RINEX VERSION / TYPE" not in lines[0]:
        raise RinexParseError("first line must be RINEX VERSION / TYPE", line=1)
    version = _parse_version_line(lines[0], "O")
    obs_types: list[str] = []
    n_types = None
    marker, receiver, approx, interval = "", ("", "", ""), (0.0, 0.0, 0.0), None
    extra = []
    for idx in range(1, len(lines)):
        line = lines[idx]
        lineno = idx + 1
        label = line[60:].strip()
        content = line[:60]
        try:
            if label == "END OF HEADER":
                if n_types is None:
                    raise RinexParseError("missing # / TYPES OF OBSERV", line=lineno)
                if len(obs_types) != n_types:
                    raise RinexParseError(
                        f"declared {n_types} observation types, found {len(obs_types)}",
                        line=lineno)
                hdr = ObsHeader(version, tuple(obs_types), marker, receiver, approx,
                                interval, tuple(extra))
                return hdr, idx + 1
            if label == "# / TYPES OF OBSERV":
                if n_types is None:
                    n_types = _int(content[:6])
                    if not 0 < n_types <= 30:
                        raise ValueError("observation type count out of range")
                codes = [content[6 + 6 * k:12 + 6 * k].strip() for k in range(9)]
                obs_types.extend(c for c in codes if c)
                if len(obs_types) > n_types:
                    raise ValueError("more observation types than declared")
            elif label == "APPROX POSITION XYZ":
                approx = tuple(rinex_float(content[14 * k:14 * k + 14]) for k in range(3))
            elif label == "REC # / TYPE / VERS":
                receiver = (content[:20].strip(), content[20:40].strip(), content[40:60].strip())
            elif label == "MARKER NAME":
                marker = content.strip()
            elif label == "INTERVAL":
                interval = rinex_float(content[:10])
            elif label:
                extra.append((label, content.rstrip()))
            elif line.strip():
                raise RinexParseError("header line without label", line=lineno)
        except ValueError as exc:
            raise RinexParseError(f"malformed {label}: {exc}", line=lineno) from None
    raise RinexParseError("END OF HEADER not found", line=len(lines))


def _pick(values: dict, codes: Sequence[str]):
    for code in codes:
        v = values.get(code)
        if v is not None and v[0] is not None:
            return v[0]
    return None


def _obs_value(chunk: str):
    text = chunk[:14]
    value = None
    if text.strip():
        value = rinex_float(text)
        if value == 0.0:
            value = None
    lli = chunk[14:15].strip()
    ssi = chunk[15:16].strip()
    return (value, _int(lli) if lli else None, _int(ssi) if ssi else None)


def make_sat_observation(raw: dict, codes=DEFAULT_CODES, usable: bool = True) -> SatObservation:
    pr = _pick(raw, codes["pseudorange"])
    dop = _pick(raw, codes["doppler"])
    ph = _pick(raw, codes["phase"])
    if dop is not None and abs(dop) > DOPPLER_BOUND:
        dop = None
    lo, hi = PSEUDORANGE_BOUNDS
    available = usable and pr is not None and lo <= pr <= hi
    return SatObservation(pr, dop, ph, available, raw)


def parse_obs(text, codes: Mapping[str, Sequence[str]] | None = None) -> RinexObsFile:
    """Parse a RINEX 2.x observation file (str, bytes or text stream)."""
    codes = {**DEFAULT_CODES, **(codes or {})}
    lines = _text_lines(text)
    header, idx = _parse_obs_header(lines)
    n_types = len(header.obs_types)
    lines_per_sat = (n_types + 4) // 5
    epochs: list[ObservationEpoch] = []
    last_key = None

    while idx < len(lines):
        line = lines[idx]
        lineno = idx + 1
        if not line.strip():
            idx += 1
            continue
        try:
            flag = _int(line[26:29]) if line[26:29].strip() else 0
            count = _int(line[29:32])
            if count < 0:
                raise ValueError("negative satellite count")
        except ValueError as exc:
            raise RinexParseError(f"bad epoch line: {exc}", line=lineno) from None

        if 2 <= flag <= 5:
            # event records: `count` special lines follow, ignored here
            idx += 1 + count
            if idx > len(lines):
                raise RinexParseError("truncated event record", line=lineno)
            continue
        if flag > 6:
            raise RinexParseError(f"bad epoch flag {flag}", line=lineno)

        try:
            yy = _int(line[1:3])
            week, sow = gps_time(full_year(yy), _int(line[4:6]), _int(line[7:9]),
                                 _int(line[10:12]), _int(line[13:15]), rinex_float(line[15:26]))
            clk = rinex_float(line[68:80]) if line[68:80].strip() else None
            sat_ids = []
            sat_lines = (count + 11) // 12
            for k in range(sat_lines):
                if idx + k >= len(lines):
                    raise ValueError("satellite list truncated")
                src = lines[idx + k]
                n_here = min(12, count - 12 * k)
                for j in range(n_here):
                    tok = src[32 + 3 * j:35 + 3 * j]
                    if len(tok) < 3:
                        raise ValueError("satellite list too short")
                    sat_ids.append(_sat_id(tok))
        except (ValueError, OverflowError) as exc:
            raise RinexParseError(f"bad epoch line: {exc}", line=lineno) from None
        if count == 0:
            raise RinexStructureError(f"line {lineno}: epoch without satellites")
        if len(set(sat_ids)) != len(sat_ids):
            raise RinexParseError("duplicate satellite in epoch", line=lineno)
        idx += sat_lines

        sats: dict[str, SatObservation] = {}
        for sid in sat_ids:
            if idx + lines_per_sat > len(lines):
                raise RinexParseError("file truncated inside epoch", line=len(lines), sat_id=sid)
            buf = "".join(lines[idx + k].ljust(80)[:80] for k in range(lines_per_sat))
            raw = {}
            try:
                for j, code in enumerate(header.obs_types):
                    line_k, col = divmod(j, 5)
                    start = 80 * line_k + 16 * col
                    raw[code] = _obs_value(buf[start:start + 16])
            except ValueError as exc:
                raise RinexParseError(f"bad observation: {exc}", line=idx + 1 + line_k,
                                      sat_id=sid) from None
            sats[sid] = make_sat_observation(raw, codes, usable=flag <= 1)
            idx += lines_per_sat

        if flag == 6:      # cycle-slip records, parsed for structure then dropped
            continue
        key = (week, sow)
        if last_key is not None and key <= last_key:
            raise RinexStructureError(f"line {lineno}: epoch time not increasing")
        last_key = key
        epochs.append(ObservationEpoch(sow, sats, week, flag, clk))
    return RinexObsFile(header, tuple(epochs))


def _fmt_obs_field(v) -> str:
    value, lli, ssi = v
    s = " " * 14 if value is None else f"{value:14.3f}"
    return s + (" " if lli is None else str(lli)) + (" " if ssi is None else str(ssi))


def format_obs(obs: RinexObsFile) -> str:
    """Serialise a RinexObsFile back to RINEX 2.11 text."""
    h = obs.header
    out = [f"{h.version:9.2f}{'':11s}{'O':20s}{'G':20s}RINEX VERSION / TYPE"]
    if h.marker_name:
        out.append(f"{h.marker_name:60s}MARKER NAME")
    out.append(f"{h.receiver[0]:20s}{h.receiver[1]:20s}{h.receiver[2]:20s}REC # / TYPE / VERS")
    out.append("".join(f"{v:14.4f}" for v in h.approx_position).ljust(60) + "APPROX POSITION XYZ")
    types = list(h.obs_types)
    for k in range(0, max(len(types), 1), 9):
        chunk = "".join(f"{c:>6s}" for c in types[k:k + 9])
        lead = f"{len(types):6d}" if k == 0 else " " * 6
        out.append((lead + chunk).ljust(60) + "# / TYPES OF OBSERV")
    if h.interval is not None:
        out.append(f"{h.interval:10.3f}".ljust(60) + "INTERVAL")
    for label, content in h.extra:
        out.append(content.ljust(60)[:60] + label)
    out.append(" " * 60 + "END OF HEADER")

    for ep in obs.epochs:
        y, mo, d, hh, mi, ss = calendar(ep.week, ep.t)
        ids = list(ep.sats)
        head = f" {y % 100:02d} {mo:2d} {d:2d} {hh:2d} {mi:2d}{ss:11.7f}  {ep.flag:1d}{len(ids):3d}"
        for k in range(0, len(ids), 12):
            sats = "".join(f"{s[0]}{int(s[1:]):2d}" for s in ids[k:k + 12])
            if k == 0:
                line = head + sats
                if ep.clock_offset is not None:
                    line = line.ljust(68) + f"{ep.clock_offset:12.9f}"
                out.append(line)
            else:
                out.append(" " * 32 + sats)
        for sid in ids:
            raw = ep.sats[sid].raw
            fields = [_fmt_obs_field(raw.get(c, (None, None, None))) for c in types]
            for k in range(0, len(fields), 5):
                out.append("".join(fields[k:k + 5]).rstrip())
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# navigation files

NAV_LAYOUT = (
    ("af0", "af1", "af2"),
    ("iode", "crs", "delta_n", "m0"),
    ("cuc", "e", "cus", "sqrt_a"),
    ("toe", "cic", "omega0", "cis"),
    ("i0", "crc", "omega", "omega_dot"),
    ("idot", "l2_codes", "week", "l2p_flag"),
    ("sv_accuracy", "health", "tgd", "iodc"),
    ("transmission_time", "fit_interval"),
)


def _nav_fields(line: str, start: int, n: int) -> list[float]:
    vals = []
    for k in range(n):
        chunk = line[start + 19 * k:start + 19 * (k + 1)]
        vals.append(rinex_float(chunk) if chunk.strip() else 0.0)
    return vals


def parse_nav(text) -> RinexNavFile:
    """Parse a RINEX 2.x GPS navigation message file."""
    lines = _text_lines(text)
    if not lines or "RINEX VERSION / TYPE" not in lines[0]:
        raise RinexParseError("first line must be RINEX VERSION / TYPE", line=1)
    version = _parse_version_line(lines[0], "N")
    hdr = {}
    idx = 1
    while True:
        if idx >= len(lines):
            raise RinexParseError("END OF HEADER not found", line=len(lines))
        line = lines[idx]
        label = line[60:].strip()
        idx += 1
        try:
            if label == "END OF HEADER":
                break
            if label in ("ION ALPHA", "ION BETA"):
                hdr[label] = tuple(rinex_float(line[2 + 12 * k:14 + 12 * k]) for k in range(4))
            elif label == "DELTA-UTC: A0,A1,T,W":
                hdr[label] = (rinex_float(line[3:22]), rinex_float(line[22:41]),
                              float(_int(line[41:50])), float(_int(line[50:59])))
            elif label == "LEAP SECONDS":
                hdr[label] = _int(line[:6])
        except ValueError as exc:
            raise RinexParseError(f"malformed {label}: {exc}", line=idx) from None
    header = NavHeader(version, hdr.get("ION ALPHA"), hdr.get("ION BETA"),
                       hdr.get("DELTA-UTC: A0,A1,T,W"), hdr.get("LEAP SECONDS"))

    records = []
    while idx < len(lines):
        if not lines[idx].strip():
            idx += 1
            continue
        first = lines[idx]
        lineno = idx + 1
        sat_id = None
        try:
            prn = _int(first[0:2])
            sat_id = f"G{prn:02d}"
            if not 1 <= prn <= 32:
                raise ValueError(f"PRN {prn} outside 1-32")
            week_toc, toc = gps_time(full_year(_int(first[3:5])), _int(first[6:8]),
                                     _int(first[9:11]), _int(first[12:14]), _int(first[15:17]),
                                     rinex_float(first[17:22]))
            values = dict(zip(NAV_LAYOUT[0], _nav_fields(first, 22, 3)))
            for k in range(1, 8):
                if idx + k >= len(lines):
                    raise RinexParseError(f"record truncated after {k} lines",
                                          line=idx + k, sat_id=sat_id)
                names = NAV_LAYOUT[k]
                values.update(zip(names, _nav_fields(lines[idx + k], 3, len(names))))
        except ValueError as exc:
            raise RinexParseError(f"bad navigation record: {exc}", line=lineno,
                                  sat_id=sat_id) from None
        if not (values["sqrt_a"] > 0 and 0.0 <= values["e"] < 1.0
                and 0.0 <= values["toe"] < SECONDS_PER_WEEK):
            raise RinexParseError("implausible orbital elements", line=lineno, sat_id=sat_id)
        records.append(SatelliteEphemeris(
            sat_id=sat_id, sqrt_a=values["sqrt_a"], e=values["e"], i0=values["i0"],
            omega0=values["omega0"], omega=values["omega"], m0=values["m0"],
            delta_n=values["delta_n"], omega_dot=values["omega_dot"], toe=values["toe"],
            af0=values["af0"], af1=values["af1"], af2=values["af2"], toc=toc,
            idot=values["idot"], cuc=values["cuc"], cus=values["cus"], crc=values["crc"],
            crs=values["crs"], cic=values["cic"], cis=values["cis"],
            week=int(values["week"]) if values["week"] else week_toc,
            iode=values["iode"], health=values["health"],
        ))
        idx += 8
    return RinexNavFile(header, tuple(records))


# ---------------------------------------------------------------------------
# time-series output

def _sig(v, digits: int = 6):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if not math.isfinite(v):
            return None
        return float(f"{v:.{digits}g}")
    if v is None:
        return None
    return str(v)


def _is_timestamped(values) -> bool:
    return len(values) > 0 and all(
        isinstance(p, (tuple, list)) and len(p) == 2 for p in values)


def _records(series: Mapping[str, Sequence], digits: int):
    names = list(series)
    if any(_is_timestamped(series[n]) for n in names):
        if not all(_is_timestamped(series[n]) or len(series[n]) == 0 for n in names):
            raise SeriesError("mix of timestamped and plain series")
        cols = ["series", "t", "value"]
        rows = [[n, _sig(t, digits), _sig(v, digits)] for n in names for t, v in series[n]]
        return cols, rows
    lengths = {len(series[n]) for n in names}
    if len(lengths) > 1:
        raise SeriesError(f"series lengths differ ({sorted(lengths)}) and carry no timestamps")
    n_rows = lengths.pop() if lengths else 0
    rows = [[_sig(series[n][i], digits) for n in names] for i in range(n_rows)]
    return names, rows


def write_series(series: Mapping[str, Sequence], fmt: str = "csv", digits: int = 6) -> bytes:
    """Serialise named series to CSV (header + rows) or JSON (array of records).

    Series sharing one time axis become columns of a wide table. Series made
    of (t, value) pairs are written in long form: series, t, value.
    Numbers are rounded to `digits` significant digits; NaN becomes empty
    (CSV) or null (JSON).
    """
    cols, rows = _records(series, digits)
    if fmt == "json":
        recs = [dict(zip(cols, r)) for r in rows]
        return (json.dumps(recs, separators=(",", ":"), allow_nan=False) + "\n").encode()
    if fmt != "csv":
        raise SeriesError(f"unknown format {fmt!r}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in r])
    return buf.getvalue().encode()


def read_series(data: bytes, fmt: str = "csv") -> dict[str, list]:
    """Inverse of write_series for wide tables; numbers come back as float."""
    text = data.decode()
    if fmt == "json":
        recs = json.loads(text)
        if not recs:
            return {}
        return {k: [r[k] for r in recs] for k in recs[0]}
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        return {}
    cols = rows[0]
    out: dict[str, list] = {c: [] for c in cols}
    for r in rows[1:]:
        for c, v in zip(cols, r):
            out[c].append(_coerce(v))
    return out


def _coerce(v: str):
    if v == "":
        return None
    try:
        return float(v)
    except ValueError:
        return v


def epochs_to_table(epochs: Iterable[ObservationEpoch]) -> dict[str, list]:
    """Flatten epochs into timestamped per-satellite series for write_series."""
    out: dict[str, list] = {}
    for ep in epochs:
        for sid, o in ep.sats.items():
            out.setdefault(f"{sid}.pseudorange", []).append((ep.t, o.pseudorange))
            out.setdefault(f"{sid}.doppler", []).append((ep.t, o.doppler))
    return out
