import io
import json
import math

import pytest
from hypothesis import given, settings, strategies as st

from gnssguard.errors import (RinexParseError, RinexStructureError, SeriesError,
                              UnsupportedVersionError)
from gnssguard.rinex_io import (ObservationEpoch, SatObservation, calendar, epochs_to_table,
                                format_obs, full_year, gps_time, parse_nav, parse_obs,
                                read_series, rinex_float, write_series)


def test_rinex_float_d_exponent():
    assert rinex_float(".1234D+05") == 12340.0
    assert rinex_float("-.839701388031D-03") == pytest.approx(-8.39701388031e-4)
    assert rinex_float("  1.5E2 ") == 150.0
    with pytest.raises(ValueError):
        rinex_float("1D999")


def test_two_digit_years():
    assert full_year(99) == 1999
    assert full_year(80) == 1980
    assert full_year(5) == 2005
    assert full_year(79) == 2079


def test_gps_time_epoch_and_calendar_roundtrip():
    assert gps_time(1980, 1, 6, 0, 0, 0.0) == (0, 0.0)
    week, sow = gps_time(2005, 3, 24, 13, 10, 36.0)
    assert (week, sow) == (1315, 393036.0)
    assert calendar(week, sow) == (2005, 3, 24, 13, 10, 36.0)


def test_minimal_obs_values(minimal_obs_text):
    obs = parse_obs(minimal_obs_text)
    assert obs.header.version == 2.11
    assert obs.header.obs_types == ("C1", "L1", "D1", "S1")
    assert obs.header.marker_name == "DEMO"
    assert len(obs.epochs) == 1
    ep = obs.epochs[0]
    assert (ep.week, ep.t) == (1315, 393036.0)
    assert list(ep.sats) == ["G12", "G09", "G06", "G05"]
    g12 = ep.sats["G12"]
    assert g12.pseudorange == 23619095.450
    assert g12.doppler == -1463.796
    assert g12.raw["L1"] == (-53875.632, 8, None)
    assert g12.available


def test_blank_observation_is_missing(minimal_obs_text):
    g05 = parse_obs(minimal_obs_text).epochs[0].sats["G05"]
    assert g05.phase is None
    assert g05.raw["S1"] == (None, None, None)
    assert g05.doppler == 1234.5


def test_accepts_bytes_and_streams(minimal_obs_text):
    a = parse_obs(minimal_obs_text)
    b = parse_obs(minimal_obs_text.encode())
    c = parse_obs(io.StringIO(minimal_obs_text))
    assert a == b == c


def test_format_roundtrip(minimal_obs_text):
    obs = parse_obs(minimal_obs_text)
    again = parse_obs(format_obs(obs))
    assert again == obs


def test_truncated_epoch_reports_line_and_satellite(minimal_obs_text):
    text = "\n".join(minimal_obs_text.splitlines()[:-2])
    with pytest.raises(RinexParseError) as err:
        parse_obs(text)
    assert err.value.line is not None
    assert err.value.sat_id == "G06"
    assert "line" in str(err.value)


def test_unsupported_version(minimal_obs_text):
    text = minimal_obs_text.replace("     2.11", "     3.04", 1)
    with pytest.raises(UnsupportedVersionError):
        parse_obs(text)


def _two_epochs(text, second_time):
    lines = text.splitlines()
    body = lines[7:]
    body2 = [body[0].replace("13 10 36.0000000", second_time)] + body[1:]
    return "\n".join(lines[:7] + body + body2)


def test_non_increasing_epochs_rejected(minimal_obs_text):
    with pytest.raises(RinexStructureError):
        parse_obs(_two_epochs(minimal_obs_text, "13 10 35.0000000"))
    assert len(parse_obs(_two_epochs(minimal_obs_text, "13 10 37.0000000")).epochs) == 2


def test_event_flag_records_skipped(minimal_obs_text):
    lines = minimal_obs_text.splitlines()
    event = [" 05  3 24 13 10 37.0000000  4  1", "EVENT COMMENT".ljust(60) + "COMMENT"]
    ep = parse_obs("\n".join(lines + event))
    assert len(ep.epochs) == 1


def test_implausible_pseudorange_not_available(minimal_obs_text):
    text = minimal_obs_text.replace("23619095.450", "  619095.450")
    sat = parse_obs(text).epochs[0].sats["G12"]
    assert sat.pseudorange == 619095.45
    assert not sat.available


def test_nav_record(sample_nav_text):
    nav = parse_nav(sample_nav_text)
    assert nav.header.leap_seconds == 13
    assert len(nav.records) == 1
    r = nav.records[0]
    assert r.sat_id == "G06"
    assert r.toe == 409904.0 and r.toc == 409904.0
    assert r.week == 1025
    assert r.sqrt_a == pytest.approx(5153.65489006)
    assert r.e == pytest.approx(0.00626740418375)
    assert r.af0 == pytest.approx(-8.39701388031e-4)


def test_nav_truncated_record(sample_nav_text):
    text = "\n".join(sample_nav_text.splitlines()[:-3])
    with pytest.raises(RinexParseError) as err:
        parse_nav(text)
    assert err.value.sat_id == "G06"


def test_nav_bad_prn(sample_nav_text):
    text = sample_nav_text.replace(" 6 99  9  2", "33 99  9  2")
    with pytest.raises(RinexParseError):
        parse_nav(text)


def test_write_series_csv_and_json():
    s = {"t": [0.0, 1.0], "x": [1.5, float("nan")]}
    csv_text = write_series(s, "csv").decode()
    assert csv_text.splitlines() == ["t,x", "0.0,1.5", "1.0,"]
    recs = json.loads(write_series(s, "json"))
    assert recs == [{"t": 0.0, "x": 1.5}, {"t": 1.0, "x": None}]


def test_write_series_length_mismatch():
    with pytest.raises(SeriesError):
        write_series({"a": [1, 2], "b": [1]})


def test_timestamped_series_long_form(minimal_obs_text):
    table = epochs_to_table(parse_obs(minimal_obs_text).epochs)
    text = write_series(table, "csv").decode().splitlines()
    assert text[0] == "series,t,value"
    assert "G12.doppler,393036.0,-1463.8" in text


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1e9, 1e9, allow_nan=False), min_size=1, max_size=30))
def test_series_roundtrip(values):
    s = {"t": list(range(len(values))), "v": values}
    back = read_series(write_series(s, "csv", digits=15))
    assert back["v"] == pytest.approx(values, rel=1e-14, abs=1e-300)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(1.9e7, 2.9e7), st.floats(-4999, 4999)), min_size=1, max_size=14))
def test_obs_format_parse_roundtrip(obs_values):
    sats = {}
    for k, (pr, d) in enumerate(obs_values):
        pr, d = round(pr, 3), round(d, 3)
        raw = {"C1": (pr, None, None), "D1": (d if d != 0 else None, None, None)}
        sats[f"G{k + 1:02d}"] = SatObservation(pr, raw["D1"][0], None, True, raw)
    from gnssguard.rinex_io import ObsHeader, RinexObsFile
    obs = RinexObsFile(ObsHeader(2.11, ("C1", "D1")), (ObservationEpoch(345600.0, sats, 1500),))
    again = parse_obs(format_obs(obs))
    ep = again.epochs[0]
    for sid, o in sats.items():
        assert ep.sats[sid].pseudorange == pytest.approx(o.pseudorange, abs=1e-6)
        if o.doppler is not None:
            assert ep.sats[sid].doppler == pytest.approx(o.doppler, abs=1e-6)


def test_header_only_files_are_empty(minimal_obs_text, sample_nav_text):
    obs_header = "\n".join(minimal_obs_text.splitlines()[:7])
    assert parse_obs(obs_header).epochs == ()
    nav_header = "\n".join(sample_nav_text.splitlines()[:8])
    assert parse_nav(nav_header).records == ()


def test_nav_epoch_year_99(sample_nav_text):
    rec = parse_nav(sample_nav_text).records[0]
    assert calendar(rec.week, rec.toc)[:3] == (1999, 9, 2)


def test_write_series_empty_and_json_precision():
    assert write_series({"t": [], "loc_err": []}).decode() == "t,loc_err\n"
    s = {"t": [0, 1], "loc_err": [0.0, 2.5]}
    assert write_series(s).decode().splitlines() == ["t,loc_err", "0,0.0", "1,2.5"]
    back = json.loads(write_series({"t": [0.0], "x": [math.pi * 1e5]}, "json"))
    assert back[0]["x"] == pytest.approx(math.pi * 1e5, rel=5e-6)
