import pytest

from gnssguard.config import (ScenarioConfig, apply_overrides, dump_config, from_dict, load_config,
                              parse_override, set_path)
from gnssguard.errors import ConfigError


def test_defaults_are_valid():
    cfg = ScenarioConfig().validate()
    assert cfg.duration == 300.0 and cfg.step == 1.0


def test_unknown_key_names_the_path():
    with pytest.raises(ConfigError, match="attack.jam_lenght"):
        from_dict({"attack": {"jam_lenght": 5}})


def test_wrong_type_names_the_path():
    with pytest.raises(ConfigError, match="receiver.sigma_pr"):
        from_dict({"receiver": {"sigma_pr": "loud"}})


@pytest.mark.parametrize("data", [
    {"step": 0},
    {"duration": 0.5},
    {"duration": 10.5},
    {"trajectory": {"kind": "zigzag"}},
    {"trajectory": {"kind": "polyline", "waypoints": [[0, 0, 0]]}},
    {"constellation": {"source": "rinex"}},
    {"constellation": {"n_sats": 3}},
    {"attack": {"enabled": True, "jam_start": 10, "jam_duration": 5, "spoof_onset": 12}},
    {"attack": {"enabled": True, "jam_start": None}},
    {"attack": {"enabled": True, "adversary_class": 4}},
])
def test_inconsistent_configs_rejected(data):
    with pytest.raises(ConfigError):
        from_dict(data)


def test_jam_only_needs_no_onset():
    cfg = from_dict({"attack": {"enabled": True, "jam_start": None, "spoof": False}})
    assert cfg.attack.spoof_onset is None


def test_yaml_roundtrip(tmp_path):
    cfg = apply_overrides(ScenarioConfig(), {"attack.enabled": True, "attack.affected_sats": ["G01"]})
    p = tmp_path / "c.yaml"
    p.write_text(dump_config(cfg))
    again = load_config(p)
    assert again == cfg
    assert again.digest() == cfg.digest()


def test_empty_file_gives_defaults(tmp_path):
    p = tmp_path / "empty.yaml"
    p.write_text("")
    assert load_config(p) == ScenarioConfig()


def test_bad_yaml(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("duration: [1, 2\n")
    with pytest.raises(ConfigError):
        load_config(p)
    p.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(p)


def test_missing_file_is_os_error(tmp_path):
    with pytest.raises(OSError):
        load_config(tmp_path / "nope.yaml")


def test_overrides_are_validated_together():
    cfg = apply_overrides(ScenarioConfig(), ["attack.enabled=true", "attack.jam_start=null",
                                             "attack.spoof_onset=30"])
    assert cfg.attack.jam_start is None and cfg.attack.spoof_onset == 30.0


def test_override_unknown_path():
    with pytest.raises(ConfigError, match="attack.nothing"):
        set_path(ScenarioConfig(), "attack.nothing", 1)
    with pytest.raises(ConfigError):
        set_path(ScenarioConfig(), "attack", 1)


def test_parse_override():
    assert parse_override("detectors.dst_min_band=25") == ("detectors.dst_min_band", 25)
    assert parse_override("output.format = json") == ("output.format", "json")
    with pytest.raises(ConfigError):
        parse_override("no-equals")


def test_digest_tracks_content():
    a = ScenarioConfig()
    assert a.digest() == ScenarioConfig().digest()
    assert a.digest() != set_path(a, "seed", 1).digest()
