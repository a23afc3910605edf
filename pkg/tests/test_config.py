"""Engine config parsing, canonical serialization, and the config hash."""

from __future__ import annotations

import json

import pytest

from perceptrl.config import EngineConfig, canonical_dumps, load_engine_config
from perceptrl.rewards import ConfigError


def test_canonical_dumps_sorts_and_tightens():
    assert canonical_dumps({"b": 1, "a": [1, 2]}) == '{"a":[1,2],"b":1}'


def test_canonical_dumps_keeps_unicode_raw():
    assert canonical_dumps({"k": "π"}) == '{"k":"π"}'


def test_canonical_dumps_rejects_nan():
    with pytest.raises(ValueError):
        canonical_dumps({"x": float("nan")})


def test_empty_config_is_all_defaults():
    cfg = EngineConfig.from_dict({})
    assert cfg == EngineConfig()
    assert cfg.reward.weights.as_tuple() == (1.0,) * 6
    assert cfg.max_batch == 1024


def test_round_trip_through_to_dict():
    cfg = EngineConfig.from_dict(
        {
            "weights": {"acc": 2.0},
            "thresholds": {"tau_lo": 0.3, "tau_hi": 0.9},
            "ngram_order": 4,
            "repetition_scope": "full",
            "lexicon": ["right angle"],
            "max_batch": 64,
        }
    )
    again = EngineConfig.from_dict(cfg.to_dict())
    assert again == cfg
    assert again.config_hash() == cfg.config_hash()


def test_hash_is_stable_across_key_order_and_defaults():
    # explicitly writing a default must not change the hash
    a = EngineConfig.from_dict({"ngram_order": 3})
    b = EngineConfig.from_dict({})
    assert a.config_hash() == b.config_hash()

    c = EngineConfig.from_dict({"weights": {"acc": 1.5}, "max_batch": 10})
    d = EngineConfig.from_dict({"max_batch": 10, "weights": {"acc": 1.5}})
    assert c.config_hash() == d.config_hash()


def test_hash_changes_with_any_field():
    base = EngineConfig.from_dict({}).config_hash()
    assert EngineConfig.from_dict({"weights": {"acc": 0.0}}).config_hash() != base
    assert EngineConfig.from_dict({"max_batch": 2}).config_hash() != base
    assert EngineConfig.from_dict({"lexicon": ["x y"]}).config_hash() != base


def test_unknown_keys_are_rejected():
    with pytest.raises(ConfigError):
        EngineConfig.from_dict({"weeights": {}})
    with pytest.raises(ConfigError):
        EngineConfig.from_dict({"schedule": {"begin": {}}})


def test_non_object_config_is_rejected():
    with pytest.raises(ConfigError):
        EngineConfig.from_dict([1, 2, 3])


def test_schedule_keys_parse():
    cfg = EngineConfig.from_dict(
        {"schedule": {"start": {"acc": 0.1}, "warmup_fraction": 0.25}}
    )
    assert cfg.reward.schedule.start.acc == 0.1
    assert cfg.reward.schedule.warmup_fraction == 0.25
    # untouched endpoint keeps its default
    assert cfg.reward.schedule.end.acc == 1.0


def test_bad_values_surface_as_config_errors():
    with pytest.raises(ConfigError):
        EngineConfig.from_dict({"weights": {"acc": -1}})
    with pytest.raises(ConfigError):
        EngineConfig.from_dict({"thresholds": {"tau_lo": 0.9, "tau_hi": 0.1}})
    with pytest.raises(ConfigError):
        EngineConfig.from_dict({"repetition_scope": "sideways"})
    with pytest.raises(ConfigError):
        EngineConfig.from_dict({"lexicon": "not a list"})
    with pytest.raises(ConfigError):
        EngineConfig.from_dict({"max_batch": 0})


def test_lexicon_deduplicates_after_normalization():
    cfg = EngineConfig.from_dict({"lexicon": ["Right Angle", "right  angle", "arc"]})
    assert cfg.reward.lexicon == ("right angle", "arc")


def test_load_engine_config_none_is_defaults():
    assert load_engine_config(None) == EngineConfig()


def test_load_engine_config_reads_file(tmp_path):
    path = tmp_path / "engine.json"
    path.write_text(json.dumps({"max_batch": 7}), encoding="utf-8")
    assert load_engine_config(str(path)).max_batch == 7


def test_load_engine_config_bad_json(tmp_path):
    path = tmp_path / "engine.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_engine_config(str(path))


def test_load_engine_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_engine_config(str(tmp_path / "absent.json"))


def test_lexicon_file_merges_relative_to_config(tmp_path):
    (tmp_path / "phrases.txt").write_text(
        "# comment\nRight Angle\n\nhypotenuse\n", encoding="utf-8"
    )
    path = tmp_path / "engine.json"
    path.write_text(
        json.dumps({"lexicon": ["arc"], "lexicon_file": "phrases.txt"}),
        encoding="utf-8",
    )
    cfg = load_engine_config(str(path))
    assert cfg.reward.lexicon == ("arc", "right angle", "hypotenuse")
    # the resolved config carries phrases, not the path
    assert "lexicon_file" not in cfg.to_dict()


def test_lexicon_file_missing_is_a_config_error(tmp_path):
    path = tmp_path / "engine.json"
    path.write_text(json.dumps({"lexicon_file": "nope.txt"}), encoding="utf-8")
    with pytest.raises(ConfigError):
        load_engine_config(str(path))


def test_lexicon_file_must_be_a_string():
    with pytest.raises(ConfigError):
        EngineConfig.from_dict({"lexicon_file": 3})
