import pytest

from dpcrowd.config import (
    ConfigError,
    ExperimentConfig,
    SEED_ENV_VAR,
    apply_override,
    config_from_mapping,
    config_to_flat,
    load_config,
    parse_config_text,
)


def test_parse_flat_keys_and_comments():
    text = """
    # comment line
    algorithm = fast
    epsilon = 0.5   # trailing comment
    net.m = 10
    """
    raw = parse_config_text(text)
    assert raw == {"algorithm": "fast", "epsilon": "0.5", "net.m": "10"}


def test_later_keys_win():
    raw = parse_config_text("epsilon = 1\nepsilon = 2\n")
    assert raw["epsilon"] == "2"


def test_missing_equals_rejected():
    with pytest.raises(ConfigError, match="line 1"):
        parse_config_text("epsilon 0.5")


def test_mapping_builds_nested_sections():
    cfg = config_from_mapping({"algorithm": "fast", "net.m": "12", "net.rho": "0.5",
                               "model.q": "100", "pid.theta": "3.0"})
    assert cfg.net.m == 12
    assert cfg.net.rho == 0.5
    assert cfg.model.q == (100.0,)
    assert cfg.pid.theta == 3.0


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown config section"):
        config_from_mapping({"algorithm": "fast", "nett.m": "3"})
    with pytest.raises(ConfigError, match="unknown config key"):
        config_from_mapping({"bogus": "1"})


def test_unknown_algorithm_rejected():
    with pytest.raises(ConfigError, match="unknown algorithm"):
        config_from_mapping({"algorithm": "sgd"})


def test_w_required_for_windowed_modes():
    with pytest.raises(ConfigError, match="w >= 1"):
        config_from_mapping({"algorithm": "dpcrowd_plus", "w": "0"})


def test_dpcrowd_requires_one_dimension():
    with pytest.raises(ConfigError, match="one-dimensional"):
        config_from_mapping({"algorithm": "dpcrowd", "model.d": "3"})


def test_vector_q_parses():
    cfg = config_from_mapping({"algorithm": "dpcrowd_plus", "w": "4",
                               "model.d": "3", "model.q": "1, 2, 3"})
    assert cfg.model.q == (1.0, 2.0, 3.0)


def test_q_length_must_match_d():
    with pytest.raises(ConfigError, match="model.q"):
        config_from_mapping({"algorithm": "dpcrowd_plus", "w": "4",
                             "model.d": "3", "model.q": "1, 2"})


def test_defaults_validate():
    cfg = ExperimentConfig()
    cfg.validate()


def test_load_config_env_seed_override(tmp_path, monkeypatch):
    p = tmp_path / "c.cfg"
    p.write_text("algorithm = fast\nseed = 3\n")
    monkeypatch.setenv(SEED_ENV_VAR, "99")
    assert load_config(p).seed == 99
    monkeypatch.delenv(SEED_ENV_VAR)
    assert load_config(p).seed == 3


def test_env_seed_must_be_integer(tmp_path, monkeypatch):
    p = tmp_path / "c.cfg"
    p.write_text("algorithm = fast\n")
    monkeypatch.setenv(SEED_ENV_VAR, "not-a-number")
    with pytest.raises(ConfigError):
        load_config(p)


def test_flat_round_trip():
    cfg = config_from_mapping({"algorithm": "dpcrowd_w", "w": "16", "epsilon": "0.3",
                               "model.d": "2", "model.q": "5,6", "net.dynamic": "true"})
    flat = {k: str(v) for k, v in config_to_flat(cfg).items() if v is not None}
    again = config_from_mapping(flat)
    assert again == cfg


def test_apply_override_returns_validated_copy():
    cfg = ExperimentConfig()
    swept = apply_override(cfg, "epsilon", "0.25")
    assert swept.epsilon == 0.25
    assert cfg.epsilon == 1.0
    with pytest.raises(ConfigError):
        apply_override(cfg, "epsilon", "-1")


def test_apply_override_nested_key():
    swept = apply_override(ExperimentConfig(), "net.rho", "0.9")
    assert swept.net.rho == 0.9
