import json

import pytest

from logzyg.config import ConfigError, ExperimentConfig, config_from_mapping, load_config


def test_defaults_are_admissible():
    cfg = ExperimentConfig()
    assert cfg.theta == 0.25 and cfg.beta == "auto"
    cfg.coefficient_spec.validate()


@pytest.mark.parametrize("theta", [0.0, 0.3, 0.6, -1.0])
def test_theta_outside_range_rejected(theta):
    with pytest.raises(ConfigError, match="theta"):
        ExperimentConfig(theta=theta)


def test_theta_range_follows_omega():
    ExperimentConfig(theta=0.45, omega=2.0)
    with pytest.raises(ConfigError):
        ExperimentConfig(theta=0.45, omega=0.5)


@pytest.mark.parametrize("beta", [0.0, -2.0, "fast"])
def test_bad_beta(beta):
    with pytest.raises(ConfigError):
        ExperimentConfig(beta=beta)


def test_unknown_and_duplicate_keys():
    with pytest.raises(ConfigError, match="bogus"):
        config_from_mapping({"bogus": 1})
    with pytest.raises(ConfigError, match="twice"):
        config_from_mapping({"a": {"n": 128}, "b": {"n": 256}})


def test_toml_and_json_agree(tmp_path):
    (tmp_path / "c.toml").write_text(
        "[coeff]\namp_t = 0.05\nJ = 8\n[run]\nn = 256\ntheorem_ns = [128, 256]\nbeta = 2.0\n")
    (tmp_path / "c.json").write_text(json.dumps(
        {"amp_t": 0.05, "J": 8, "n": 256, "theorem_ns": [128, 256], "beta": 2.0}))
    a = load_config(tmp_path / "c.toml")
    b = load_config(tmp_path / "c.json")
    assert a == b
    assert a.theorem_ns == (128, 256) and a.J == 8


def test_unparseable_file(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("n = = 3")
    with pytest.raises(ConfigError):
        load_config(p)


def test_depth_caps_follow_grid():
    cfg = ExperimentConfig()
    assert cfg.solver_spec(256).J == 6
    assert cfg.solver_spec(1 << 20).J == cfg.J
    assert cfg.lower_order(64).J == 4
    assert cfg.lower_order().J == cfg.J_b


def test_round_trip():
    cfg = ExperimentConfig(seed=3, theorem_ns=(128,))
    assert config_from_mapping(cfg.to_dict()) == cfg
