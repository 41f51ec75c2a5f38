import json

import pytest

from nsdp.config import ConfigError, ExperimentConfig


def test_json_round_trip(tmp_path):
    cfg = ExperimentConfig(test=3, n=21, controls=[0.0, 1.0], m_sweep=[2, 3])
    p = tmp_path / "c.json"
    p.write_text(cfg.to_json())
    assert ExperimentConfig.from_json(p) == cfg


def test_unknown_keys_are_rejected():
    with pytest.raises(ConfigError, match="unknown config keys: bogus"):
        ExperimentConfig.from_dict({"test": 1, "bogus": 3})


def test_invalid_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json(p)
    p.write_text(json.dumps([1, 2]))
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json(p)


def test_resolved_defaults():
    cfg = ExperimentConfig(test=2).resolved()
    assert (cfg.n, cfg.dt, cfg.n_t) == (41, 0.1, 10)
    assert cfg.controls == [0.0, 0.5, 1.0]
    assert cfg.eps_T == pytest.approx(0.01)
    assert ExperimentConfig(test=1).resolved().n_t == 400
    assert ExperimentConfig(test=3, eps_T=0.0).resolved().eps_T == 0.0


def test_override_skips_none():
    cfg = ExperimentConfig(test=3, n=21).override(n=None, dt=0.05)
    assert cfg.n == 21 and cfg.dt == 0.05


@pytest.mark.parametrize("kw", [
    {"test": 7}, {"n": 1}, {"dt": -0.1}, {"tol": 2.0}, {"controls": [1.0, 0.0]},
    {"dt": 0.1, "T": 0.25}, {"dt": 0.1, "offline_dt": 0.15}, {"m_sweep": [0]}, {"eps_T": -1.0},
])
def test_validation(kw):
    with pytest.raises(ConfigError):
        ExperimentConfig(**kw).validate()
