import json

import pytest

from sgbot import SchemaError
from sgbot.config import AppConfig, load_config


def test_defaults_without_file():
    cfg = load_config(None, environ={})
    assert cfg.icp.n == 5
    assert cfg.icp.max_iters == 50
    assert cfg.icp.tol == 1e-6
    assert cfg.icp.trim_fraction == 0.9
    assert cfg.planner.sigma == 0.01
    assert cfg.grounding.eps_z == 0.01
    assert cfg.grounding.delta_close_factor == 1.25
    assert cfg.grounding.footprint_overlap == 0.5


def test_toml_file(tmp_path):
    path = tmp_path / "cfg.toml"
    path.write_text(
        """
[grounding]
eps_z = 0.02

[icp]
n = 3
max_iters = 20
tol = 1e-5
trim_fraction = 0.8

[planner]
sigma = 0.02

[server]
addr = "0.0.0.0:9000"
"""
    )
    cfg = load_config(path, environ={})
    assert cfg.grounding.eps_z == 0.02
    assert cfg.icp.n == 3
    assert cfg.planner.sigma == 0.02
    assert cfg.planner.icp.n == 3  # planner carries the icp section
    assert cfg.server_addr == "0.0.0.0:9000"


def test_json_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"icp": {"n": 2}, "planner": {"sigma": 0.005}}))
    cfg = load_config(path, environ={})
    assert cfg.icp.n == 2
    assert cfg.planner.sigma == 0.005


def test_env_overrides(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"icp": {"n": 2}}))
    env = {
        "SGBOT_ICP_N": "7",
        "SGBOT_PLANNER_SIGMA": "0.03",
        "SGBOT_GROUNDING_EPS_Z": "0.015",
        "SGBOT_SERVER_ADDR": "127.0.0.1:9999",
        "SGBOT_PLANNER_REMOVE_OBSTACLES": "false",
        "UNRELATED": "x",
    }
    cfg = load_config(path, environ=env)
    assert cfg.icp.n == 7
    assert cfg.planner.sigma == 0.03
    assert cfg.grounding.eps_z == 0.015
    assert cfg.server_addr == "127.0.0.1:9999"
    assert cfg.planner.remove_obstacles is False


def test_unknown_key_rejected(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"icp": {"segments": 3}}))
    with pytest.raises(SchemaError, match="segments"):
        load_config(path, environ={})


def test_unknown_section_rejected(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"robot": {}}))
    with pytest.raises(SchemaError, match="robot"):
        load_config(path, environ={})
