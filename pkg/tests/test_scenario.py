import json
import math
import os

import numpy as np
import pytest

from constants import DEFAULT_N_SERVERS, DEFAULT_N_USERS, SCHEMA_VERSION
from edge_core import scenario
from edge_core.errors import InvalidScenarioError, SchemaError
from edge_core.model import Scenario
from edge_core.resources import equal_split
from edge_core.dashf import greedy_association


def test_default_config_has_ten_users_and_two_servers():
    cfg = scenario.ScenarioConfig()
    scn = scenario.generate(cfg)
    assert (scn.N, scn.M) == (DEFAULT_N_USERS, DEFAULT_N_SERVERS) == (10, 2)
    assert scn.seed == cfg.seed


def test_same_seed_same_scenario_and_different_seed_differs():
    a = scenario.generate(scenario.ScenarioConfig(seed=11))
    b = scenario.generate(scenario.ScenarioConfig(seed=11))
    c = scenario.generate(scenario.ScenarioConfig(seed=12))
    assert np.array_equal(a.g, b.g)
    assert scenario.scenario_hash(a) == scenario.scenario_hash(b)
    assert scenario.scenario_hash(a) != scenario.scenario_hash(c)


def test_generated_scenario_respects_ranges(default_scenario):
    scn = default_scenario
    lo, hi = scenario.ScenarioConfig().adapter_params
    assert np.all((scn.d >= lo) & (scn.d <= hi))
    for u in scn.users:
        assert 0 <= u.position[0] <= 1000 and 0 <= u.position[1] <= 1000
    assert np.all(scn.g > 0)
    assert scn.sigma2 == pytest.approx(scenario.noise_psd_w_per_hz(-134.0))


def test_channel_helpers():
    assert scenario.path_loss_db(1.0) == pytest.approx(128.1)
    assert scenario.path_loss_db(0.1) == pytest.approx(128.1 - 37.6)
    with pytest.raises(ValueError):
        scenario.path_loss_db(0.0)
    assert scenario.noise_psd_w_per_hz(-174.0) == pytest.approx(3.981e-21, rel=1e-3)
    assert scenario.adapter_param_count(768, 64, 768) == 99136


def test_rayleigh_power_fades_have_unit_mean():
    rng = scenario.RngSpec(5).generator()
    fades = scenario.rayleigh_power_fades(rng, (200_000,))
    assert np.all(fades >= 0)
    assert fades.mean() == pytest.approx(1.0, abs=0.01)


def test_rng_spec_rejects_unknown_generator():
    with pytest.raises(InvalidScenarioError):
        scenario.RngSpec(1, algorithm="MT19937").generator()


def test_save_and_load_keep_scenario_and_allocation(tmp_path, small_scenario):
    scn = small_scenario
    a = equal_split(scn, greedy_association(scn.N, scn.M))
    path = str(tmp_path / "solution.json")
    scenario.save(scn, path, allocation=a, extra={"note": "check"})

    loaded, allocation = scenario.load_with_allocation(path)
    assert scenario.scenario_hash(loaded) == scenario.scenario_hash(scn)
    assert np.array_equal(loaded.g, scn.g)
    assert np.array_equal(allocation.b, a.b)
    assert allocation.T == a.T

    doc = json.loads((tmp_path / "solution.json").read_text())
    assert doc["schema_version"] == SCHEMA_VERSION
    assert doc["kind"] == "solution"
    assert doc["note"] == "check"


def test_load_reports_missing_field_path(tmp_path, small_scenario):
    doc = {"schema_version": SCHEMA_VERSION, "scenario": scenario.scenario_to_dict(small_scenario)}
    del doc["scenario"]["users"][2]["d"]
    path = tmp_path / "broken.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(SchemaError) as err:
        scenario.load(str(path))
    assert err.value.path == "scenario.users[2].d"


def test_load_rejects_wrong_version_and_bad_json(tmp_path, small_scenario):
    doc = {"schema_version": 99, "scenario": scenario.scenario_to_dict(small_scenario)}
    path = tmp_path / "future.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(SchemaError):
        scenario.load(str(path))

    bad = tmp_path / "truncated.json"
    bad.write_text('{"schema_version": 1, "scen')
    with pytest.raises(SchemaError):
        scenario.load(str(bad))


def test_config_loading_and_validation(tmp_path):
    good = tmp_path / "cfg.json"
    good.write_text(json.dumps({"schema_version": 1, "scenario": {"n_users": 4, "n_servers": 2, "seed": 3}}))
    cfg = scenario.load_config(str(good))
    assert (cfg.n_users, cfg.n_servers, cfg.seed) == (4, 2, 3)
    assert cfg.b_max_hz == scenario.ScenarioConfig().b_max_hz

    missing = tmp_path / "missing.json"
    missing.write_text(json.dumps({"schema_version": 1, "scenario": {"n_servers": 2}}))
    with pytest.raises(SchemaError) as err:
        scenario.load_config(str(missing))
    assert err.value.path == "config.scenario.n_users"

    unknown = tmp_path / "unknown.json"
    unknown.write_text(json.dumps({"schema_version": 1, "scenario": {"n_users": 2, "n_servers": 1, "colour": 1}}))
    with pytest.raises(SchemaError) as err:
        scenario.load_config(str(unknown))
    assert err.value.path == "config.scenario.colour"


def test_shipped_configs_load():
    from config_settings import CONFIG_PATH
    default = scenario.load_config(os.path.join(CONFIG_PATH, "default_scenario.json"))
    assert (default.n_users, default.n_servers) == (10, 2)
    large = scenario.load_config(os.path.join(CONFIG_PATH, "topology_20x3.json"))
    assert (large.n_users, large.n_servers) == (20, 3)


def test_derived_sweep_points_keep_fading(default_scenario):
    wide = default_scenario.with_bandwidth(50e6)
    assert np.all(wide.b_max == 50e6)
    assert np.array_equal(wide.g, default_scenario.g)
    weighted = default_scenario.with_weights(0.1, 0.009)
    assert (weighted.omega_t, weighted.omega_e) == (0.1, 0.009)
    assert isinstance(weighted, Scenario)
    with pytest.raises(InvalidScenarioError):
        default_scenario.with_weights(0.0, 0.009)


def test_config_rejects_empty_ranges():
    with pytest.raises(InvalidScenarioError):
        scenario.ScenarioConfig(adapter_params=(5.0, 1.0))
    with pytest.raises(InvalidScenarioError):
        scenario.ScenarioConfig(n_users=0)
    assert math.isfinite(scenario.ScenarioConfig().varpi1)


def test_every_seed_stays_in_range():
    cfg = scenario.ScenarioConfig()
    d_lo, d_hi = cfg.adapter_params
    bits_lo, bits_hi = cfg.token_bits
    t_lo = cfg.flops_per_param_token * bits_lo / cfg.bits_per_token
    t_hi = cfg.flops_per_param_token * bits_hi / cfg.bits_per_token
    for seed in range(100):
        scn = scenario.generate(scenario.ScenarioConfig(n_users=5, n_servers=2, seed=seed))
        assert np.all((scn.d >= d_lo) & (scn.d <= d_hi))
        assert np.all((scn.t >= t_lo * (1 - 1e-12)) & (scn.t <= t_hi * (1 + 1e-12)))
        for p in [u.position for u in scn.users] + [s.position for s in scn.servers]:
            assert 0 <= p[0] <= cfg.area_m and 0 <= p[1] <= cfg.area_m
        assert np.all(np.isfinite(scn.g)) and np.all(scn.g > 0)
        assert np.all(scn.b_max == cfg.b_max_hz)
        assert scn.seed == seed
