import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maisac.scenario import (
    ConfigError,
    ScenarioConfig,
    Scenario,
    complex_normal,
    dbm_to_watts,
    friis_path_loss,
    load_config,
    philox,
    sample_scenario,
    watts_to_dbm,
)

from conftest import LAM, tiny_config


@pytest.mark.parametrize("dbm, watts", [(30, 1.0), (0, 1e-3), (40, 10.0), (-60, 1e-9)])
def test_dbm_to_watts_known_values(dbm, watts):
    assert dbm_to_watts(dbm) == pytest.approx(watts, rel=1e-15)
    assert watts_to_dbm(watts) == pytest.approx(dbm, abs=1e-12)


def test_dbm_to_watts_vectorized_and_increasing():
    p = dbm_to_watts(np.linspace(-30, 50, 81))
    assert np.all(np.diff(p) > 0)
    assert dbm_to_watts([10, 20, 30]) == pytest.approx([0.01, 0.1, 1.0])


def test_friis_examples():
    d_unit = math.sqrt(LAM) / (4 * math.pi)
    assert friis_path_loss(d_unit, 1.0, LAM) == pytest.approx(1.0, rel=1e-12)
    assert friis_path_loss(50.0, 1.0, LAM) == pytest.approx(0.01 / (4 * math.pi * 50) ** 2, rel=1e-14)
    assert friis_path_loss(50.0, 1.0, LAM) == pytest.approx(2.533e-8, rel=1e-3)
    assert friis_path_loss(100.0, 1.0, LAM) == pytest.approx(friis_path_loss(50.0, 1.0, LAM) / 4)


@pytest.mark.parametrize("d", [0.0, -1.0])
def test_friis_rejects_nonpositive_distance(d):
    with pytest.raises(ValueError):
        friis_path_loss(d, 1.0, LAM)


def test_default_config_is_valid_and_round_trips():
    cfg = ScenarioConfig()
    assert cfg.n_tx == 8 and cfg.n_rx == 4 and cfg.n_paths == 12
    assert ScenarioConfig.from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize("changes", [
    dict(weight_comm=0.7, weight_sense=0.4),
    dict(weight_comm=1.2, weight_sense=-0.2),
    dict(power_budget=0.0),
    dict(noise_power=-1.0),
    dict(wavelength=0.0),
    dict(array_separation=0.0),
    dict(n_tx=0),
    dict(n_tx=30),  # 29 * 5 mm does not fit in 12 cm
    dict(tx_range=(0.1, 0.0)),
])
def test_config_rejects_invalid_fields(changes):
    with pytest.raises(ValueError):
        ScenarioConfig(**changes)


def test_config_from_dict_units_and_unknown_keys(tmp_path):
    cfg = ScenarioConfig.from_dict({"power_budget": "40 dBm", "tx_range": [0, "12 lambda"],
                                    "noise_power": "-60 dBm"})
    assert cfg.power_budget == pytest.approx(10.0)
    assert cfg.noise_power == pytest.approx(1e-9)
    assert cfg.tx_range == pytest.approx((0.0, 0.12))
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict({"n_antennas": 3})
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"n_tx": 4, "power_budget": "30 dBm"}))
    assert load_config(path).n_tx == 4


def test_sample_scenario_is_deterministic():
    cfg = tiny_config(7)
    a, b = sample_scenario(cfg), sample_scenario(cfg)
    for name in Scenario.__dataclass_fields__:
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    assert a.digest() == b.digest()
    assert sample_scenario(tiny_config(8)).digest() != a.digest()


def test_sample_scenario_shapes_at_full_scale():
    s = sample_scenario(ScenarioConfig())
    assert s.user_angles.shape == (4, 12)
    assert s.user_gains.shape == (4, 12)
    assert s.user_distances.shape == (4,)
    assert s.clutter_angles.shape == (3,)
    assert s.clutter_distances.shape == (3,)
    assert s.rcs_clutters.shape == (3,)
    assert s.path_loss_users.shape == (4,)
    assert s.target_angle == pytest.approx(math.pi / 4)


def test_scenario_dict_round_trip():
    s = sample_scenario(tiny_config(2))
    back = Scenario.from_dict(json.loads(json.dumps(s.to_dict())))
    assert back.digest() == s.digest()


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**63 - 1))
def test_scenario_invariants_hold_for_any_seed(seed):
    cfg = tiny_config(seed)
    s = sample_scenario(cfg)
    for angles in (s.user_angles, s.clutter_angles):
        assert np.all((angles >= 0) & (angles <= math.pi))
    assert np.all((s.user_distances >= 50) & (s.user_distances <= 80))
    assert 10 <= s.target_distance <= 20
    assert np.all((s.clutter_distances >= 10) & (s.clutter_distances <= 20))
    np.testing.assert_allclose(s.path_loss_users, friis_path_loss(s.user_distances, 1.0, LAM))
    assert s.path_loss_target == pytest.approx(friis_path_loss(s.target_distance, 1.0, LAM))
    assert np.all(s.path_loss_clutters > 0)


def test_scenario_invariants_over_many_seeds():
    for seed in range(1000):
        s = sample_scenario(tiny_config(seed, n_paths=2))
        assert np.all(s.user_angles >= 0) and np.all(s.user_angles <= math.pi)
        assert np.all(s.path_loss_users > 0) and s.path_loss_target > 0


def test_user_angles_are_uniform_on_zero_pi():
    cfg = tiny_config(11, n_users=10, n_paths=1000)
    angles = sample_scenario(cfg).user_angles.ravel()
    n = angles.size
    sigma = math.pi / math.sqrt(12 * n)
    assert abs(angles.mean() - math.pi / 2) < 3 * sigma
    assert angles.var() == pytest.approx(math.pi ** 2 / 12, rel=0.05)


def test_complex_normal_moments():
    z = complex_normal(philox(5, 9), 20000)
    assert abs(z.mean()) < 0.03
    assert np.mean(np.abs(z) ** 2) == pytest.approx(1.0, rel=0.03)
    assert abs(np.mean(z ** 2)) < 0.03  # circular symmetry


def test_philox_streams_are_independent():
    a = philox(3, 0).random(4)
    b = philox(3, 1).random(4)
    assert not np.allclose(a, b)
    np.testing.assert_array_equal(a, philox(3, 0).random(4))


def test_sample_scenario_rejects_non_config():
    with pytest.raises(ConfigError):
        sample_scenario({"n_tx": 4})
