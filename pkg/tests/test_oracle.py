import numpy as np
import pytest

from maisac.channel import AntennaLayout, build_channels
from maisac.fp_solver import (
    combiner_closed_form,
    precoder_closed_form,
    update_mu,
    update_xi_c,
    update_xi_s,
)
from maisac.metrics import AuxVars, Beamformers, surrogate
from maisac.oracle import DiffSpec, exhaustive_layout_search, finite_diff_grad, numeric_block_max
from maisac.position import GridSets
from maisac.scenario import sample_scenario

from conftest import LAM, random_instance, tiny_config


class TestFiniteDifferences:
    def test_exact_on_quadratics(self):
        g = finite_diff_grad(lambda p: float(np.sum(p ** 2)), np.array([1.0, 2.0]))
        np.testing.assert_allclose(g, [2.0, 4.0], atol=1e-8)

    def test_constant_gives_zero(self):
        np.testing.assert_array_equal(finite_diff_grad(lambda p: 3.0, np.ones(4)), 0.0)

    def test_component_subset(self):
        g = finite_diff_grad(lambda p: float(p @ p), np.array([1.0, 2.0, 3.0]), DiffSpec(components=(2,)))
        np.testing.assert_allclose(g, [0.0, 0.0, 6.0], atol=1e-8)

    def test_non_finite_values_reported(self):
        with pytest.raises(FloatingPointError):
            finite_diff_grad(lambda p: np.inf, np.zeros(2))

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            DiffSpec(step=0.0)
        with pytest.raises(ValueError):
            DiffSpec(scheme="forward")


class TestBlockMax:
    def test_mu_block_for_known_b(self):
        # build an instance where the communication B of user 0 equals 3/2
        cfg, _, _, ch, bf, aux = random_instance(0)
        g = ch.user_channels[:, 0].conj() @ bf.precoder[:, 0]
        xi_c = aux.xi_c.copy()
        xi_c[0] = 1.5 / g
        aux = aux.replace(xi_c=xi_c)
        mu = numeric_block_max("mu", ch, bf, aux, cfg)
        assert mu[0] == pytest.approx(3.0, abs=1e-6)

    def test_xi_c_block_matches_closed_form(self):
        cfg, _, _, ch, bf, aux = random_instance(1, refreshed=False)
        z = numeric_block_max("xi_c", ch, bf, aux, cfg, restarts=3)
        expected = update_xi_c(ch, bf, aux.mu, cfg)
        assert np.linalg.norm(z - expected) <= 1e-6 * np.linalg.norm(expected)

    def test_precoder_column_matches_unconstrained_closed_form(self):
        cfg, _, _, ch, bf, aux = random_instance(2)
        F = precoder_closed_form(0.0, ch, aux, bf.combiner, cfg)
        z = numeric_block_max("precoder_col", ch, bf, aux, cfg, index=1, restarts=3)
        assert np.linalg.norm(z - F[:, 1]) <= 1e-6 * np.linalg.norm(F[:, 1])

    def test_oracle_never_below_closed_form_value(self):
        cfg, _, _, ch, bf, aux = random_instance(3, refreshed=False)
        closed_w = combiner_closed_form(ch, bf.precoder, aux, cfg)
        w = numeric_block_max("combiner", ch, bf, aux, cfg, restarts=3)
        assert (surrogate(ch, Beamformers(bf.precoder, w), aux, cfg)
                >= surrogate(ch, Beamformers(bf.precoder, closed_w), aux, cfg) - 1e-6)
        xs = numeric_block_max("xi_s", ch, bf, aux, cfg, restarts=3)
        closed_xs = update_xi_s(ch, bf, aux.mu, cfg)
        assert (surrogate(ch, bf, aux.replace(xi_s=xs), cfg)
                >= surrogate(ch, bf, aux.replace(xi_s=closed_xs), cfg) - 1e-6)
        mu = numeric_block_max("mu", ch, bf, aux, cfg)
        np.testing.assert_allclose(mu, update_mu(ch, bf, aux, cfg), rtol=1e-6, atol=1e-9)

    def test_unknown_block_and_missing_index(self, instance):
        cfg, _, _, ch, bf, aux = instance
        with pytest.raises(ValueError):
            numeric_block_max("tau", ch, bf, aux, cfg)
        with pytest.raises(ValueError):
            numeric_block_max("precoder_col", ch, bf, aux, cfg)


class TestExhaustive:
    def test_single_combo(self):
        cfg = tiny_config(0, n_tx=2, n_rx=1)
        grids = GridSets(np.array([0.0, 0.02]), np.array([0.01]))
        lay, val = exhaustive_layout_search(sample_scenario(cfg), cfg, grids)
        np.testing.assert_array_equal(lay.tx_positions, [0.0, 0.02])
        assert np.isfinite(val)

    def test_matches_manual_enumeration(self):
        from maisac.fp_solver import initial_state, run_beamforming_ao
        from maisac.metrics import objective

        cfg = tiny_config(1, n_tx=2, n_rx=1)
        scen = sample_scenario(cfg)
        grids = GridSets(np.arange(4) * LAM, np.arange(3) * LAM)
        _, val = exhaustive_layout_search(scen, cfg, grids)
        values = []
        for i in range(4):
            for j in range(i + 1, 4):
                for m in range(3):
                    lay = AntennaLayout(grids.sx[[i, j]], grids.sy[[m]])
                    ch = build_channels(lay, scen, cfg)
                    values.append(objective(ch, run_beamforming_ao(ch, cfg, init=initial_state(ch, cfg)).bf, cfg))
        assert len(values) == 18
        assert val == pytest.approx(max(values), rel=1e-12)

    def test_bound_enforced(self):
        cfg = tiny_config(2)
        with pytest.raises(ValueError):
            exhaustive_layout_search(sample_scenario(cfg), cfg, GridSets.from_config(cfg), max_combos=10)


def test_zero_aux_gives_zero_surrogate():
    cfg, _, _, ch, bf, _ = random_instance(4)
    K = cfg.n_users
    aux = AuxVars(mu=np.zeros(K + 1), xi_c=np.zeros(K, complex), xi_s=np.zeros(K, complex))
    assert surrogate(ch, bf, aux, cfg) == 0.0
