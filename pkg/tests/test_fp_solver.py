import csv
import math

import numpy as np
import pytest
from scipy import optimize

from maisac.channel import build_channels
from maisac.fp_solver import (
    SolverOptions,
    SolverState,
    combiner_closed_form,
    initial_state,
    mu_from_b,
    precoder_closed_form,
    precoder_power,
    refresh_aux,
    run_beamforming_ao,
    solve_precoder,
    update_mu,
    update_xi_c,
    update_xi_s,
    write_trace,
)
from maisac.metrics import AuxVars, Beamformers, objective, signal_terms, surrogate
from maisac.oracle import DiffSpec, finite_diff_grad
from maisac.position import random_layout
from maisac.scenario import sample_scenario

from conftest import random_instance, tiny_config


def complex_grad(f, z, rel=1e-6):
    """Finite-difference gradient of a real function of a complex vector (real and imaginary parts)."""
    n = z.shape[0]
    h = rel * max(np.linalg.norm(z), 1e-30)
    return finite_diff_grad(lambda v: f(v[:n] + 1j * v[n:]), np.concatenate([z.real, z.imag]),
                            DiffSpec(step=h))


class TestPrecoder:
    def test_scalar_collapse(self):
        cfg = tiny_config(0, n_tx=1, n_rx=1, n_users=1, n_clutters=0, weight_comm=1.0, weight_sense=0.0)
        scen = sample_scenario(cfg)
        ch = build_channels(random_layout(cfg, seed=0), scen, cfg)
        aux = AuxVars(mu=np.array([0.7, 0.2]), xi_c=np.array([3e3 - 1e3j]), xi_s=np.array([0.0j]))
        h = ch.user_channels[0, 0]
        lam = abs(aux.xi_c[0]) ** 2 * abs(h) ** 2
        phi = math.sqrt(1.7) * np.conj(aux.xi_c[0]) * h
        for tau in (0.0, 1e-9, 1e-3):
            F = precoder_closed_form(tau, ch, aux, np.array([1.0 + 0j]), cfg)
            assert F[0, 0] == pytest.approx(phi / (lam + tau), rel=1e-12)

    def test_power_non_increasing_in_tau(self):
        cfg, _, _, ch, bf, aux = random_instance(1)
        taus = np.logspace(-12, 2, 20)
        powers = [precoder_power(t, ch, aux, bf.combiner, cfg) for t in taus]
        assert np.all(np.diff(powers) <= 1e-15 * max(powers))
        assert powers[-1] < 1e-3 * powers[0]

    def test_closed_form_is_stationary(self):
        for seed in range(5):
            cfg, _, _, ch, bf, aux = random_instance(seed)
            F = precoder_closed_form(0.0, ch, aux, bf.combiner, cfg)
            for k in range(cfg.n_users):
                def f(col, k=k):
                    G = F.copy()
                    G[:, k] = col
                    return surrogate(ch, Beamformers(G, bf.combiner), aux, cfg)

                g = complex_grad(f, F[:, k])
                # the derivative scale of the surrogate w.r.t. this column
                scale = np.linalg.norm(complex_grad(f, 2 * F[:, k]))
                assert np.linalg.norm(g) <= 1e-6 * scale

    def test_huge_budget_takes_unconstrained_branch(self):
        cfg, _, _, ch, bf, aux = random_instance(2)
        # auxiliaries built at 1 W, budget raised far above the stationary power
        cfg = cfg.replace(power_budget=1e6)
        F, tau, info = solve_precoder(ch, aux, bf.combiner, cfg, return_info=True)
        assert tau == 0.0 and info["branch"] == "unconstrained"
        np.testing.assert_allclose(F, precoder_closed_form(0.0, ch, aux, bf.combiner, cfg), rtol=1e-8)
        assert np.sum(np.abs(F) ** 2) <= cfg.power_budget

    def test_tiny_budget_is_met_with_equality(self):
        cfg, _, _, ch, bf, aux = random_instance(3, power_budget=1e-6)
        F, tau = solve_precoder(ch, aux, bf.combiner, cfg)
        P = np.sum(np.abs(F) ** 2)
        assert tau > 0
        assert cfg.power_budget - 1e-8 <= P <= cfg.power_budget

    def test_power_in_band_on_random_instances(self):
        for seed in range(30):
            cfg, _, _, ch, bf, aux = random_instance(seed, power_budget=float(10 ** (seed % 5 - 2)))
            F, tau, info = solve_precoder(ch, aux, bf.combiner, cfg, return_info=True)
            P = float(np.sum(np.abs(F) ** 2))
            if tau > 0:
                assert cfg.power_budget - 1e-8 <= P <= cfg.power_budget
                assert info["bisections"] <= SolverOptions().max_bisect
            else:
                assert P <= cfg.power_budget

    def test_matches_power_grid_oracle(self):
        # the bisection result sits where a dense tau grid crosses the budget
        cfg, _, _, ch, bf, aux = random_instance(4)
        F, tau = solve_precoder(ch, aux, bf.combiner, cfg)
        assert tau > 0
        assert precoder_power(tau * (1 - 1e-6), ch, aux, bf.combiner, cfg) >= cfg.power_budget - 1e-8
        assert precoder_power(tau * (1 + 1e-3), ch, aux, bf.combiner, cfg) < cfg.power_budget

    def test_update_never_decreases_surrogate(self):
        for seed in range(20):
            cfg, _, _, ch, bf, aux = random_instance(seed)
            g0 = surrogate(ch, bf, aux, cfg)
            F, _ = solve_precoder(ch, aux, bf.combiner, cfg)
            assert surrogate(ch, Beamformers(F, bf.combiner), aux, cfg) >= g0 - 1e-9 * (1 + abs(g0))


class TestCombiner:
    def test_scalar_case(self):
        cfg, _, _, ch, bf, aux = random_instance(0, n_rx=1)
        w = combiner_closed_form(ch, bf.precoder, aux, cfg)
        # gamma / Psi for a single receive antenna
        t = signal_terms(ch, Beamformers(bf.precoder, np.array([1.0 + 0j])))
        xs2 = np.sum(np.abs(aux.xi_s) ** 2)
        psi = xs2 * (np.sum(np.abs(t.target) ** 2) + np.sum(np.abs(t.clutter) ** 2)
                     + np.sum(np.abs(t.si) ** 2) + cfg.noise_power)
        gamma = math.sqrt(1 + aux.mu[-1]) * (t.target @ aux.xi_s)
        assert w[0] == pytest.approx(gamma / psi, rel=1e-10)

    def test_large_noise_shrinks_combiner(self):
        cfg, _, _, ch, bf, aux = random_instance(1)
        norms = [np.linalg.norm(combiner_closed_form(ch, bf.precoder, aux, cfg.replace(noise_power=n)))
                 for n in (1e-9, 1e-3, 1e3, 1e9)]
        assert norms[0] > norms[1] > norms[2] > norms[3]
        assert norms[3] < 1e-12 * norms[0]

    def test_closed_form_is_stationary(self):
        for seed in range(5):
            cfg, _, _, ch, bf, aux = random_instance(seed, n_rx=3)
            w = combiner_closed_form(ch, bf.precoder, aux, cfg)

            def f(v):
                return surrogate(ch, Beamformers(bf.precoder, v), aux, cfg)

            g = complex_grad(f, w)
            assert np.linalg.norm(g) <= 1e-6 * np.linalg.norm(complex_grad(f, 2 * w))
            assert f(w) >= surrogate(ch, bf, aux, cfg)

    def test_keeps_previous_combiner_when_undetermined(self):
        cfg, _, _, ch, bf, aux = random_instance(2)
        zero = aux.replace(xi_s=np.zeros_like(aux.xi_s))
        assert combiner_closed_form(ch, bf.precoder, zero, cfg, w_prev=bf.combiner) is bf.combiner
        with pytest.raises(ValueError):
            combiner_closed_form(ch, bf.precoder, zero, cfg)


class TestAuxUpdates:
    def test_mu_examples(self):
        assert mu_from_b(0.0) == 0.0
        assert mu_from_b(1.5) == pytest.approx(3.0, rel=1e-15)
        assert mu_from_b(-2.0) == 0.0
        b = 0.8
        res = optimize.minimize_scalar(lambda m: -(math.log1p(m) - m + 2 * b * math.sqrt(1 + m)),
                                       bounds=(0, 50), method="bounded", options={"xatol": 1e-12})
        assert mu_from_b(b) == pytest.approx(res.x, abs=1e-6)

    def test_xi_s_zero_for_zero_precoder(self):
        cfg, _, _, ch, bf, aux = random_instance(0)
        zero = Beamformers(np.zeros_like(bf.precoder), bf.combiner)
        assert np.all(update_xi_s(ch, zero, aux.mu, cfg) == 0)

    def test_xi_c_zero_when_precoder_orthogonal(self):
        cfg, _, _, ch, bf, aux = random_instance(1)
        h = ch.user_channels[:, 1]
        F = bf.precoder.copy()
        F[:, 1] -= h * np.vdot(h, F[:, 1]) / np.vdot(h, h)
        xi = update_xi_c(ch, Beamformers(F, bf.combiner), aux.mu, cfg)
        assert abs(xi[1]) < 1e-9 * abs(xi[0])

    def test_single_user_xi_c_ratio(self):
        cfg, _, _, ch, bf, aux = random_instance(2, n_users=1)
        g = np.vdot(ch.user_channels[:, 0], bf.precoder[:, 0])
        expected = math.sqrt(1 + aux.mu[0]) * np.conj(g) / (abs(g) ** 2 + cfg.noise_power)
        assert update_xi_c(ch, bf, aux.mu, cfg)[0] == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("block", ["xi_c", "xi_s"])
    def test_xi_updates_are_stationary(self, block):
        for seed in range(5):
            cfg, _, _, ch, bf, aux = random_instance(seed, refreshed=False)
            xi = (update_xi_c if block == "xi_c" else update_xi_s)(ch, bf, aux.mu, cfg)

            def f(z):
                return surrogate(ch, bf, aux.replace(**{block: z}), cfg)

            g = complex_grad(f, xi)
            assert np.linalg.norm(g) <= 1e-8 * np.linalg.norm(complex_grad(f, 2 * xi))

    def test_mu_fixed_point_of_full_loop(self):
        cfg, _, _, ch, bf, aux = random_instance(3)
        np.testing.assert_allclose(update_mu(ch, bf, aux, cfg), aux.mu, rtol=1e-6)


class TestAlternation:
    def test_initial_state_meets_budget(self, solver_start):
        cfg, ch, state = solver_start
        assert state.bf.power() == pytest.approx(cfg.power_budget)
        assert np.linalg.norm(state.bf.combiner) == pytest.approx(1.0)
        np.testing.assert_array_equal(state.aux.mu, 1.0)

    def test_history_is_tight_and_monotone(self, solver_start):
        cfg, ch, state = solver_start
        rows = []
        out = run_beamforming_ao(ch, cfg, init=state, trace=rows)
        h = np.array(out.history)
        assert np.all(np.diff(h) >= -1e-9)
        for row in rows:
            assert row["surrogate"] == pytest.approx(row["objective"], rel=1e-9)
            assert row["power"] <= cfg.power_budget * (1 + 1e-12)

    def test_converged_state_stops_after_one_round(self, solver_start):
        cfg, ch, state = solver_start
        done = run_beamforming_ao(ch, cfg, SolverOptions(max_outer=2000), init=state)
        assert done.converged
        again = run_beamforming_ao(ch, cfg, init=SolverState(done.bf, done.aux))
        assert again.iterations == 1 and again.converged

    def test_monotone_over_many_runs(self):
        for seed in range(50):
            cfg = tiny_config(seed, power_budget=float(10 ** (seed % 3 - 1)))
            ch = build_channels(random_layout(cfg, seed=seed), sample_scenario(cfg), cfg)
            out = run_beamforming_ao(ch, cfg, max_outer=60)
            assert np.all(np.diff(out.history) >= -1e-9)

    def test_deterministic(self, solver_start):
        cfg, ch, _ = solver_start
        a = run_beamforming_ao(ch, cfg, max_outer=20)
        b = run_beamforming_ao(ch, cfg, max_outer=20)
        np.testing.assert_array_equal(a.bf.precoder, b.bf.precoder)
        assert a.history == b.history

    def test_no_random_restart_beats_converged_solution(self):
        """Multi-start oracle: quasi-Newton on the objective over full-power (F, w)."""
        cfg = tiny_config(5, n_paths=4)
        ch = build_channels(random_layout(cfg, seed=5), sample_scenario(cfg), cfg)
        out = run_beamforming_ao(ch, cfg, SolverOptions(max_outer=5000, obj_tol=1e-10))
        ao_value = objective(ch, out.bf, cfg)
        nt, k, nr = cfg.n_tx, cfg.n_users, cfg.n_rx

        def unpack(v):
            F = (v[:nt * k] + 1j * v[nt * k:2 * nt * k]).reshape(nt, k)
            F *= math.sqrt(cfg.power_budget) / max(np.linalg.norm(F), 1e-300)
            w = v[2 * nt * k:2 * nt * k + nr] + 1j * v[2 * nt * k + nr:]
            return Beamformers(F, w)

        rng = np.random.default_rng(0)
        best = -np.inf
        for _ in range(100):
            v0 = rng.standard_normal(2 * (nt * k + nr))
            res = optimize.minimize(lambda v: -objective(ch, unpack(v), cfg), v0, method="BFGS",
                                    options={"gtol": 1e-8, "maxiter": 400})
            best = max(best, -res.fun)
        assert best <= ao_value + 1e-3


def test_write_trace(tmp_path, solver_start):
    cfg, ch, state = solver_start
    rows = []
    run_beamforming_ao(ch, cfg, init=state, max_outer=3, trace=rows)
    path = tmp_path / "trace.csv"
    write_trace(rows, path)
    with open(path) as fh:
        data = list(csv.DictReader(fh))
    assert len(data) == 3
    assert float(data[-1]["surrogate"]) == rows[-1]["surrogate"]


def test_refresh_is_idempotent():
    cfg, _, _, ch, bf, aux = random_instance(7)
    again = refresh_aux(ch, bf, cfg, aux)
    np.testing.assert_allclose(again.mu, aux.mu, rtol=1e-10)
    np.testing.assert_allclose(again.xi_c, aux.xi_c, rtol=1e-10)
