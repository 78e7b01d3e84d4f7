import re

import numpy as np
import pytest

from maisac.channel import build_channels
from maisac.fp_solver import initial_state, refresh_aux
from maisac.metrics import AuxVars, Beamformers
from maisac.position import random_layout
from maisac.scenario import ScenarioConfig, sample_scenario

LAM = 0.01


def tiny_config(seed=0, **overrides):
    """Small system (4 Tx, 2 Rx, 2 users, 2 clutters) for fast exact checks."""
    base = dict(n_tx=4, n_rx=2, n_users=2, n_clutters=2, n_paths=6, wavelength=LAM,
                tx_range=(0.0, 6 * LAM), rx_range=(0.0, 4 * LAM), power_budget=1.0,
                array_separation=20 * LAM, seed=seed)
    base.update(overrides)
    return ScenarioConfig(**base)


def random_instance(seed, refreshed=True, **overrides):
    """Random (cfg, scen, layout, channels, beamformers, aux) tuple.

    Layout, precoder and combiner are random; the auxiliaries are either the
    closed-form refresh or random values.
    """
    rng = np.random.default_rng(1000 + seed)
    cfg = tiny_config(seed, **overrides)
    scen = sample_scenario(cfg)
    layout = random_layout(cfg, seed=seed)
    ch = build_channels(layout, scen, cfg)
    F = rng.standard_normal((cfg.n_tx, cfg.n_users)) + 1j * rng.standard_normal((cfg.n_tx, cfg.n_users))
    F *= np.sqrt(cfg.power_budget) / np.linalg.norm(F)
    w = rng.standard_normal(cfg.n_rx) + 1j * rng.standard_normal(cfg.n_rx)
    bf = Beamformers(F, w / np.linalg.norm(w))
    if refreshed:
        aux = refresh_aux(ch, bf, cfg)
    else:
        K = cfg.n_users
        aux = AuxVars(mu=rng.random(K + 1) * 2,
                      xi_c=(rng.standard_normal(K) + 1j * rng.standard_normal(K)) * 1e3,
                      xi_s=(rng.standard_normal(K) + 1j * rng.standard_normal(K)) * 1e2)
    return cfg, scen, layout, ch, bf, aux


@pytest.fixture
def cfg():
    return tiny_config()


@pytest.fixture
def instance():
    return random_instance(0)


@pytest.fixture
def solver_start():
    cfg = tiny_config(3)
    scen = sample_scenario(cfg)
    ch = build_channels(random_layout(cfg, seed=3), scen, cfg)
    return cfg, ch, initial_state(ch, cfg)


ACCEPTANCE_LINES = []


def report(number, title, ok, detail):
    """Record and print one acceptance verdict line, then fail the test if it is red."""
    line = f"{'PASS' if ok else 'FAIL'} [{number}] {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def _criterion_key(line):
    label = line.split("[", 1)[1].split("]", 1)[0]
    return int(re.match(r"\d+", label).group()), label


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=_criterion_key):
            terminalreporter.write_line(line)
