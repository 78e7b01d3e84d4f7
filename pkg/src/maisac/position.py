"""Antenna-position optimization: coarse grid search, projected gradient ascent, baselines."""

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import InfeasibleLayoutError, check_fits
from .channel import (
    AntennaLayout,
    build_channels,
    si_channel_derivatives,
    uniform_layout,
    user_channel_derivative,
)
from .fp_solver import SolverState, initial_state, run_beamforming_ao
from .metrics import Beamformers, objective, signal_terms, surrogate
from .scenario import STREAM_COMBO_SUBSAMPLE, STREAM_RANDOM_LAYOUT, philox

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class GridSets:
    """Candidate Tx and Rx positions for the coarse search."""

    sx: np.ndarray
    sy: np.ndarray

    @classmethod
    def from_config(cls, cfg, interval=None):
        interval = cfg.wavelength if interval is None else interval
        return cls(build_grid(cfg.tx_range, interval), build_grid(cfg.rx_range, interval))


@dataclass(frozen=True)
class CfgsOptions:
    """Position-search settings.

    ``step_size`` is the largest single-coordinate move of one gradient step
    (meters, default ``lam/10``); the gradient is scaled by its largest entry
    and the step is shrunk by ``step_shrink`` until the surrogate does not
    decrease.  ``max_position_iters`` bounds the outer loop (gradient phase plus
    beamforming re-convergence); ``inner_steps`` bounds the x/y ascent sweeps
    per outer iteration.
    """

    step_size: float = None
    step_shrink: float = 0.5
    max_shrinks: int = 20
    max_position_iters: int = 30
    inner_steps: int = 10
    grad_mode: str = "analytic"
    combo_cap: int = 2000
    coarse_inner_iters: int = 5
    grid_interval: float = None
    tol: float = 1e-4

    def __post_init__(self):
        if self.step_size is not None and self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if not 0 < self.step_shrink < 1:
            raise ValueError("step_shrink must lie in (0, 1)")
        if self.combo_cap < 1:
            raise ValueError("combo_cap must be at least 1")
        if self.grad_mode not in ("analytic", "numeric"):
            raise ValueError("grad_mode must be 'analytic' or 'numeric'")


@dataclass
class IsacSolution:
    layout: AntennaLayout
    bf: Beamformers
    aux: object
    objective_value: float
    trace: list = field(default_factory=list)
    converged: bool = True

    def to_dict(self):
        return {
            "layout": self.layout.to_dict(),
            "beamformers": self.bf.to_dict(),
            "objective": self.objective_value,
            "converged": self.converged,
            "trace": self.trace,
        }


# ---------------------------------------------------------------------------
# gradient of the surrogate with respect to antenna coordinates


def surrogate_grad_positions(which, layout, scen, cfg, bf, aux, grad_mode="analytic", step=None):
    """Gradient of the surrogate w.r.t. every Tx (``which="tx"``) or Rx coordinate.

    Beamformers and auxiliaries are held fixed.  The analytic path
    differentiates the steering phases of the user, target and clutter
    channels and both amplitude and phase of the near-field SI matrix.
    """
    if which not in ("tx", "rx"):
        raise ValueError("which must be 'tx' or 'rx'")
    if grad_mode == "numeric":
        return _numeric_grad(which, layout, scen, cfg, bf, aux, step)

    ch = build_channels(layout, scen, cfg)
    t = signal_terms(ch, bf)
    F, w = bf.precoder, bf.combiner
    kappa = 2.0 * np.pi / cfg.wavelength
    wc_, ws_ = cfg.weight_comm, cfg.weight_sense
    mu_c, mu_s = aux.mu[:-1], aux.mu[-1]
    xs2 = float(np.sum(np.abs(aux.xi_s) ** 2))
    _, dH_dx, dH_dy = si_channel_derivatives(layout, cfg)

    if which == "tx":
        Dh = user_channel_derivative(layout.tx_positions, scen, cfg).conj()  # d(h_k^H)[n] / dx_n
        own = Dh * F  # d(h_k^H f_k)/dx_n
        cross = Dh * (F @ t.gains.conj().T)  # sum_j conj(g_kj) d g_kj / dx_n
        comm = wc_ * np.sum(
            2.0 * np.sqrt(1.0 + mu_c) * (aux.xi_c * own).real
            - 2.0 * np.abs(aux.xi_c) ** 2 * cross.real, axis=1)

        wb_s = w.conj() @ ch.target_rx_steer
        da_s = -1j * kappa * np.cos(scen.target_angle) * ch.target_tx_steer.conj()
        du = (ch.target_coef * wb_s) * da_s[:, None] * F  # (N, K)
        wb_c = w.conj() @ ch.clutter_rx_steer
        da_c = (-1j * kappa * np.cos(scen.clutter_angles)) * ch.clutter_tx_steer.conj()  # (N, C)
        dV = (ch.clutter_coefs * wb_c * da_c)[:, :, None] * F[:, None, :]  # (N, C, K)
        dz = (w.conj() @ dH_dx)[:, None] * F  # (N, K)
        sens_lin = 2.0 * np.sqrt(1.0 + mu_s) * (du @ aux.xi_s).real
    else:
        wconj = w.conj()
        a_s_F = ch.target_tx_steer.conj() @ F
        db_s = wconj * (1j * kappa * np.cos(scen.target_angle)) * ch.target_rx_steer
        du = ch.target_coef * db_s[:, None] * a_s_F[None, :]
        a_c_F = ch.clutter_tx_steer.conj().T @ F  # (C, K)
        db_c = wconj[:, None] * (1j * kappa * np.cos(scen.clutter_angles)) * ch.clutter_rx_steer  # (M, C)
        dV = (ch.clutter_coefs * db_c)[:, :, None] * a_c_F[None, :, :]
        dz = wconj[:, None] * (dH_dy @ F)
        sens_lin = 2.0 * np.sqrt(1.0 + mu_s) * (du @ aux.xi_s).real
        comm = 0.0

    quad = 2.0 * (np.einsum("ck,nck->n", t.clutter.conj(), dV).real
                  + (dz @ t.si.conj()).real
                  + (du @ t.target.conj()).real)
    return comm + ws_ * (sens_lin - xs2 * quad)


def _numeric_grad(which, layout, scen, cfg, bf, aux, step=None):
    from .oracle import DiffSpec, finite_diff_grad

    step = 1e-6 * cfg.wavelength if step is None else step
    base = layout.tx_positions if which == "tx" else layout.rx_positions

    def f(p):
        lay = AntennaLayout(p, layout.rx_positions) if which == "tx" else AntennaLayout(layout.tx_positions, p)
        return surrogate(build_channels(lay, scen, cfg), bf, aux, cfg)

    return finite_diff_grad(f, base, DiffSpec(step=step))


# ---------------------------------------------------------------------------
# feasibility projection and grids


def project_positions(raw, bounds, d0):
    """Sort and push positions onto the feasible set with the cascaded max/min recursion.

    Element ``n`` (0-based, after sorting) is clipped to
    ``[prev + d0, hi - (N-1-n) d0]`` (``lo`` replaces ``prev + d0`` for the
    first element), so the result satisfies both the range and the
    minimum-spacing constraints.
    """
    raw = np.asarray(raw, dtype=float)
    n = raw.shape[0]
    lo, hi = bounds
    check_fits(n, bounds, d0)
    s = np.sort(raw)
    out = np.empty(n)
    for i in range(n):
        lower = lo if i == 0 else out[i - 1] + d0
        upper = hi - (n - 1 - i) * d0
        out[i] = max(lower, min(upper, s[i]))
    return out


def build_grid(bounds, interval):
    """Points ``lo, lo + interval, ...`` up to and including ``hi``."""
    if interval <= 0:
        raise ValueError("grid interval must be positive")
    lo, hi = bounds
    count = int(math.floor((hi - lo) / interval + 1e-9)) + 1
    return lo + interval * np.arange(count)


# ---------------------------------------------------------------------------
# coarse search


def _combos(points, n, d0):
    """Index tuples of ``n`` grid points (lexicographic) that respect the spacing."""
    out = []
    for c in itertools.combinations(range(points.shape[0]), n):
        if n < 2 or np.min(np.diff(points[list(c)])) >= d0 - 1e-12:
            out.append(c)
    return out


def coarse_search(scen, cfg, grids=None, opts=None, solver_opts=None):
    """Evaluate grid placements with a few beamforming rounds each and keep the best.

    Combinations are enumerated lexicographically (Tx-major).  When their count
    exceeds ``opts.combo_cap`` a seeded uniform subset is evaluated.  The
    selection metric is the true objective; ties keep the lowest index.
    Returns ``(layout, diagnostics)``.
    """
    opts = CfgsOptions() if opts is None else opts
    grids = GridSets.from_config(cfg, opts.grid_interval) if grids is None else grids
    tx_combos = _combos(grids.sx, cfg.n_tx, cfg.min_spacing)
    rx_combos = _combos(grids.sy, cfg.n_rx, cfg.min_spacing)
    total = len(tx_combos) * len(rx_combos)
    if total == 0:
        raise InfeasibleLayoutError("grid admits no feasible antenna placement")
    if total > opts.combo_cap:
        rng = philox(cfg.seed, STREAM_COMBO_SUBSAMPLE)
        flat = np.sort(rng.choice(total, size=opts.combo_cap, replace=False))
    else:
        flat = np.arange(total)

    full = build_channels(AntennaLayout(grids.sx, grids.sy), scen, cfg)
    n_rx_combos = len(rx_combos)
    best_val, best_idx, best_state = -np.inf, None, None
    values = np.empty(flat.shape[0])
    for pos, idx in enumerate(flat):
        i, j = divmod(int(idx), n_rx_combos)
        ch = full.subset(tx_combos[i], rx_combos[j])
        state = run_beamforming_ao(ch, cfg, solver_opts, init=initial_state(ch, cfg),
                                   max_outer=opts.coarse_inner_iters)
        val = objective(ch, state.bf, cfg)
        values[pos] = val
        if val > best_val:
            best_val, best_idx, best_state = val, int(idx), state
    i, j = divmod(best_idx, n_rx_combos)
    layout = AntennaLayout(grids.sx[list(tx_combos[i])], grids.sy[list(rx_combos[j])])
    diagnostics = {
        "total_combos": total,
        "evaluated": int(flat.shape[0]),
        "best_index": best_idx,
        "best_value": float(best_val),
        "state": best_state,
        "values": values,
        "indices": flat,
    }
    return layout, diagnostics


# ---------------------------------------------------------------------------
# fine phase


def _ascent_step(which, layout, scen, cfg, bf, aux, opts, g0):
    grad = surrogate_grad_positions(which, layout, scen, cfg, bf, aux, opts.grad_mode)
    gmax = float(np.max(np.abs(grad)))
    if gmax == 0.0 or not np.isfinite(gmax):
        return layout, bf, g0
    if which == "tx":
        p, bounds = layout.tx_positions, cfg.tx_range
    else:
        p, bounds = layout.rx_positions, cfg.rx_range
    delta = cfg.wavelength / 10 if opts.step_size is None else opts.step_size
    for _ in range(opts.max_shrinks + 1):
        raw = p + delta * grad / gmax
        order = np.argsort(raw, kind="stable")
        new_p = project_positions(raw, bounds, cfg.min_spacing)
        if which == "tx":
            new_layout = AntennaLayout(new_p, layout.rx_positions)
            new_bf = Beamformers(bf.precoder[order], bf.combiner)
        else:
            new_layout = AntennaLayout(layout.tx_positions, new_p)
            new_bf = Beamformers(bf.precoder, bf.combiner[order])
        g = surrogate(build_channels(new_layout, scen, cfg), new_bf, aux, cfg)
        if g >= g0:
            return new_layout, new_bf, g
        delta *= opts.step_shrink
    return layout, bf, g0


def _position_phase(layout, scen, cfg, bf, aux, opts):
    """Projected ascent sweeps on x then y with beamformers and auxiliaries fixed."""
    g = surrogate(build_channels(layout, scen, cfg), bf, aux, cfg)
    for _ in range(opts.inner_steps):
        start = g
        layout, bf, g = _ascent_step("tx", layout, scen, cfg, bf, aux, opts, g)
        layout, bf, g = _ascent_step("rx", layout, scen, cfg, bf, aux, opts, g)
        if g - start <= 1e-12 * (1.0 + abs(g)):
            break
    return layout, bf, g


def refine_positions(scen, cfg, layout, opts=None, solver_opts=None, init=None):
    """Fine phase: alternate beamforming convergence and projected position ascent.

    Starts from ``layout`` (and ``init`` state, default the standard solver
    start) and stops when the objective changes by less than
    ``opts.tol * (1 + |objective|)``.
    """
    opts = CfgsOptions() if opts is None else opts
    layout.check(cfg)
    ch = build_channels(layout, scen, cfg)
    state = run_beamforming_ao(ch, cfg, solver_opts, init=initial_state(ch, cfg) if init is None else init)
    value = objective(ch, state.bf, cfg)
    trace = [{"iteration": 0, "objective": value, "surrogate": state.history[-1],
              "ao_rounds": state.iterations}]
    converged = opts.max_position_iters == 0
    for it in range(1, opts.max_position_iters + 1):
        layout, bf, _ = _position_phase(layout, scen, cfg, state.bf, state.aux, opts)
        ch = build_channels(layout, scen, cfg)
        state = run_beamforming_ao(ch, cfg, solver_opts, init=SolverState(bf=bf, aux=state.aux))
        new_value = objective(ch, state.bf, cfg)
        trace.append({"iteration": it, "objective": new_value, "surrogate": state.history[-1],
                      "ao_rounds": state.iterations})
        done = abs(new_value - value) < opts.tol * (1.0 + abs(new_value))
        value = new_value
        if done:
            converged = True
            break
    return IsacSolution(layout=layout, bf=state.bf, aux=state.aux, objective_value=value,
                        trace=trace, converged=converged)


def cfgs_optimize(scen, cfg, opts=None, solver_opts=None, grids=None):
    """Coarse grid search followed by the fine gradient phase."""
    opts = CfgsOptions() if opts is None else opts
    layout, diag = coarse_search(scen, cfg, grids, opts, solver_opts)
    logger.debug("coarse search picked combo %d of %d (objective %.6g)",
                 diag["best_index"], diag["total_combos"], diag["best_value"])
    sol = refine_positions(scen, cfg, layout, opts, solver_opts)
    sol.trace[0]["coarse_value"] = diag["best_value"]
    return sol


def random_layout(cfg, seed=None, max_tries=1000):
    """Feasible random layout: rejection sampling, projected if no draw is accepted."""
    rng = philox(cfg.seed if seed is None else seed, STREAM_RANDOM_LAYOUT)

    def draw(n, bounds):
        lo, hi = bounds
        p = lo + (hi - lo) * rng.random(n)
        for _ in range(max_tries - 1):
            s = np.sort(p)
            if n < 2 or np.min(np.diff(s)) >= cfg.min_spacing:
                return s
            p = lo + (hi - lo) * rng.random(n)
        return project_positions(p, bounds, cfg.min_spacing)

    return AntennaLayout(draw(cfg.n_tx, cfg.tx_range), draw(cfg.n_rx, cfg.rx_range))


def ga_ma_optimize(scen, cfg, opts=None, solver_opts=None, initial_layout=None):
    """Gradient-ascent baseline: random feasible start, fine phase only."""
    layout = random_layout(cfg) if initial_layout is None else initial_layout
    return refine_positions(scen, cfg, layout, opts, solver_opts)


def fpa_solve(scen, cfg, solver_opts=None):
    """Fixed half-wavelength arrays at the lower range bounds, beamforming only."""
    layout = uniform_layout(cfg)
    ch = build_channels(layout, scen, cfg)
    state = run_beamforming_ao(ch, cfg, solver_opts)
    value = objective(ch, state.bf, cfg)
    trace = [{"iteration": 0, "objective": value, "surrogate": state.history[-1],
              "ao_rounds": state.iterations}]
    return IsacSolution(layout=layout, bf=state.bf, aux=state.aux, objective_value=value,
                        trace=trace, converged=state.converged)
