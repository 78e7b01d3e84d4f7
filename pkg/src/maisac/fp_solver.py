"""Alternating closed-form beamforming at fixed antenna positions.

Each outer round updates the precoder (bisection on the power dual variable),
the combiner, and then refreshes the auxiliary variables.  Every block update
maximizes the surrogate over its block, so the recorded surrogate values never
decrease; after the auxiliary refresh the surrogate equals the true objective.
"""

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from ._validation import BisectionError, NumericalRankError
from .metrics import (
    AuxVars,
    Beamformers,
    _abs2,
    objective,
    scnr,
    signal_terms,
    sinr_all,
    surrogate,
)
from .scenario import STREAM_SOLVER_INIT, complex_normal, philox

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverOptions:
    """Knobs for the beamforming loop.

    ``tau_bounds[1] = None`` selects the bracket heuristic
    ``||Phi||_F / sqrt(P_0)``, at which the precoder power is provably below the
    budget; the bracket is still doubled if needed.
    """

    tau_bounds: tuple = (0.0, None)
    power_tol: float = 1e-10
    obj_tol: float = 1e-6
    max_outer: int = 200
    max_bisect: int = 200
    max_bracket_doublings: int = 200

    def __post_init__(self):
        lo, hi = self.tau_bounds
        if lo < 0 or (hi is not None and hi <= lo):
            raise ValueError("tau_bounds must satisfy 0 <= tau_min < tau_max")
        if self.power_tol <= 0 or self.obj_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_outer < 1 or self.max_bisect < 1:
            raise ValueError("iteration caps must be positive")


@dataclass
class SolverState:
    bf: Beamformers
    aux: AuxVars
    tau: float = 0.0
    history: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def _precoder_system(ch, aux, w, cfg):
    """Hermitian matrix ``Lambda`` (shared by all columns) and right-hand sides ``Phi``.

    ``Lambda`` carries the communication penalty of every user,
    ``sum_m |xi_m^c|^2 h_m h_m^H``, because each column ``f_k`` leaks into all
    users' interference terms.
    """
    wc, ws = cfg.weight_comm, cfg.weight_sense
    H = ch.user_channels
    xs2 = float(np.sum(_abs2(aux.xi_s)))
    w_h = w.conj()
    # columns v with sensing row r = v^H
    v_target = np.conj(ch.target_coef * (w_h @ ch.target_rx_steer)) * ch.target_tx_steer
    v_clutter = np.conj(ch.clutter_coefs * (w_h @ ch.clutter_rx_steer)) * ch.clutter_tx_steer
    v_si = ch.si_matrix.conj().T @ w
    V = np.column_stack([v_target[:, None], v_clutter, v_si[:, None]])
    Hc = H * np.abs(aux.xi_c)
    Lam = ws * xs2 * (V @ V.conj().T) + wc * (Hc @ Hc.conj().T)
    Lam = 0.5 * (Lam + Lam.conj().T)

    mu_c, mu_s = aux.mu[:-1], aux.mu[-1]
    Phi = (wc * np.sqrt(1.0 + mu_c) * aux.xi_c.conj()) * H
    Phi = Phi + ws * np.sqrt(1.0 + mu_s) * np.outer(v_target, aux.xi_s.conj())
    return Lam, Phi


def precoder_closed_form(tau, ch, aux, w, cfg):
    """Stationary precoder of the surrogate for a fixed dual variable ``tau``.

    Column ``k`` is ``(Lambda + tau I)^{-1} phi_k``, equal to the printed
    ``((Lambda^T + tau I)^{-1})^* phi_k`` because ``Lambda`` is Hermitian.
    """
    Lam, Phi = _precoder_system(ch, aux, w, cfg)
    A = Lam + tau * np.eye(Lam.shape[0])
    try:
        factor = linalg.cho_factor(A, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise NumericalRankError(f"precoder system is singular at tau={tau}") from exc
    return linalg.cho_solve(factor, Phi, check_finite=False)


def precoder_power(tau, ch, aux, w, cfg):
    F = precoder_closed_form(tau, ch, aux, w, cfg)
    return float(np.sum(_abs2(F)))


def solve_precoder(ch, aux, w, cfg, opts=None, return_info=False):
    """Power-constrained precoder update.

    Tries ``tau = 0`` first; if that precoder fits the budget it is optimal by
    complementary slackness.  Otherwise ``tau`` is bisected, using that the
    precoder power is non-increasing in ``tau``, until the power lies in
    ``[P_0 - eps, P_0]``.  Returns ``(F, tau)`` (plus an info dict when asked).
    """
    opts = SolverOptions() if opts is None else opts
    P0, eps = cfg.power_budget, opts.power_tol
    Lam, Phi = _precoder_system(ch, aux, w, cfg)
    evals, U = np.linalg.eigh(Lam)
    evals = np.maximum(evals, 0.0)
    C = U.conj().T @ Phi
    # power of F(tau) is sum_i weight_i / (lambda_i + tau)^2 in the eigenbasis
    weight = _abs2(C).sum(axis=1)

    def power(tau):
        return float(np.dot(weight, 1.0 / (evals + tau) ** 2))

    def precoder(tau):
        F = U @ (C / (evals + tau)[:, None])
        P = float(np.sum(_abs2(F)))
        if P > P0:
            # rounding between the eigenbasis and F; scale by at most a few ulps
            F = F * np.sqrt(P0 / P)
            P = float(np.sum(_abs2(F)))
        return F, P

    info = {"bisections": 0, "branch": "unconstrained"}
    scale = evals[-1] if evals.size else 0.0
    if evals.size and evals[0] > 1e-13 * scale and opts.tau_bounds[0] == 0.0:
        P = power(0.0)
        if np.isfinite(P) and P <= P0:
            F, P = precoder(0.0)
            info["power"] = P
            return (F, 0.0, info) if return_info else (F, 0.0)

    info["branch"] = "bisection"
    tau_lo, tau_hi = opts.tau_bounds
    if tau_hi is None:
        tau_hi = max(np.linalg.norm(Phi) / np.sqrt(P0), np.finfo(float).tiny)
    P_hi = power(tau_hi)
    doublings = 0
    while P_hi > P0:
        if doublings >= opts.max_bracket_doublings:
            raise BisectionError(f"power {P_hi} still above budget {P0} at tau={tau_hi}")
        tau_lo, tau_hi = tau_hi, 2.0 * tau_hi
        P_hi = power(tau_hi)
        doublings += 1

    tau, P = tau_hi, P_hi
    for it in range(opts.max_bisect):
        if P0 - eps <= P <= P0:
            break
        tau = 0.5 * (tau_lo + tau_hi)
        if not tau_lo < tau < tau_hi:
            # bracket exhausted in floating point; keep the feasible end
            tau, P = tau_hi, P_hi
            break
        P = power(tau)
        info["bisections"] = it + 1
        if P > P0:
            tau_lo = tau
        else:
            tau_hi, P_hi = tau, P
    if P > P0:
        tau = tau_hi
    F, P = precoder(tau)
    info["power"] = P
    return (F, tau, info) if return_info else (F, tau)


def combiner_closed_form(ch, F, aux, cfg, w_prev=None):
    """Stationary combiner ``Psi^{-1} gamma`` of the surrogate.

    ``Psi`` is Hermitian positive definite whenever ``xi_s != 0``, so the
    printed conjugate of the inverse is dropped: the stationarity condition
    of ``2 Re{w^H gamma} - w^H Psi w`` is ``Psi w = gamma``.  When the
    surrogate does not depend on ``w`` (``xi_s = 0`` or ``gamma = 0``) the
    previous combiner is kept.
    """
    xs2 = float(np.sum(_abs2(aux.xi_s)))
    a_s_F = ch.target_tx_steer.conj() @ F
    gamma = np.sqrt(1.0 + aux.mu[-1]) * ch.target_coef * (a_s_F @ aux.xi_s) * ch.target_rx_steer
    if xs2 == 0.0 or not np.any(gamma):
        if w_prev is None:
            raise ValueError("combiner is undetermined: sensing auxiliary variable is zero")
        return w_prev
    a_c_F = ch.clutter_tx_steer.conj().T @ F  # (C, K)
    clutter_w = _abs2(ch.clutter_coefs) * np.sum(_abs2(a_c_F), axis=1)
    HF = ch.si_matrix @ F
    Psi = (ch.clutter_rx_steer * clutter_w) @ ch.clutter_rx_steer.conj().T
    Psi = Psi + abs(ch.target_coef) ** 2 * float(np.sum(_abs2(a_s_F))) * np.outer(
        ch.target_rx_steer, ch.target_rx_steer.conj())
    Psi = Psi + HF @ HF.conj().T + cfg.noise_power * np.eye(ch.n_rx)
    Psi = xs2 * 0.5 * (Psi + Psi.conj().T)
    return linalg.solve(Psi, gamma, assume_a="pos", check_finite=False)


def update_xi_s(ch, bf, mu, cfg, terms=None):
    """Closed-form sensing quadratic-transform variable for the current beamformers."""
    t = signal_terms(ch, bf) if terms is None else terms
    A = (float(np.sum(_abs2(t.target))) + float(np.sum(_abs2(t.clutter)))
         + float(np.sum(_abs2(t.si))) + t.combiner_norm2 * cfg.noise_power)
    if A == 0.0:
        return np.zeros_like(t.target)
    return np.sqrt(1.0 + mu[-1]) * t.target.conj() / A


def update_xi_c(ch, bf, mu, cfg, terms=None):
    """Closed-form communication quadratic-transform variables."""
    t = signal_terms(ch, bf) if terms is None else terms
    denom = _abs2(t.gains).sum(axis=1) + cfg.noise_power
    return np.sqrt(1.0 + mu[:-1]) * np.diag(t.gains).conj() / denom


def mu_from_b(b):
    """Maximizer of ``log(1+mu) - mu + 2 b sqrt(1+mu)`` over ``mu >= 0``."""
    b = np.maximum(np.asarray(b, dtype=float), 0.0)
    return 0.5 * (b * b + b * np.sqrt(b * b + 4.0))


def update_mu(ch, bf, aux, cfg, terms=None):
    """Closed-form Lagrangian-dual-transform variables; negative ``B`` is clamped to 0."""
    t = signal_terms(ch, bf) if terms is None else terms
    b_comm = (aux.xi_c * np.diag(t.gains)).real
    b_sense = (t.target @ aux.xi_s).real
    return mu_from_b(np.append(b_comm, b_sense))


def refresh_aux(ch, bf, cfg, aux=None):
    """Jointly optimal auxiliaries for fixed beamformers.

    The joint maximizer over ``(mu, xi)`` has ``mu`` equal to the SINRs and the
    SCNR; the quadratic-transform variables follow in closed form, and the
    final ``update_mu`` pass reproduces ``mu`` (it is the fixed point).  The
    surrogate then equals the true objective.
    """
    t = signal_terms(ch, bf)
    mu = np.append(sinr_all(ch, bf, cfg, t), scnr(ch, bf, cfg, t))
    xi_c = update_xi_c(ch, bf, mu, cfg, t)
    xi_s = update_xi_s(ch, bf, mu, cfg, t)
    new = AuxVars(mu=mu, xi_c=xi_c, xi_s=xi_s)
    return new.replace(mu=update_mu(ch, bf, new, cfg, t))


def random_combiner(n_rx, seed):
    """Unit-norm combiner drawn uniformly on the complex sphere (solver-init stream)."""
    w = complex_normal(philox(seed, STREAM_SOLVER_INIT), n_rx)
    return w / np.linalg.norm(w)


def initial_state(ch, cfg, seed=None):
    """Default start: random unit combiner, ``mu = 1``, and auxiliaries from a matched filter.

    The matched filter uses the user channels as precoder columns scaled to the
    power budget.
    """
    seed = cfg.seed if seed is None else seed
    w = random_combiner(ch.n_rx, seed)
    H = ch.user_channels
    F = H * np.sqrt(cfg.power_budget / float(np.sum(_abs2(H))))
    bf = Beamformers(F, w)
    mu = np.ones(H.shape[1] + 1)
    t = signal_terms(ch, bf)
    aux = AuxVars(mu=mu, xi_c=update_xi_c(ch, bf, mu, cfg, t), xi_s=update_xi_s(ch, bf, mu, cfg, t))
    return SolverState(bf=bf, aux=aux)


def run_beamforming_ao(ch, cfg, opts=None, init=None, max_outer=None, trace=None):
    """Alternate precoder, combiner and auxiliary updates until the surrogate settles.

    ``init`` is a :class:`SolverState` (only ``bf`` and ``aux`` are used);
    ``max_outer`` overrides ``opts.max_outer``.  When ``trace`` is a list, one
    dict per round is appended with the surrogate, objective, power and ``tau``.
    """
    opts = SolverOptions() if opts is None else opts
    state = initial_state(ch, cfg) if init is None else init
    n_rounds = opts.max_outer if max_outer is None else max_outer
    bf, aux = state.bf, state.aux
    g_prev = surrogate(ch, bf, aux, cfg)
    history, tau, converged = [], 0.0, False
    for it in range(1, n_rounds + 1):
        F, tau = solve_precoder(ch, aux, bf.combiner, cfg, opts)
        w = combiner_closed_form(ch, F, aux, cfg, w_prev=bf.combiner)
        bf = Beamformers(F, w)
        aux = refresh_aux(ch, bf, cfg, aux)
        g = surrogate(ch, bf, aux, cfg)
        if not np.isfinite(g):
            raise FloatingPointError(f"surrogate became non-finite at round {it}")
        history.append(g)
        if trace is not None:
            trace.append({"iteration": it, "surrogate": g, "objective": objective(ch, bf, cfg),
                          "power": bf.power(), "tau": tau})
        if abs(g - g_prev) < opts.obj_tol * (1.0 + abs(g)):
            converged = True
            break
        g_prev = g
    logger.debug("beamforming AO stopped after %d rounds (converged=%s)", len(history), converged)
    return SolverState(bf=bf, aux=aux, tau=tau, history=history,
                       iterations=len(history), converged=converged)


TRACE_COLUMNS = ("iteration", "surrogate", "objective", "power", "tau")


def write_trace(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=TRACE_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(row[k]) if isinstance(row[k], float) else row[k] for k in TRACE_COLUMNS})
