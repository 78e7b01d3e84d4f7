"""Communication and sensing metrics, the weighted objective and its FP surrogate.

Rates use the natural logarithm (nats).
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class Beamformers:
    """Precoder ``F`` (``N_T x K``, column ``k`` serves user ``k``) and combiner ``w`` (``N_R``)."""

    precoder: np.ndarray
    combiner: np.ndarray

    def power(self):
        return float(np.vdot(self.precoder, self.precoder).real)

    def to_dict(self):
        return {
            "precoder_re": self.precoder.real.tolist(),
            "precoder_im": self.precoder.imag.tolist(),
            "combiner_re": self.combiner.real.tolist(),
            "combiner_im": self.combiner.imag.tolist(),
        }


@dataclass(frozen=True, eq=False)
class AuxVars:
    """FP auxiliary variables: ``mu`` (``K+1``, last entry for sensing), ``xi_c`` and ``xi_s`` (``K``)."""

    mu: np.ndarray
    xi_c: np.ndarray
    xi_s: np.ndarray

    def replace(self, **changes):
        data = {"mu": self.mu, "xi_c": self.xi_c, "xi_s": self.xi_s}
        data.update(changes)
        return AuxVars(**data)


@dataclass(frozen=True)
class SignalTerms:
    """Inner products shared by every metric.

    ``gains[k, j] = h_k^H f_j``; ``target[k]``, ``clutter[c, k]`` and ``si[k]``
    are the per-stream entries of the sensing rows ``sqrt(eta_s) alpha_s w^H b_s
    a_s^H F``, ``sqrt(eta_c) alpha_c w^H b_c a_c^H F`` and ``w^H H_SI F``.
    """

    gains: np.ndarray
    target: np.ndarray
    clutter: np.ndarray
    si: np.ndarray
    combiner_norm2: float


def signal_terms(ch, bf):
    F, w = bf.precoder, bf.combiner
    wc = w.conj()
    target = ch.target_coef * (wc @ ch.target_rx_steer) * (ch.target_tx_steer.conj() @ F)
    clutter = (ch.clutter_coefs * (wc @ ch.clutter_rx_steer))[:, None] * (ch.clutter_tx_steer.conj().T @ F)
    return SignalTerms(
        gains=ch.user_channels.conj().T @ F,
        target=target,
        clutter=clutter,
        si=(wc @ ch.si_matrix) @ F,
        combiner_norm2=float(np.vdot(w, w).real),
    )


def _abs2(a):
    return a.real ** 2 + a.imag ** 2


def sinr_all(ch, bf, cfg, terms=None):
    """SINR of every user as a length-``K`` array."""
    t = signal_terms(ch, bf) if terms is None else terms
    p = _abs2(t.gains)
    signal = np.diag(p)
    return signal / (p.sum(axis=1) - signal + cfg.noise_power)


def sinr(k, ch, bf, cfg):
    """SINR at user ``k``: own-stream power over inter-user interference plus noise."""
    K = ch.user_channels.shape[1]
    if not 0 <= k < K:
        raise IndexError(f"user index {k} out of range for {K} users")
    h = ch.user_channels[:, k]
    g = h.conj() @ bf.precoder
    p = _abs2(g)
    return float(p[k] / (p.sum() - p[k] + cfg.noise_power))


def comm_rate(k, ch, bf, cfg):
    return float(np.log1p(sinr(k, ch, bf, cfg)))


def _sensing_parts(t, cfg):
    signal = float(np.sum(_abs2(t.target)))
    clutter = float(np.sum(_abs2(t.clutter)))
    si = float(np.sum(_abs2(t.si)))
    return signal, clutter + si + t.combiner_norm2 * cfg.noise_power


def scnr(ch, bf, cfg, terms=None):
    """Signal-to-clutter-plus-noise ratio at the sensing receiver (SI counts as interference)."""
    t = signal_terms(ch, bf) if terms is None else terms
    signal, rest = _sensing_parts(t, cfg)
    if rest <= 0.0:
        return 0.0 if signal == 0.0 else np.inf
    return signal / rest


def sensing_mi(ch, bf, cfg, terms=None):
    return float(np.log1p(scnr(ch, bf, cfg, terms)))


def objective(ch, bf, cfg, terms=None):
    """Weighted sum of user rates and sensing mutual information."""
    t = signal_terms(ch, bf) if terms is None else terms
    rates = np.log1p(sinr_all(ch, bf, cfg, t))
    return float(cfg.weight_comm * rates.sum() + cfg.weight_sense * np.log1p(scnr(ch, bf, cfg, t)))


def objective_parts(ch, bf, cfg):
    """``(objective, comm_sum_rate, sensing_mi)`` for reporting."""
    t = signal_terms(ch, bf)
    comm = float(np.log1p(sinr_all(ch, bf, cfg, t)).sum())
    sens = float(np.log1p(scnr(ch, bf, cfg, t)))
    return cfg.weight_comm * comm + cfg.weight_sense * sens, comm, sens


def surrogate(ch, bf, aux, cfg, terms=None):
    """FP surrogate of the objective for the given auxiliary variables.

    The communication penalty sums ``|h_k^H f_j|^2`` over all ``j`` including
    ``j = k``, and the sensing penalty includes the target power itself; with
    those, refreshing the auxiliaries in closed form makes the surrogate equal
    the true objective.
    """
    t = signal_terms(ch, bf) if terms is None else terms
    wc, ws = cfg.weight_comm, cfg.weight_sense
    mu_c, mu_s = aux.mu[:-1], aux.mu[-1]
    xi_c, xi_s = aux.xi_c, aux.xi_s

    own = np.diag(t.gains)
    total = _abs2(t.gains).sum(axis=1) + cfg.noise_power
    comm = (np.log1p(mu_c) - mu_c
            + 2.0 * np.sqrt(1.0 + mu_c) * (xi_c * own).real
            - _abs2(xi_c) * total)

    signal, rest = _sensing_parts(t, cfg)
    sens = (np.log1p(mu_s) - mu_s
            + 2.0 * np.sqrt(1.0 + mu_s) * (t.target @ xi_s).real
            - float(np.sum(_abs2(xi_s))) * (signal + rest))
    return float(wc * comm.sum() + ws * sens)
