"""Channel quantities as explicit functions of the antenna positions.

Conventions: steering vectors use ``exp(+j k p cos(angle))`` with
``k = 2 pi / lam``; the self-interference phase uses ``exp(-j k r)``.  Inner
products are always written ``h.conj() @ f`` so that conjugation happens in
exactly one place.  The receive angle of the target and of each clutter equals
its departure angle (co-located Tx and Rx arrays).
"""

from dataclasses import dataclass

import numpy as np

from ._validation import GeometryError, as_real_vector, check_fits


@dataclass(frozen=True, eq=False)
class AntennaLayout:
    """Tx positions ``x`` and Rx positions ``y`` along their line segments (meters)."""

    tx_positions: np.ndarray
    rx_positions: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "tx_positions", as_real_vector(self.tx_positions, "tx_positions"))
        object.__setattr__(self, "rx_positions", as_real_vector(self.rx_positions, "rx_positions"))

    def is_feasible(self, cfg, atol=1e-12):
        return (_segment_feasible(self.tx_positions, cfg.tx_range, cfg.min_spacing, atol)
                and _segment_feasible(self.rx_positions, cfg.rx_range, cfg.min_spacing, atol))

    def check(self, cfg):
        """Raise ``ValueError`` unless the layout meets the range and spacing constraints."""
        if self.tx_positions.shape[0] != cfg.n_tx or self.rx_positions.shape[0] != cfg.n_rx:
            raise ValueError("layout size does not match the configured antenna counts")
        if not self.is_feasible(cfg):
            raise ValueError("layout violates the movable-range or minimum-spacing constraints")
        return self

    def to_dict(self):
        return {"tx_positions": self.tx_positions.tolist(),
                "rx_positions": self.rx_positions.tolist()}


def _segment_feasible(p, bounds, d0, atol):
    lo, hi = bounds
    if np.any(p < lo - atol) or np.any(p > hi + atol):
        return False
    if p.shape[0] < 2:
        return True
    gaps = np.abs(p[:, None] - p[None, :])[np.triu_indices(p.shape[0], 1)]
    return bool(np.all(gaps >= d0 - atol))


def uniform_layout(cfg, spacing=None):
    """Fixed-position arrays starting at the lower bound with the given spacing (default ``lam/2``)."""
    spacing = cfg.wavelength / 2 if spacing is None else spacing
    check_fits(cfg.n_tx, cfg.tx_range, spacing, "tx_range")
    check_fits(cfg.n_rx, cfg.rx_range, spacing, "rx_range")
    return AntennaLayout(cfg.tx_range[0] + spacing * np.arange(cfg.n_tx),
                         cfg.rx_range[0] + spacing * np.arange(cfg.n_rx))


def steering_vector(positions, angle, lam):
    """Far-field array response ``exp(j 2 pi / lam * p_n * cos(angle))``.

    ``angle`` may be an array, in which case the result has shape
    ``(len(positions),) + angle.shape``.
    """
    if lam <= 0:
        raise ValueError("wavelength must be positive")
    positions = np.asarray(positions, dtype=float)
    angle = np.asarray(angle, dtype=float)
    phase = (2.0 * np.pi / lam) * np.multiply.outer(positions, np.cos(angle))
    return np.exp(1j * phase)


def user_channel(x, scen, k, cfg):
    """Multipath channel ``h_k(x)`` between the array and user ``k``."""
    if not 0 <= k < scen.n_users:
        raise IndexError(f"user index {k} out of range for {scen.n_users} users")
    a = steering_vector(x, scen.user_angles[k], cfg.wavelength)  # (N, L)
    return np.sqrt(scen.path_loss_users[k] / scen.n_paths) * (a @ scen.user_gains[k])


def user_channels(x, scen, cfg):
    """All user channels as columns of an ``(N_T, K)`` matrix."""
    a = steering_vector(x, scen.user_angles, cfg.wavelength)  # (N, K, L)
    scale = np.sqrt(scen.path_loss_users / scen.n_paths)
    return np.einsum("nkl,kl->nk", a, scen.user_gains) * scale


def user_channel_derivative(x, scen, cfg):
    """``d h_k[n] / d x_n`` for every antenna ``n`` and user ``k``, shape ``(N_T, K)``."""
    kappa = 2.0 * np.pi / cfg.wavelength
    a = steering_vector(x, scen.user_angles, cfg.wavelength)
    w = scen.user_gains * (1j * kappa * np.cos(scen.user_angles))
    scale = np.sqrt(scen.path_loss_users / scen.n_paths)
    return np.einsum("nkl,kl->nk", a, w) * scale


def pair_distance(x_i, y_j, r0, theta):
    """Distance between Tx antenna at ``x_i`` and Rx antenna at ``y_j``.

    Vectorizes over broadcastable ``x_i`` and ``y_j``.
    """
    x_i = np.asarray(x_i, dtype=float)
    y_j = np.asarray(y_j, dtype=float)
    c = np.cos(theta)
    sq = r0 ** 2 + x_i ** 2 + y_j ** 2 + 2 * r0 * y_j * c - 2 * r0 * x_i * c - 2 * y_j * x_i
    if np.any(sq < 0):
        # rounding can push an exactly-zero radicand slightly negative
        if np.any(sq < -1e-12 * (r0 ** 2 + np.max(x_i ** 2 + y_j ** 2))):
            raise GeometryError("negative radicand in Tx-Rx distance; check r0 and theta")
        sq = np.maximum(sq, 0.0)
    r = np.sqrt(sq)
    return float(r) if r.ndim == 0 else r


def si_path_loss(r, g, lam):
    """Near-field self-interference power loss ``(g/4)(u^2 - u^4 + u^6)``, ``u = lam / (2 pi r)``."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("SI distance must be positive")
    u2 = (lam / (2.0 * np.pi * r)) ** 2
    out = (g / 4.0) * (u2 - u2 ** 2 + u2 ** 3)
    return float(out) if out.ndim == 0 else out


def _si_distances(x, y, cfg):
    return pair_distance(np.asarray(x)[None, :], np.asarray(y)[:, None],
                         cfg.array_separation, cfg.array_angle)


def si_channel(layout, cfg):
    """Self-interference matrix ``H_SI`` of shape ``(N_R, N_T)``."""
    r = np.atleast_2d(_si_distances(layout.tx_positions, layout.rx_positions, cfg))
    amp = np.sqrt(si_path_loss(r, cfg.antenna_gain, cfg.wavelength))
    return amp * np.exp(-1j * (2.0 * np.pi / cfg.wavelength) * r)


def si_channel_derivatives(layout, cfg):
    """``H_SI`` together with its entrywise position derivatives.

    Returns ``(H, dH_dx, dH_dy)`` where ``dH_dx[j, i] = d H[j, i] / d x_i`` and
    ``dH_dy[j, i] = d H[j, i] / d y_j``.  Both the distance-dependent amplitude
    and the phase are differentiated.
    """
    x, y = layout.tx_positions, layout.rx_positions
    lam, g = cfg.wavelength, cfg.antenna_gain
    kappa = 2.0 * np.pi / lam
    r = np.atleast_2d(_si_distances(x, y, cfg))
    u2 = (lam / (2.0 * np.pi * r)) ** 2
    eta = (g / 4.0) * (u2 - u2 ** 2 + u2 ** 3)
    deta_dr = -(g / 4.0) * (2 * u2 - 4 * u2 ** 2 + 6 * u2 ** 3) / r
    amp = np.sqrt(eta)
    phase = np.exp(-1j * kappa * r)
    H = amp * phase
    dH_dr = (deta_dr / (2.0 * amp) - 1j * kappa * amp) * phase
    c = np.cos(cfg.array_angle)
    r0 = cfg.array_separation
    dr_dx = (x[None, :] - r0 * c - y[:, None]) / r
    dr_dy = (y[:, None] + r0 * c - x[None, :]) / r
    return H, dH_dr * dr_dx, dH_dr * dr_dy


@dataclass(frozen=True, eq=False)
class ChannelSet:
    """All channels for one layout.

    Echo channels are kept factored: the target echo is
    ``target_coef * outer(target_tx_steer, target_rx_steer.conj())`` and clutter
    ``c`` likewise with ``clutter_coefs[c]``; see :meth:`target_echo_matrix`.
    """

    user_channels: np.ndarray  # (N_T, K)
    target_tx_steer: np.ndarray  # (N_T,)
    target_rx_steer: np.ndarray  # (N_R,)
    clutter_tx_steer: np.ndarray  # (N_T, C)
    clutter_rx_steer: np.ndarray  # (N_R, C)
    si_matrix: np.ndarray  # (N_R, N_T)
    target_coef: complex  # sqrt(eta_s) alpha_s
    clutter_coefs: np.ndarray  # (C,) sqrt(eta_c) alpha_c

    @property
    def n_tx(self):
        return self.user_channels.shape[0]

    @property
    def n_rx(self):
        return self.target_rx_steer.shape[0]

    def target_echo_matrix(self):
        return self.target_coef * np.outer(self.target_tx_steer, self.target_rx_steer.conj())

    def clutter_echo_matrix(self, c):
        return self.clutter_coefs[c] * np.outer(self.clutter_tx_steer[:, c],
                                                self.clutter_rx_steer[:, c].conj())

    def subset(self, tx_index, rx_index):
        """Channels of the sub-array made of the selected Tx and Rx elements."""
        tx_index = np.asarray(tx_index)
        rx_index = np.asarray(rx_index)
        return ChannelSet(
            user_channels=self.user_channels[tx_index],
            target_tx_steer=self.target_tx_steer[tx_index],
            target_rx_steer=self.target_rx_steer[rx_index],
            clutter_tx_steer=self.clutter_tx_steer[tx_index],
            clutter_rx_steer=self.clutter_rx_steer[rx_index],
            si_matrix=self.si_matrix[np.ix_(rx_index, tx_index)],
            target_coef=self.target_coef,
            clutter_coefs=self.clutter_coefs,
        )

    def to_dict(self):
        def cplx(a):
            a = np.asarray(a)
            return np.stack([a.real, a.imag], axis=-1).tolist()

        return {name: cplx(getattr(self, name)) for name in self.__dataclass_fields__}


def build_channels(layout, scen, cfg):
    """Evaluate every channel quantity for ``layout`` in ``scen``."""
    x, y, lam = layout.tx_positions, layout.rx_positions, cfg.wavelength
    return ChannelSet(
        user_channels=user_channels(x, scen, cfg),
        target_tx_steer=steering_vector(x, scen.target_angle, lam),
        target_rx_steer=steering_vector(y, scen.target_angle, lam),
        clutter_tx_steer=steering_vector(x, scen.clutter_angles, lam).reshape(x.shape[0], -1),
        clutter_rx_steer=steering_vector(y, scen.clutter_angles, lam).reshape(y.shape[0], -1),
        si_matrix=si_channel(layout, cfg),
        target_coef=complex(np.sqrt(scen.path_loss_target) * scen.rcs_target),
        clutter_coefs=np.sqrt(scen.path_loss_clutters) * scen.rcs_clutters,
    )
