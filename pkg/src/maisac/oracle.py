"""Independent verification engines used by the tests.

Nothing here calls the closed-form updates: block maximizers only evaluate the
surrogate, and the exhaustive search converges beamforming fully on every
candidate layout.
"""

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .channel import AntennaLayout, build_channels
from .metrics import Beamformers, objective, surrogate


@dataclass(frozen=True)
class DiffSpec:
    step: float = 1e-6
    scheme: str = "central"
    components: tuple = None

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("difference step must be positive")
        if self.scheme != "central":
            raise ValueError("only central differences are supported")


def finite_diff_grad(f, point, spec=None):
    """Central-difference gradient ``(f(p + h e_n) - f(p - h e_n)) / 2h``."""
    spec = DiffSpec() if spec is None else spec
    point = np.asarray(point, dtype=float)
    comps = range(point.shape[0]) if spec.components is None else spec.components
    grad = np.zeros(point.shape[0])
    h = spec.step
    for n in comps:
        e = np.zeros_like(point)
        e[n] = h
        fp, fm = f(point + e), f(point - e)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError(f"non-finite function value while differencing component {n}")
        grad[n] = (fp - fm) / (2.0 * h)
    return grad


# ---------------------------------------------------------------------------
# numeric block maximization


BLOCKS = ("precoder_col", "combiner", "xi_c", "xi_s", "mu")


def _block_setter(block, bf, aux, index):
    """Return ``(n_complex, get, set)`` to view one block as a complex vector."""
    if block == "precoder_col":
        F0 = bf.precoder

        def put(z):
            F = F0.copy()
            F[:, index] = z
            return Beamformers(F, bf.combiner), aux

        return F0.shape[0], F0[:, index], put
    if block == "combiner":
        return bf.combiner.shape[0], bf.combiner, lambda z: (Beamformers(bf.precoder, z), aux)
    if block == "xi_c":
        return aux.xi_c.shape[0], aux.xi_c, lambda z: (bf, aux.replace(xi_c=z))
    if block == "xi_s":
        return aux.xi_s.shape[0], aux.xi_s, lambda z: (bf, aux.replace(xi_s=z))
    raise ValueError(f"unknown block {block!r}; expected one of {BLOCKS}")


def _newton_ascent(f, z0, max_iter=30, rel_step=1e-2):
    """Maximize a smooth (here quadratic) real function by Newton steps on
    finite-difference derivatives; the step size follows the iterate's scale."""
    z = np.asarray(z0, dtype=float).copy()
    n = z.shape[0]
    fz = f(z)
    for _ in range(max_iter):
        h = rel_step * max(np.linalg.norm(z), 1e-300) / np.sqrt(n)
        g = np.empty(n)
        Hm = np.empty((n, n))
        E = np.eye(n) * h
        f_plus = np.array([f(z + E[i]) for i in range(n)])
        f_minus = np.array([f(z - E[i]) for i in range(n)])
        g[:] = (f_plus - f_minus) / (2 * h)
        for i in range(n):
            Hm[i, i] = (f_plus[i] - 2 * fz + f_minus[i]) / h ** 2
            for j in range(i + 1, n):
                v = (f(z + E[i] + E[j]) - f(z + E[i] - E[j])
                     - f(z - E[i] + E[j]) + f(z - E[i] - E[j])) / (4 * h ** 2)
                Hm[i, j] = Hm[j, i] = v
        try:
            step = -np.linalg.solve(Hm, g)
        except np.linalg.LinAlgError:
            step = g * h / max(np.linalg.norm(g), 1e-300)
        # backtrack so each accepted step is an ascent step
        t = 1.0
        while t > 1e-8:
            z_new = z + t * step
            f_new = f(z_new)
            if f_new >= fz:
                break
            t *= 0.5
        else:
            break
        moved = np.linalg.norm(z_new - z)
        z, fz = z_new, f_new
        if moved <= 1e-13 * max(np.linalg.norm(z), 1e-300):
            break
    return z, fz


def _stationary_1d(f, h=1e-3):
    """Five-point central derivative; fourth-order accurate, so its root is
    far sharper than the argmax of noisy function values near a flat peak."""
    def g(x):
        return (8.0 * (f(x + h) - f(x - h)) - (f(x + 2 * h) - f(x - 2 * h))) / (12.0 * h)
    return g


def _grid_max_1d(f, lo=0.0, n=201, rounds=60):
    """Maximize a smooth unimodal function on ``[lo, inf)``.

    An expanding then zooming grid locates the peak; the stationary point of a
    high-order finite-difference derivative inside the final bracket then
    polishes it.
    """
    hi = 1.0
    while True:
        xs = np.linspace(lo, hi, n)
        vals = np.array([f(x) for x in xs])
        if np.argmax(vals) < n - 1 or hi > 1e12:
            break
        hi *= 4.0
    for _ in range(rounds):
        i = int(np.argmax(vals))
        a, b = xs[max(i - 2, 0)], xs[min(i + 2, n - 1)]
        if b - a <= 1e-6 * max(abs(xs[i]), 1.0):
            break
        xs = np.linspace(a, b, n)
        vals = np.array([f(x) for x in xs])
    i = int(np.argmax(vals))
    a, b = xs[max(i - 2, 0)], xs[min(i + 2, n - 1)]
    g = _stationary_1d(f, h=1e-3 * max(abs(xs[i]), 1e-2))
    ga, gb = g(a), g(b)
    if a == lo and ga <= 0:
        return lo, f(lo)
    if ga > 0 > gb:
        x = brentq(g, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        return x, f(x)
    return xs[i], vals[i]


def numeric_block_max(block, ch, bf, aux, cfg, index=None, restarts=20, rng=None):
    """Maximize the surrogate over one block with everything else fixed.

    ``block`` is one of ``precoder_col`` (column ``index``, unconstrained),
    ``combiner``, ``xi_c``, ``xi_s`` or ``mu``.  Complex blocks use Newton
    ascent on finite differences from ``restarts`` random starts; ``mu`` uses a
    zooming grid per component.  Returns the best block value found.
    """
    if block == "mu":
        mu = aux.mu.copy()
        for k in range(mu.shape[0]):
            def f(m, k=k):
                trial = mu.copy()
                trial[k] = m
                return surrogate(ch, bf, aux.replace(mu=trial), cfg)
            mu[k], _ = _grid_max_1d(f)
        return mu

    if block == "precoder_col" and index is None:
        raise ValueError("precoder_col needs a column index")
    n, current, put = _block_setter(block, bf, aux, index)
    rng = np.random.default_rng(0) if rng is None else rng

    def f(z):
        return surrogate(ch, *put(z[:n] + 1j * z[n:]), cfg)

    scale = max(np.linalg.norm(current), 1.0)
    best_z, best_f = None, -np.inf
    for _ in range(restarts):
        z0 = rng.standard_normal(2 * n) * scale
        z, fz = _newton_ascent(f, z0)
        if fz > best_f:
            best_z, best_f = z, fz
    return best_z[:n] + 1j * best_z[n:]


# ---------------------------------------------------------------------------
# exhaustive layout search


def exhaustive_layout_search(scen, cfg, grids, solver_opts=None, max_combos=10_000):
    """Converge beamforming on every grid placement and return ``(layout, objective)``."""
    from .fp_solver import initial_state, run_beamforming_ao

    tx = [c for c in itertools.combinations(range(len(grids.sx)), cfg.n_tx)
          if cfg.n_tx < 2 or np.min(np.diff(grids.sx[list(c)])) >= cfg.min_spacing - 1e-12]
    rx = [c for c in itertools.combinations(range(len(grids.sy)), cfg.n_rx)
          if cfg.n_rx < 2 or np.min(np.diff(grids.sy[list(c)])) >= cfg.min_spacing - 1e-12]
    if len(tx) * len(rx) > max_combos:
        raise ValueError(f"{len(tx) * len(rx)} combinations exceed the bound {max_combos}")
    best = (None, -np.inf)
    for ci in tx:
        for cj in rx:
            layout = AntennaLayout(grids.sx[list(ci)], grids.sy[list(cj)])
            ch = build_channels(layout, scen, cfg)
            state = run_beamforming_ao(ch, cfg, solver_opts, init=initial_state(ch, cfg))
            val = objective(ch, state.bf, cfg)
            if val > best[1]:
                best = (layout, val)
    return best

