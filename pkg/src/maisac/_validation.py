"""Input validation helpers and the package's exception types."""

import numbers

import numpy as np


class ConfigError(ValueError):
    """Invalid static configuration."""


class GeometryError(ValueError):
    """Antenna geometry that cannot be evaluated (e.g. negative distance radicand)."""


class InfeasibleLayoutError(ValueError):
    """Antenna count and minimum spacing do not fit inside a movable range."""


class BisectionError(RuntimeError):
    """The dual-variable bracket could not be expanded to meet the power budget."""


class NumericalRankError(np.linalg.LinAlgError):
    """A linear system expected to be positive definite was singular."""


def check_positive(value, name):
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value <= 0:
        raise ConfigError(f"{name} must be a positive finite number, got {value!r}")
    return float(value)


def check_count(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < minimum:
        raise ConfigError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_range(value, name):
    lo, hi = (float(v) for v in value)
    if not (np.isfinite(lo) and np.isfinite(hi)) or hi < lo:
        raise ConfigError(f"{name} must be a finite interval [lo, hi] with lo <= hi, got {value!r}")
    return lo, hi


def check_fits(n, bounds, d0, name="range"):
    """Reject an antenna count that cannot be placed with spacing ``d0`` inside ``bounds``."""
    lo, hi = bounds
    if (n - 1) * d0 > (hi - lo) + 1e-12 * max(1.0, abs(hi)):
        raise InfeasibleLayoutError(
            f"{n} antennas with spacing {d0} do not fit in {name} [{lo}, {hi}]"
        )


def as_real_vector(x, name, size=None):
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if size is not None and arr.shape[0] != size:
        raise ValueError(f"{name} must have length {size}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def as_complex_array(x, name, shape=None):
    arr = np.asarray(x, dtype=complex)
    if shape is not None and arr.shape != tuple(shape):
        raise ValueError(f"{name} must have shape {tuple(shape)}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr
