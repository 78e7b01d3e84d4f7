"""Static configuration, unit conversion and random environment sampling.

Random numbers come from the Philox4x64-10 counter-based generator keyed by
``(seed, stream)``.  Uniform doubles are ``(u64 >> 11) * 2**-53`` (numpy's
``Generator.random``), and standard complex Gaussians are produced by
Box-Muller from consecutive uniform pairs ``(u1, u2)``::

    r = sqrt(-2 ln(1 - u1)),  z = r (cos 2 pi u2 + j sin 2 pi u2) / sqrt(2)

so any implementation of Philox can reproduce the draws bit for bit.

Draw order inside :func:`sample_scenario` (stream 0):

1. user path angles, ``K * L_p`` uniforms scaled to ``[0, pi]`` (row major)
2. user path gains, ``K * L_p`` complex Gaussians
3. user distances, ``K`` uniforms on ``[50, 80]`` m
4. target distance, one uniform on ``[10, 20]`` m
5. clutter angles, ``C`` uniforms on ``[0, pi]``
6. clutter distances, ``C`` uniforms on ``[10, 20]`` m
7. target RCS, one complex Gaussian
8. clutter RCS, ``C`` complex Gaussians
"""

import dataclasses
import hashlib
import json
import math
import re
from dataclasses import dataclass, field

import numpy as np

from ._validation import (
    ConfigError,
    check_count,
    check_fits,
    check_positive,
    check_range,
)

USER_DISTANCE_RANGE = (50.0, 80.0)
TARGET_DISTANCE_RANGE = (10.0, 20.0)
CLUTTER_DISTANCE_RANGE = TARGET_DISTANCE_RANGE
TARGET_ANGLE = math.pi / 4

# independent Philox streams per consumer
STREAM_SCENARIO = 0
STREAM_SOLVER_INIT = 1
STREAM_RANDOM_LAYOUT = 2
STREAM_COMBO_SUBSAMPLE = 3


def dbm_to_watts(p):
    """Convert a power level in dBm to watts."""
    if np.ndim(p):
        return 10.0 ** ((np.asarray(p, dtype=float) - 30.0) / 10.0)
    return 10.0 ** ((float(p) - 30.0) / 10.0)


def watts_to_dbm(p):
    return 10.0 * math.log10(p) + 30.0


def friis_path_loss(d, g, lam):
    """Free-space path loss ``g * lam / (4 pi d)^2``.

    The wavelength enters linearly (inside the square root of the amplitude),
    which is how the model's loss expression evaluates; it is not the textbook
    ``g (lam / 4 pi d)^2``.
    """
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("path-loss distance must be positive")
    out = g * lam / (4.0 * np.pi * d) ** 2
    return float(out) if out.ndim == 0 else out


def philox(seed, stream=STREAM_SCENARIO):
    """Seeded Philox4x64 generator for one named stream."""
    key = np.array([int(seed) & 0xFFFFFFFFFFFFFFFF, int(stream)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def complex_normal(rng, n):
    """``n`` i.i.d. CN(0, 1) samples by Box-Muller."""
    u = rng.random(2 * n).reshape(n, 2)
    radius = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
    phase = 2.0 * np.pi * u[:, 1]
    return radius * (np.cos(phase) + 1j * np.sin(phase)) / np.sqrt(2.0)


@dataclass(frozen=True)
class ScenarioConfig:
    """Static system parameters (SI units; powers in watts)."""

    n_tx: int = 8
    n_rx: int = 4
    n_users: int = 4
    n_clutters: int = 3
    n_paths: int = 12
    wavelength: float = 0.01
    tx_range: tuple = (0.0, 0.12)
    rx_range: tuple = (0.0, 0.08)
    min_spacing: float = 0.005
    power_budget: float = 1.0
    noise_power: float = 1e-9
    weight_comm: float = 0.5
    weight_sense: float = 0.5
    array_separation: float = 0.2
    array_angle: float = math.pi / 2
    antenna_gain: float = 1.0
    seed: int = 0

    def __post_init__(self):
        check_count(self.n_tx, "n_tx")
        check_count(self.n_rx, "n_rx")
        check_count(self.n_users, "n_users")
        check_count(self.n_clutters, "n_clutters", minimum=0)
        check_count(self.n_paths, "n_paths")
        check_count(self.seed, "seed", minimum=0)
        for name in ("wavelength", "min_spacing", "power_budget", "noise_power",
                     "array_separation", "antenna_gain"):
            check_positive(getattr(self, name), name)
        object.__setattr__(self, "tx_range", check_range(self.tx_range, "tx_range"))
        object.__setattr__(self, "rx_range", check_range(self.rx_range, "rx_range"))
        wc, ws = float(self.weight_comm), float(self.weight_sense)
        if not (0.0 <= wc <= 1.0 and 0.0 <= ws <= 1.0) or abs(wc + ws - 1.0) > 1e-12:
            raise ConfigError(f"weights must lie in [0, 1] and sum to 1, got {wc}, {ws}")
        if not np.isfinite(self.array_angle):
            raise ConfigError("array_angle must be finite")
        try:
            check_fits(self.n_tx, self.tx_range, self.min_spacing, "tx_range")
            check_fits(self.n_rx, self.rx_range, self.min_spacing, "rx_range")
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        out = dataclasses.asdict(self)
        out["tx_range"] = list(self.tx_range)
        out["rx_range"] = list(self.rx_range)
        return out

    @classmethod
    def from_dict(cls, data):
        """Build from a mapping of field names.

        Power fields accept watts or a string such as ``"30 dBm"``; length fields
        accept meters or a multiple of the wavelength such as ``"12 lambda"``.
        Unknown keys are rejected.
        """
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        lam = _parse_length(data.get("wavelength", cls.wavelength), None)
        kwargs = {}
        for key, value in data.items():
            if key in ("power_budget", "noise_power"):
                kwargs[key] = _parse_power(value)
            elif key in ("tx_range", "rx_range"):
                kwargs[key] = tuple(_parse_length(v, lam) for v in value)
            elif key in ("min_spacing", "array_separation", "wavelength"):
                kwargs[key] = _parse_length(value, lam)
            else:
                kwargs[key] = value
        return cls(**kwargs)


_UNIT_RE = re.compile(r"^\s*([-+0-9.eE]+)\s*([A-Za-zλ]*)\s*$")


def _parse_power(value):
    if isinstance(value, str):
        m = _UNIT_RE.match(value)
        if not m or m.group(2).lower() not in ("dbm", "w", ""):
            raise ConfigError(f"cannot parse power {value!r}")
        num = float(m.group(1))
        return dbm_to_watts(num) if m.group(2).lower() == "dbm" else num
    return float(value)


def _parse_length(value, lam):
    if isinstance(value, str):
        m = _UNIT_RE.match(value)
        unit = m.group(2).lower() if m else None
        if unit in ("lambda", "λ") and lam is not None:
            return float(m.group(1)) * lam
        if unit in ("m", ""):
            return float(m.group(1))
        raise ConfigError(f"cannot parse length {value!r}")
    return float(value)


def load_config(path):
    """Read a JSON config file into a :class:`ScenarioConfig`."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return ScenarioConfig.from_dict(data)


@dataclass(frozen=True, eq=False)
class Scenario:
    """One sampled environment around the base station."""

    user_angles: np.ndarray
    user_gains: np.ndarray
    user_distances: np.ndarray
    target_angle: float
    target_distance: float
    clutter_angles: np.ndarray
    clutter_distances: np.ndarray
    rcs_target: complex
    rcs_clutters: np.ndarray
    path_loss_users: np.ndarray
    path_loss_target: float
    path_loss_clutters: np.ndarray
    seed: int = field(default=0)

    @property
    def n_users(self):
        return self.user_angles.shape[0]

    @property
    def n_paths(self):
        return self.user_angles.shape[1]

    @property
    def n_clutters(self):
        return self.clutter_angles.shape[0]

    def to_dict(self):
        def cplx(a):
            a = np.asarray(a)
            return np.stack([a.real, a.imag], axis=-1).tolist()

        return {
            "seed": self.seed,
            "user_angles": self.user_angles.tolist(),
            "user_gains": cplx(self.user_gains),
            "user_distances": self.user_distances.tolist(),
            "target_angle": self.target_angle,
            "target_distance": self.target_distance,
            "clutter_angles": self.clutter_angles.tolist(),
            "clutter_distances": self.clutter_distances.tolist(),
            "rcs_target": cplx(self.rcs_target),
            "rcs_clutters": cplx(self.rcs_clutters),
            "path_loss_users": self.path_loss_users.tolist(),
            "path_loss_target": self.path_loss_target,
            "path_loss_clutters": self.path_loss_clutters.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        def cplx(v):
            a = np.asarray(v, dtype=float)
            return a[..., 0] + 1j * a[..., 1]

        n_clutters = len(data["clutter_angles"])
        return cls(
            user_angles=np.asarray(data["user_angles"], dtype=float),
            user_gains=cplx(data["user_gains"]),
            user_distances=np.asarray(data["user_distances"], dtype=float),
            target_angle=float(data["target_angle"]),
            target_distance=float(data["target_distance"]),
            clutter_angles=np.asarray(data["clutter_angles"], dtype=float).reshape(n_clutters),
            clutter_distances=np.asarray(data["clutter_distances"], dtype=float).reshape(n_clutters),
            rcs_target=complex(cplx(data["rcs_target"])),
            rcs_clutters=cplx(data["rcs_clutters"]).reshape(n_clutters) if n_clutters else np.zeros(0, complex),
            path_loss_users=np.asarray(data["path_loss_users"], dtype=float),
            path_loss_target=float(data["path_loss_target"]),
            path_loss_clutters=np.asarray(data["path_loss_clutters"], dtype=float).reshape(n_clutters),
            seed=int(data.get("seed", 0)),
        )

    def digest(self):
        """Short SHA-256 over the exported record, used to audit paired runs."""
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def sample_scenario(cfg):
    """Draw one environment for ``cfg`` (deterministic in ``cfg.seed``)."""
    if not isinstance(cfg, ScenarioConfig):
        raise ConfigError("sample_scenario expects a ScenarioConfig")
    rng = philox(cfg.seed, STREAM_SCENARIO)
    K, L, C = cfg.n_users, cfg.n_paths, cfg.n_clutters

    user_angles = np.pi * rng.random(K * L).reshape(K, L)
    user_gains = complex_normal(rng, K * L).reshape(K, L)
    lo, hi = USER_DISTANCE_RANGE
    user_distances = lo + (hi - lo) * rng.random(K)
    lo, hi = TARGET_DISTANCE_RANGE
    target_distance = float(lo + (hi - lo) * rng.random())
    clutter_angles = np.pi * rng.random(C)
    lo, hi = CLUTTER_DISTANCE_RANGE
    clutter_distances = lo + (hi - lo) * rng.random(C)
    rcs_target = complex(complex_normal(rng, 1)[0])
    rcs_clutters = complex_normal(rng, C)

    g, lam = cfg.antenna_gain, cfg.wavelength
    return Scenario(
        user_angles=user_angles,
        user_gains=user_gains,
        user_distances=user_distances,
        target_angle=TARGET_ANGLE,
        target_distance=target_distance,
        clutter_angles=clutter_angles,
        clutter_distances=clutter_distances,
        rcs_target=rcs_target,
        rcs_clutters=rcs_clutters,
        path_loss_users=np.atleast_1d(friis_path_loss(user_distances, g, lam)),
        path_loss_target=friis_path_loss(target_distance, g, lam),
        path_loss_clutters=np.atleast_1d(friis_path_loss(clutter_distances, g, lam)),
        seed=cfg.seed,
    )
