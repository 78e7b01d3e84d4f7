"""Seeded sweeps over transmit power, movable range and objective weights.

Every (antenna config, swept value, seed, method) cell is independent.  All
methods in a sweep see the same scenario for a given seed, which the
``scenario_hash`` column makes checkable.  Results are written as a CSV table
in canonical order plus a JSON summary of per-cell means and standard errors;
wall-clock times go to a separate file so the table itself is reproducible
byte for byte.

Swept values are stored in natural units: ``dBm`` for power, multiples of the
wavelength for ranges and the array separation, and the communication weight
for the weight study.
"""

import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .estimators import METHODS
from .scenario import ScenarioConfig, dbm_to_watts, sample_scenario

logger = logging.getLogger(__name__)

WORKERS_ENV = "MAISAC_WORKERS"
STUDIES = ("power", "range", "weights")
METHOD_ORDER = ("fpa", "gama", "cfgs")

_LAM = 0.01
PROFILES = {
    "desk": dict(n_tx=4, n_rx=2, n_users=2, n_clutters=2, n_paths=12, wavelength=_LAM,
                 tx_range=(0.0, 6 * _LAM), rx_range=(0.0, 4 * _LAM),
                 power_budget=dbm_to_watts(30.0), array_separation=20 * _LAM),
    "full": dict(n_tx=8, n_rx=4, n_users=4, n_clutters=3, n_paths=12, wavelength=_LAM,
                  tx_range=(0.0, 12 * _LAM), rx_range=(0.0, 8 * _LAM),
                  power_budget=dbm_to_watts(30.0), array_separation=20 * _LAM),
}

# default sweep grids per profile; the secondary grid is Y_max (range) or r0 (weights)
DEFAULT_GRIDS = {
    "desk": {
        "power": ((20.0, 30.0, 40.0), ()),
        "range": ((6.0, 8.0, 10.0), (4.0,)),
        "weights": ((0.1, 0.3, 0.5, 0.7, 0.9), (10.0, 20.0, 40.0)),
        "antennas": ((4, 2),),
        "n_seeds": 20,
    },
    "full": {
        "power": ((20.0, 25.0, 30.0, 35.0, 40.0), ()),
        "range": ((8.0, 10.0, 12.0, 14.0), (6.0, 8.0, 10.0)),
        "weights": ((0.1, 0.3, 0.5, 0.7, 0.9), (10.0, 20.0, 40.0)),
        "antennas": ((8, 4), (10, 4), (8, 6)),
        "n_seeds": 20,
    },
}


def profile_config(name, **overrides):
    """Base :class:`ScenarioConfig` of a named profile with optional field overrides."""
    if name not in PROFILES:
        raise ValueError(f"unknown profile {name!r}; expected one of {sorted(PROFILES)}")
    data = dict(PROFILES[name])
    data.update(overrides)
    return ScenarioConfig(**data)


@dataclass(frozen=True)
class SweepSpec:
    """One study: swept grid, antenna counts, seeds and methods.

    An empty ``antenna_configs`` uses the counts of ``base_config``.  Seeds are
    ``first_seed .. first_seed + n_seeds - 1`` unless ``seeds`` lists them.
    ``method_params`` maps a method name to estimator keyword arguments.
    """

    study: str
    grid: tuple
    base_config: ScenarioConfig = field(default_factory=lambda: profile_config("desk"))
    antenna_configs: tuple = ()
    n_seeds: int = 20
    methods: tuple = METHOD_ORDER
    secondary: tuple = ()
    first_seed: int = 0
    seeds: tuple = None
    method_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.study not in STUDIES:
            raise ValueError(f"unknown study {self.study!r}; expected one of {STUDIES}")
        if len(self.grid) == 0:
            raise ValueError("sweep grid must not be empty")
        if self.seeds is None and self.n_seeds < 1:
            raise ValueError("n_seeds must be at least 1")
        if self.seeds is not None and len(self.seeds) == 0:
            raise ValueError("seed list must not be empty")
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ValueError(f"unknown methods {bad}; expected a subset of {METHOD_ORDER}")
        if self.study == "weights" and any(not 0.0 <= v <= 1.0 for v in self.grid):
            raise ValueError("communication weights must lie in [0, 1]")

    def seed_list(self):
        if self.seeds is not None:
            return tuple(int(s) for s in self.seeds)
        return tuple(range(self.first_seed, self.first_seed + self.n_seeds))


@dataclass
class RunRecord:
    """Outcome of one cell.  ``error`` is empty for successful runs."""

    study: str
    method: str
    n_tx: int
    n_rx: int
    value: float
    value2: float
    seed: int
    objective: float
    comm_sum_rate: float
    sensing_mi: float
    converged: bool
    scenario_hash: str
    error: str = ""
    wall_time: float = 0.0

    @property
    def ok(self):
        return not self.error


TABLE_COLUMNS = ("study", "method", "n_tx", "n_rx", "value", "value2", "seed", "objective",
                 "comm_sum_rate", "sensing_mi", "converged", "scenario_hash", "error")


@dataclass(frozen=True)
class Cell:
    study: str
    method: str
    value: float
    value2: float
    seed: int
    config: ScenarioConfig
    params: dict
    trace_dir: str = None


def cell_config(study, base, n_tx, n_rx, value, value2, seed):
    """Scenario config of one cell: ``base`` with the swept quantities applied."""
    lam = base.wavelength
    changes = {"n_tx": n_tx, "n_rx": n_rx, "seed": seed}
    if study == "power":
        changes["power_budget"] = float(dbm_to_watts(value))
    elif study == "range":
        changes["tx_range"] = (base.tx_range[0], base.tx_range[0] + value * lam)
        if value2 is not None:
            changes["rx_range"] = (base.rx_range[0], base.rx_range[0] + value2 * lam)
    else:
        changes["weight_comm"] = float(value)
        changes["weight_sense"] = 1.0 - float(value)
        if value2 is not None:
            changes["array_separation"] = value2 * lam
    return base.replace(**changes)


def build_cells(spec, trace_dir=None):
    """Expand a sweep into independent cells (antenna config, value, secondary, seed, method)."""
    base = spec.base_config
    antennas = spec.antenna_configs or ((base.n_tx, base.n_rx),)
    secondary = spec.secondary or (None,)
    cells = []
    for n_tx, n_rx in antennas:
        for value in spec.grid:
            for value2 in secondary:
                for seed in spec.seed_list():
                    cfg = cell_config(spec.study, base, n_tx, n_rx, value, value2, seed)
                    for method in spec.methods:
                        cells.append(Cell(spec.study, method, float(value),
                                          None if value2 is None else float(value2), seed, cfg,
                                          dict(spec.method_params.get(method, {})), trace_dir))
    return cells


def fit_cell(cell):
    """Run one cell and return ``(record, estimator)``.

    Failures are captured in the record (``estimator`` is then ``None``)
    instead of raised, so a sweep always completes.
    """
    cfg = cell.config
    start = time.perf_counter()
    scen_hash, est = "", None
    try:
        scen = sample_scenario(cfg)
        scen_hash = scen.digest()
        est = METHODS[cell.method](**cell.params).fit(scen, cfg)
        rec = RunRecord(cell.study, cell.method, cfg.n_tx, cfg.n_rx, cell.value, cell.value2,
                        cell.seed, est.objective_, est.comm_sum_rate_, est.sensing_mi_,
                        bool(est.converged_), scen_hash)
        if cell.trace_dir is not None:
            write_run_trace(est.trace_, Path(cell.trace_dir) / trace_name(rec))
    except Exception as exc:  # a failed run must not abort the sweep
        logger.warning("run %s/%s seed %d failed: %s", cell.study, cell.method, cell.seed, exc)
        nan = float("nan")
        est = None
        rec = RunRecord(cell.study, cell.method, cfg.n_tx, cfg.n_rx, cell.value, cell.value2,
                        cell.seed, nan, nan, nan, False, scen_hash,
                        error=f"{type(exc).__name__}: {exc}")
    rec.wall_time = time.perf_counter() - start
    return rec, est


def run_cell(cell):
    return fit_cell(cell)[0]


def worker_count(default=1):
    """Parallelism degree from the ``MAISAC_WORKERS`` environment variable."""
    raw = os.environ.get(WORKERS_ENV, "").strip()
    if not raw:
        return default
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}")
    return n


def record_key(rec):
    v2 = -math.inf if rec.value2 is None else rec.value2
    return (rec.study, rec.n_tx, rec.n_rx, rec.value, v2, rec.seed, METHOD_ORDER.index(rec.method))


def run_cells(cells, workers=None):
    """Run cells serially or in a process pool; records come back in canonical order."""
    workers = worker_count() if workers is None else workers
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(run_cell, cells))
    else:
        records = [run_cell(c) for c in cells]
    return sorted(records, key=record_key)


def _run_study(spec, study, trace_dir, workers):
    if spec.study != study:
        raise ValueError(f"expected a {study} sweep, got study={spec.study!r}")
    return run_cells(build_cells(spec, trace_dir), workers)


def run_power_sweep(spec, trace_dir=None, workers=None):
    """Objective versus transmit power (``grid`` in dBm)."""
    return _run_study(spec, "power", trace_dir, workers)


def run_range_sweep(spec, trace_dir=None, workers=None):
    """Objective versus Tx movable range (``grid``) and Rx range (``secondary``), in wavelengths."""
    return _run_study(spec, "range", trace_dir, workers)


def run_weight_sweep(spec, trace_dir=None, workers=None):
    """Rate and sensing trade-off versus the communication weight (``grid``) and array
    separation in wavelengths (``secondary``)."""
    return _run_study(spec, "weights", trace_dir, workers)


SWEEPS = {"power": run_power_sweep, "range": run_range_sweep, "weights": run_weight_sweep}


# ---------------------------------------------------------------------------
# output


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def trace_name(rec):
    v2 = "" if rec.value2 is None else f"_{rec.value2!r}"
    return f"trace_{rec.study}_{rec.method}_{rec.n_tx}x{rec.n_rx}_{rec.value!r}{v2}_seed{rec.seed}.csv"


def write_run_trace(rows, path):
    cols = []
    for row in rows:
        cols.extend(k for k in row if k not in cols)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        for row in rows:
            writer.writerow([_fmt(row.get(c)) for c in cols])


def _mean_sem(values):
    arr = np.asarray([v for v in values if np.isfinite(v)], dtype=float)
    if arr.size == 0:
        return None, None
    sem = float(np.std(arr, ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else None
    return float(np.mean(arr)), sem


def summarize(records):
    """Per-cell means and standard errors over seeds, in canonical order."""
    groups = {}
    for rec in sorted(records, key=record_key):
        key = (rec.study, rec.method, rec.n_tx, rec.n_rx, rec.value, rec.value2)
        groups.setdefault(key, []).append(rec)
    out = []
    for (study, method, n_tx, n_rx, value, value2), recs in groups.items():
        ok = [r for r in recs if r.ok]
        entry = {"study": study, "method": method, "n_tx": n_tx, "n_rx": n_rx,
                 "value": value, "value2": value2, "n_runs": len(recs),
                 "n_failed": len(recs) - len(ok)}
        for name in ("objective", "comm_sum_rate", "sensing_mi"):
            mean, sem = _mean_sem([getattr(r, name) for r in ok])
            entry[f"{name}_mean"] = mean
            entry[f"{name}_sem"] = sem
        out.append(entry)
    return out


def emit_results(records, path):
    """Write ``results.csv``, ``summary.json`` and ``timing.csv`` into directory ``path``.

    The table has one row per record with columns :data:`TABLE_COLUMNS`;
    floats use ``repr`` so values round-trip exactly.  Returns the file paths.
    """
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    records = sorted(records, key=record_key)
    table = out / "results.csv"
    with open(table, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TABLE_COLUMNS)
        for rec in records:
            writer.writerow([_fmt(getattr(rec, c)) for c in TABLE_COLUMNS])
    summary = out / "summary.json"
    with open(summary, "w", encoding="utf-8") as fh:
        json.dump({"cells": summarize(records),
                   "n_records": len(records),
                   "n_failed": sum(not r.ok for r in records)}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    timing = out / "timing.csv"
    with open(timing, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("study", "method", "n_tx", "n_rx", "value", "value2", "seed", "wall_time"))
        for rec in records:
            writer.writerow([_fmt(getattr(rec, c)) for c in
                             ("study", "method", "n_tx", "n_rx", "value", "value2", "seed", "wall_time")])
    return {"table": table, "summary": summary, "timing": timing}


def read_results(path):
    """Load a ``results.csv`` written by :func:`emit_results` back into records."""
    def num(s):
        return None if s == "" else float(s)

    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            records.append(RunRecord(
                study=row["study"], method=row["method"], n_tx=int(row["n_tx"]),
                n_rx=int(row["n_rx"]), value=float(row["value"]), value2=num(row["value2"]),
                seed=int(row["seed"]), objective=float(row["objective"]),
                comm_sum_rate=float(row["comm_sum_rate"]), sensing_mi=float(row["sensing_mi"]),
                converged=row["converged"] == "1", scenario_hash=row["scenario_hash"],
                error=row["error"]))
    return records

