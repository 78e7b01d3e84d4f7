"""Command-line entry point: ``maisac {power,range,weights,single}``.

Sweeps write ``results.csv``, ``summary.json`` and ``timing.csv`` to the output
directory.  The exit status is 1 when any run failed, 2 on bad arguments.
Set ``MAISAC_WORKERS`` to run cells in parallel processes.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from . import experiments as ex
from .estimators import METHODS
from .scenario import ScenarioConfig, dbm_to_watts, watts_to_dbm


def _int_list(text):
    """Parse ``"0-4,7,9"`` into a tuple of integers."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            lo, hi = int(lo), int(hi)
            if hi < lo:
                raise argparse.ArgumentTypeError(f"empty seed range {part!r}")
            out.extend(range(lo, hi + 1))
        else:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError("seed list is empty")
    return tuple(out)


def _float_list(text):
    try:
        vals = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    if not vals:
        raise argparse.ArgumentTypeError("value list is empty")
    return vals


def _methods(text):
    vals = tuple(v.strip() for v in text.split(",") if v.strip())
    bad = [v for v in vals if v not in METHODS]
    if bad or not vals:
        raise argparse.ArgumentTypeError(f"unknown methods {bad}; choose from {sorted(METHODS)}")
    return vals


def _antennas(text):
    out = []
    for part in text.split(","):
        try:
            n_tx, n_rx = part.lower().split("x")
            out.append((int(n_tx), int(n_rx)))
        except ValueError:
            raise argparse.ArgumentTypeError(f"antenna config {part!r} is not of the form NTxNR") from None
    return tuple(out)


def build_parser():
    parser = argparse.ArgumentParser(prog="maisac", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--profile", choices=sorted(ex.PROFILES), default="desk",
                        help="base system parameters and default grids")
    common.add_argument("--config", type=Path,
                        help="JSON file of ScenarioConfig fields overriding the profile")
    common.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    common.add_argument("--seeds", type=_int_list, help="seed list, e.g. 0-19 or 0,3,5")
    common.add_argument("--methods", type=_methods, default=ex.METHOD_ORDER,
                        help="comma-separated subset of fpa,gama,cfgs")
    common.add_argument("--combo-cap", type=int, default=2000,
                        help="maximum number of coarse-grid placements evaluated")
    common.add_argument("--traces", action="store_true", help="also write per-run trace files")
    common.add_argument("-v", "--verbose", action="store_true")

    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("power", "objective versus transmit power (dBm)"),
                            ("range", "objective versus Tx movable range (wavelengths)"),
                            ("weights", "rate and sensing trade-off versus the communication weight")):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("--grid", type=_float_list, help="swept values, comma-separated")
        p.add_argument("--secondary", type=_float_list,
                       help="Rx range in wavelengths (range) or array separation in wavelengths (weights)")
        p.add_argument("--antennas", type=_antennas, help="antenna counts, e.g. 8x4,10x4")

    p = sub.add_parser("single", parents=[common], help="optimize one scenario and save the solution")
    p.add_argument("--power-dbm", type=float, help="transmit power budget in dBm")
    return parser


def _base_config(args):
    base = ex.profile_config(args.profile)
    if args.config is None:
        return base
    with open(args.config, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError("config file must hold a JSON object")
    merged = base.to_dict()
    merged.update(data)
    return ScenarioConfig.from_dict(merged)


def _method_params(args):
    return {"cfgs": {"combo_cap": args.combo_cap}}


def _run_sweep(args):
    defaults = ex.DEFAULT_GRIDS[args.profile]
    grid, secondary = defaults[args.command]
    base = _base_config(args)
    spec = ex.SweepSpec(
        study=args.command,
        grid=args.grid or grid,
        base_config=base,
        antenna_configs=args.antennas or defaults["antennas"],
        n_seeds=defaults["n_seeds"],
        seeds=args.seeds,
        methods=args.methods,
        secondary=args.secondary or secondary,
        method_params=_method_params(args),
    )
    args.out.mkdir(parents=True, exist_ok=True)
    trace_dir = None
    if args.traces:
        trace_dir = args.out / "traces"
        trace_dir.mkdir(exist_ok=True)
    records = ex.SWEEPS[args.command](spec, trace_dir=trace_dir)
    paths = ex.emit_results(records, args.out)
    failed = sum(not r.ok for r in records)
    print(f"{len(records)} runs, {failed} failed; table written to {paths['table']}")
    return 1 if failed else 0


def _run_single(args):
    base = _base_config(args)
    if args.power_dbm is not None:
        base = base.replace(power_budget=dbm_to_watts(args.power_dbm))
    power_dbm = float(watts_to_dbm(base.power_budget))
    args.out.mkdir(parents=True, exist_ok=True)
    records = []
    for seed in args.seeds or (base.seed,):
        cfg = base.replace(seed=seed)
        for method in args.methods:
            cell = ex.Cell("single", method, power_dbm, None, seed, cfg,
                           _method_params(args).get(method, {}),
                           str(args.out) if args.traces else None)
            rec, est = ex.fit_cell(cell)
            records.append(rec)
            if est is not None:
                solution = est.solution_.to_dict()
                solution.update(comm_sum_rate=est.comm_sum_rate_, sensing_mi=est.sensing_mi_,
                                config=cfg.to_dict(), scenario_hash=rec.scenario_hash)
                with open(args.out / f"solution_{method}_seed{seed}.json", "w", encoding="utf-8") as fh:
                    json.dump(solution, fh, indent=2, sort_keys=True)
                    fh.write("\n")
                print(f"seed {seed} {method}: objective {rec.objective:.6f}")
            else:
                print(f"seed {seed} {method}: failed ({rec.error})")
    ex.emit_results(records, args.out)
    return 1 if any(not r.ok for r in records) else 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "single":
            return _run_single(args)
        return _run_sweep(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
