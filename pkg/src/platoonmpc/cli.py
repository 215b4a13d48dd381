"""Command-line front end: scenario runs, trust-horizon sweeps, safe-set export.

Every subcommand writes delimited data plus rendered figures into the output
directory, together with a manifest recording the resolved configuration, its
hash, and wall-clock timings.  Exit codes: 0 success, 1 runtime failure, 2
configuration or usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .safeset import BrakingSpec, SafeSetFamily, build_safe_set
from .sim import measure_throughput, run, sweep_trust, write_sweep_csv


def _braking_spec(cfg: RunConfig) -> BrakingSpec:
    return BrakingSpec(a_min=cfg.mpc.max_decel, h_min=cfg.mpc.h_min,
                       dt=cfg.scenario.dt, v_max=cfg.mpc.v_max)


def _write_manifest(out_dir: Path, command: str, cfg: RunConfig,
                    outputs: list[Path], timings: dict) -> Path:
    path = out_dir / "manifest.json"
    payload = {
        "command": command,
        "package_version": __version__,
        "config_digest": cfg.digest(),
        "outputs": [str(p) for p in outputs],
        "timings": timings,
        "config": cfg.to_dict(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
    return path


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.trust_horizon is not None:
        try:
            cfg = RunConfig(vehicle=cfg.vehicle,
                            mpc=cfg.mpc.with_trust_horizon(args.trust_horizon),
                            scenario=cfg.scenario,
                            sweep_trust_horizons=cfg.sweep_trust_horizons)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    timings = {}
    t0 = time.perf_counter()
    family = SafeSetFamily(_braking_spec(cfg))
    timings["safe_sets_s"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    log = run(cfg.scenario, cfg.vehicle, cfg.mpc, family=family)
    timings["simulation_s"] = time.perf_counter() - t0

    outputs = []
    traj = out_dir / "trajectory.csv"
    log.to_csv(traj)
    outputs.append(traj)
    ctrl = out_dir / "controllers.csv"
    log.controllers_csv(ctrl)
    outputs.append(ctrl)
    msgs = out_dir / "messages.csv"
    log.bus.export_log(msgs)
    outputs.append(msgs)
    try:
        res = measure_throughput(log, cfg.scenario.measure_position,
                                 cfg.scenario.n_vehicles)
        print(f"throughput: {res.vehicles_per_hour:.1f} veh/h "
              f"(leader {res.t_leader:.2f}s, last {res.t_last:.2f}s)")
    except ValueError as exc:
        print(f"throughput not measurable: {exc}", file=sys.stderr)
    if not args.no_figures:
        from .plots import save_run_figure
        fig = out_dir / "trajectories.png"
        save_run_figure(log, cfg.mpc.h_des, cfg.mpc.h_min, fig)
        outputs.append(fig)
    outputs.append(_write_manifest(out_dir, "run", cfg, outputs, timings))
    print(f"wrote {len(outputs)} files to {out_dir}")
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    trust_values = (list(args.trust_horizon) if args.trust_horizon
                    else list(cfg.sweep_trust_horizons))
    for f in trust_values:
        if not 0 <= f <= cfg.mpc.horizon:
            raise ConfigError(f"trust horizon {f} outside [0, {cfg.mpc.horizon}]")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    timings = {}
    t0 = time.perf_counter()
    family = SafeSetFamily(_braking_spec(cfg))
    timings["safe_sets_s"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    results, _ = sweep_trust(cfg.scenario, cfg.vehicle, cfg.mpc, trust_values,
                             family=family)
    timings["sweep_s"] = time.perf_counter() - t0
    for f, res in results:
        print(f"F={f:3d}: {res.vehicles_per_hour:8.2f} veh/h")

    outputs = []
    table = out_dir / "sweep.csv"
    write_sweep_csv(results, table)
    outputs.append(table)
    if not args.no_figures:
        from .plots import save_sweep_figure
        fig = out_dir / "throughput_vs_trust.png"
        save_sweep_figure(results, fig)
        outputs.append(fig)
    outputs.append(_write_manifest(out_dir, "sweep", cfg, outputs, timings))
    print(f"wrote {len(outputs)} files to {out_dir}")
    return 0


def cmd_safeset(args) -> int:
    cfg = load_config(args.config)
    v0 = args.v0
    if not cfg.mpc.v_min <= v0 <= cfg.mpc.v_max:
        raise ConfigError(f"v0 = {v0} outside the velocity range "
                          f"[{cfg.mpc.v_min}, {cfg.mpc.v_max}]")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    sset = build_safe_set(v0, _braking_spec(cfg))
    timings = {"construction_s": time.perf_counter() - t0}

    outputs = []
    table = out_dir / f"safeset_v{v0:g}.csv"
    with open(table, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["v", "h_boundary"])
        for v, h in sset.breakpoints:
            writer.writerow([repr(float(v)), repr(float(h))])
    outputs.append(table)
    print(f"safe set for v0 = {v0:g}: {len(sset.breakpoints)} boundary points, "
          f"stopping steps {sset.k_s}")
    if not args.no_figures:
        from .plots import save_safeset_figure
        fig = out_dir / "safeset.png"
        save_safeset_figure(sset, fig)
        outputs.append(fig)
    outputs.append(_write_manifest(out_dir, "safeset", cfg, outputs, timings))
    print(f"wrote {len(outputs)} files to {out_dir}")
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="platoonmpc",
        description="Distributed MPC platoon coordination at a signalized "
                    "intersection: simulation, throughput sweeps, safe sets.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", default=None,
                        help="YAML config; omit for the built-in defaults")
    common.add_argument("--out", metavar="DIR", default="out",
                        help="output directory (default: ./out)")
    common.add_argument("--no-figures", action="store_true",
                        help="skip rendering PNG figures")

    p_run = sub.add_parser("run", parents=[common],
                           help="simulate one scenario and export trajectories")
    p_run.add_argument("--trust-horizon", type=int, metavar="F", default=None,
                       help="override the configured trust horizon")
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", parents=[common],
                             help="run the throughput-vs-trust-horizon sweep")
    p_sweep.add_argument("--trust-horizon", type=int, nargs="+", metavar="F",
                         default=None,
                         help="trust horizons to sweep (default from config)")
    p_sweep.set_defaults(func=cmd_sweep)

    p_set = sub.add_parser("safeset", parents=[common],
                           help="export a safe-set boundary polyline")
    p_set.add_argument("v0", type=float,
                       help="predecessor speed before braking (m/s)")
    p_set.set_defaults(func=cmd_safeset)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure: diagnostic, nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
