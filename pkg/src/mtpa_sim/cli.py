"""Command-line interface.

Subcommands:
    run       simulate a scenario from a config file, write CSV/summary/figures
    sweep     run a grid of config overrides (in parallel), collect summaries
    validate  run the invariant self-checks
    plot      re-render figures from an exported CSV

Exit codes: 0 success, 1 failed validation, 2 simulation divergence,
3 configuration error.
"""

from __future__ import annotations

import argparse
import copy
import itertools
import multiprocessing
import os
import sys

import yaml

from . import config as cfgmod
from . import report
from .errors import ConfigError, SimulationDiverged
from .scenario import ScenarioTimeline, run_scenario


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", default=None, help="YAML config file (defaults built in)")
    p.add_argument("--out", default="mtpa_out", help="output directory")
    p.add_argument("--seed", type=int, default=None,
                   help="seed for the measurement-noise hook")
    p.add_argument("--mode", choices=["id0", "es", "dcee"], default=None,
                   help="override the control strategy of the timeline")
    p.add_argument("--torque-source", choices=["ideal", "observed"], default=None,
                   help="override the torque measurement source of every segment")


def _build(cfg: dict, mode: str | None, torque_source: str | None):
    params = cfgmod.motor_params(cfg)
    sim = cfgmod.sim_options(cfg)
    ctrl = cfgmod.controller_setup(cfg)
    timeline = ScenarioTimeline.from_config(cfg["timeline"])
    if mode:
        timeline = timeline.with_mode(mode)
    if torque_source:
        timeline = timeline.with_torque_source(torque_source)
    return params, sim, ctrl, timeline


def _timeline_rows(timeline: ScenarioTimeline) -> list[dict]:
    return [{"t_start": s.t_start, "t_end": s.t_end, "speed_rpm": s.speed_rpm,
             "load": s.load, "mode": s.mode, "torque_source": s.torque_source}
            for s in timeline.segments]


def _print_summary(summary: dict):
    print(f"{'seg':>3} {'mode':>5} {'src':>8} {'rpm':>6} {'load':>6} "
          f"{'i_s':>8} {'i_d':>8} {'i_q':>8} {'P_cu':>8} {'err_int':>9}")
    for seg in summary["segments"]:
        st = seg["steady"]
        print(f"{seg['index']:>3} {seg['mode']:>5} {seg['torque_source']:>8} "
              f"{seg['speed_rpm']:>6.0f} {seg['load']:>6.1f} "
              f"{st['i_s']:>8.2f} {st['i_d']:>8.2f} {st['i_q']:>8.2f} "
              f"{st['P_cu']:>8.1f} {seg['is_err_integral']:>9.4f}")
    fin = summary["final"]
    print(f"final estimates: psi_f_hat={fin['psi_f_hat_mean']:.5f} Wb, "
          f"L_qd_hat={fin['L_qd_hat_mean'] * 1e3:.4f} mH, "
          f"i_base(pinned)={fin['i_base_pinned']:.2f} A")


def _run_one(cfg: dict, out_dir: str, seed, mode, torque_source, make_plots=True):
    params, sim, ctrl, timeline = _build(cfg, mode, torque_source)
    result = run_scenario(timeline, params, ctrl, sim, seed=seed)
    os.makedirs(out_dir, exist_ok=True)
    report.export_csv(result.log, os.path.join(out_dir, "log.csv"))
    report.write_summary(result.summary, os.path.join(out_dir, "summary.json"))
    resolved = copy.deepcopy(cfg)
    resolved["timeline"] = _timeline_rows(timeline)
    cfgmod.dump_config(resolved, os.path.join(out_dir, "resolved_config.yaml"))
    if make_plots:
        report.emit_plots(result.log, out_dir, params)
    return result


def cmd_run(args) -> int:
    cfg = cfgmod.load_config(args.config)
    result = _run_one(cfg, args.out, args.seed, args.mode, args.torque_source)
    _print_summary(result.summary)
    print(f"outputs written to {args.out}")
    return 0


def _set_nested(cfg: dict, dotted: str, value):
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        if not isinstance(node, dict) or k not in node:
            raise ConfigError(f"unknown config key {dotted!r}")
        node = node[k]
    if not isinstance(node, dict) or keys[-1] not in node:
        raise ConfigError(f"unknown config key {dotted!r}")
    node[keys[-1]] = value


def _parse_set(spec: str):
    if "=" not in spec:
        raise ConfigError(f"--set needs key=v1[,v2,...], got {spec!r}")
    key, _, values = spec.partition("=")
    parsed = [yaml.safe_load(v) for v in values.split(",") if v != ""]
    if not parsed:
        raise ConfigError(f"--set {spec!r} lists no values")
    return key.strip(), parsed


def _sweep_worker(payload):
    cfg, out_dir, seed, mode, torque_source, combo = payload
    try:
        result = _run_one(cfg, out_dir, seed, mode, torque_source, make_plots=False)
        return combo, out_dir, result.summary, None
    except SimulationDiverged as exc:
        return combo, out_dir, None, str(exc)


def cmd_sweep(args) -> int:
    base = cfgmod.load_config(args.config)
    grid = [_parse_set(s) for s in args.set]
    if not grid:
        raise ConfigError("sweep needs at least one --set key=v1,v2,...")
    keys = [k for k, _ in grid]
    jobs = []
    for i, values in enumerate(itertools.product(*(v for _, v in grid))):
        cfg = copy.deepcopy(base)
        for key, val in zip(keys, values):
            _set_nested(cfg, key, val)
        out_dir = os.path.join(args.out, f"run_{i:03d}")
        jobs.append((cfg, out_dir, args.seed, args.mode, args.torque_source,
                     dict(zip(keys, values))))
    n_proc = max(1, min(len(jobs), args.jobs or (os.cpu_count() or 1)))
    if n_proc == 1:
        results = [_sweep_worker(j) for j in jobs]
    else:
        with multiprocessing.Pool(n_proc) as pool:
            results = pool.map(_sweep_worker, jobs)
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for combo, out_dir, summary, error in results:
        row = dict(combo)
        row["out_dir"] = out_dir
        if error is None:
            row["status"] = "ok"
            for seg in summary["segments"]:
                row[f"seg{seg['index']}_i_s"] = seg["steady"]["i_s"]
                row[f"seg{seg['index']}_err_int"] = seg["is_err_integral"]
            row["psi_f_hat"] = summary["final"]["psi_f_hat_mean"]
            row["L_qd_hat"] = summary["final"]["L_qd_hat_mean"]
        else:
            row["status"] = f"diverged: {error}"
        rows.append(row)
    header = sorted({k for r in rows for k in r}, key=lambda c: (c != "out_dir", c))
    table = os.path.join(args.out, "sweep_summary.csv")
    with open(table, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(row.get(c, "")) for c in header) + "\n")
    print(f"{len(rows)} runs; table written to {table}")
    return 0


def cmd_validate(_args) -> int:
    from .validate import run_all
    return 0 if run_all(verbose=True) else 1


def cmd_plot(args) -> int:
    cfg = cfgmod.load_config(args.config)
    params = cfgmod.motor_params(cfg)
    log = report.read_csv(args.csv)
    os.makedirs(args.out, exist_ok=True)
    for p in report.emit_plots(log, args.out, params):
        print(f"wrote {p}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mtpa-sim",
        description="IPMSM MTPA strategy simulator (i_d=0, extremum seeking, dual control)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one scenario")
    _add_common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a config grid")
    _add_common(p)
    p.add_argument("--set", action="append", default=[], metavar="KEY=V1,V2",
                   help="dotted config key and comma-separated values; repeatable")
    p.add_argument("--jobs", type=int, default=None, help="parallel workers")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="run the invariant self-checks")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("plot", help="render figures from an exported CSV")
    p.add_argument("csv", help="path to a log.csv produced by run")
    p.add_argument("--config", default=None, help="config supplying motor parameters")
    p.add_argument("--out", default="mtpa_out", help="output directory")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except SimulationDiverged as exc:
        print(f"simulation diverged: {exc}", file=sys.stderr)
        if exc.record is not None:
            print(f"  at tick {exc.tick}, t={exc.record.get('t', '?')} s", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
