"""Command-line front end.

Subcommands:
  run      simulate a config and export the trace CSV
  analyze  compute metrics from a trace CSV
  cost     gate-drive capacitor/pad budget for n outputs
  sweep    rerun a config across one parameter and tabulate a metric

Exit codes: 0 success, 1 usage error, 2 configuration error, 3 runtime abort.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace

import numpy as np

from . import analysis
from .config import ConfigError, apply_override, parse_config_file
from .dynamics import Phase
from .engine import SimulationError, simulate
from .traceio import read_trace_csv, write_trace_csv

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _sig4(x: float) -> str:
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return f"{x:.4g}"


def _build_parser() -> _Parser:
    p = _Parser(prog="simoboot",
                description="SIMO DC-DC converter transient simulator with a "
                            "shared bootstrap gate driver")
    sub = p.add_subparsers(dest="command", metavar="command")

    runp = sub.add_parser("run", help="simulate a config and export a CSV trace")
    runp.add_argument("--config", required=True, help="configuration file")
    runp.add_argument("--trace", required=True, help="output CSV path")
    runp.add_argument("--t-end", type=float, default=None,
                      help="override [sim] t_end (seconds)")

    az = sub.add_parser("analyze", help="metrics from a trace CSV")
    az.add_argument("--trace", required=True)
    az.add_argument("--window", type=float, default=0.2,
                    help="trailing fraction of the run to analyze (default 0.2)")
    az.add_argument("--spec", default=None,
                    help="config file for target/tracking checks")
    az.add_argument("--format", choices=("text", "kv"), default="text")

    costp = sub.add_parser("cost", help="gate-drive cost comparison")
    costp.add_argument("--outputs", type=int, required=True)

    sw = sub.add_parser("sweep", help="metric vs parameter table")
    sw.add_argument("--config", required=True)
    sw.add_argument("--param", required=True,
                    help="dotted config address, e.g. output.1.r_on_each")
    sw.add_argument("--from", dest="from_v", type=float, required=True)
    sw.add_argument("--to", dest="to_v", type=float, required=True)
    sw.add_argument("--steps", type=int, required=True)
    sw.add_argument("--metric", required=True,
                    help="efficiency | efficiency_gross | i_l_peak | "
                         "i_l_peak_window | ripple_max | ripple_<k> | mean_<k>")
    sw.add_argument("--window", type=float, default=0.2)
    return p


def _cmd_run(args) -> int:
    try:
        spec = parse_config_file(args.config)
    except ConfigError as exc:
        for line in exc.errors:
            print(f"config error: {line}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.t_end is not None:
        spec = replace(spec, sim=replace(spec.sim, t_end=args.t_end))
    try:
        trace, ledger = simulate(spec)
    except SimulationError as exc:
        print(f"simulation aborted: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        n_bytes = write_trace_csv(trace, args.trace)
    except OSError as exc:
        print(f"trace write failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {args.trace}: {len(trace)} samples, {n_bytes} bytes")
    print(f"peak inductor current: {_sig4(analysis.peak_current(trace))} A")
    finals = ", ".join(_sig4(v) for v in trace.v_out[-1])
    print(f"final outputs (V): {finals}")
    print(f"energy residual: "
          f"{_sig4(ledger.conservation_residual() / ledger.e_in)} of e_in")
    return EXIT_OK


def _metric_rows(trace, spec, window):
    n = trace.n_outputs
    rows = []
    for j in range(n):
        row = {
            "output": j + 1,
            "mean": analysis.output_mean(trace, j, window),
            "ripple": analysis.ripple(trace, j, window),
        }
        if spec is not None:
            row["target"] = spec.outputs[j].target
            row["regulated"] = analysis.is_regulated(
                trace, j, spec.outputs[j].target, window)
        rows.append(row)
    return rows


def _cmd_analyze(args) -> int:
    try:
        trace = read_trace_csv(args.trace)
    except (OSError, ValueError) as exc:
        print(f"trace error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    spec = None
    if args.spec is not None:
        try:
            spec = parse_config_file(args.spec)
        except (ConfigError, OSError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    if not 0.0 < args.window <= 1.0:
        print("analyze: --window must be in (0, 1]", file=sys.stderr)
        return EXIT_USAGE

    rows = _metric_rows(trace, spec, args.window)
    peak_full = analysis.peak_current(trace)
    peak_win = analysis.peak_current(trace, args.window)

    if args.format == "kv":
        for row in rows:
            j = row["output"]
            print(f"mean_{j}={row['mean']!r}")
            print(f"ripple_{j}={row['ripple']!r}")
            if spec is not None:
                print(f"target_{j}={row['target']!r}")
                print(f"regulated_{j}={int(row['regulated'])}")
        print(f"i_l_peak={peak_full!r}")
        print(f"i_l_peak_window={peak_win!r}")
    else:
        print(f"trailing window: last {args.window:.0%} of "
              f"{_sig4(trace.t[-1])} s ({len(trace)} samples)")
        hdr = "output   mean (V)   ripple (V)"
        if spec is not None:
            hdr += "   target (V)   regulated"
        print(hdr)
        for row in rows:
            line = (f"{row['output']:>6}   {_sig4(row['mean']):>8}   "
                    f"{_sig4(row['ripple']):>10}")
            if spec is not None:
                line += (f"   {_sig4(row['target']):>10}   "
                         f"{'yes' if row['regulated'] else 'NO':>9}")
            print(line)
        print(f"peak inductor current: {_sig4(peak_full)} A "
              f"(window: {_sig4(peak_win)} A)")
    if spec is not None and (trace.phase == int(Phase.DELIVER)).any():
        rep = analysis.verify_tracking(trace, spec, window=1.0)
        if args.format == "kv":
            print(f"tracking_deviation_max={rep.deviation_max!r}")
            print(f"boot_droop_max={rep.droop_max!r}")
        else:
            print(f"bootstrap tracking: max deviation "
                  f"{_sig4(rep.deviation_max)} V over "
                  f"{rep.n_deliver_samples} deliver samples, droop "
                  f"{_sig4(rep.droop_max)} V from {_sig4(rep.v_c_nominal)} V")
    return EXIT_OK


def _cmd_cost(args) -> int:
    try:
        cost = analysis.gate_drive_cost(args.outputs)
    except ValueError as exc:
        print(f"cost: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"gate-drive cost for {cost.n} outputs")
    print("                    caps   pads")
    print(f"conventional       {cost.conventional_caps:>5}  {cost.conventional_pads:>5}")
    print(f"shared bootstrap   {cost.proposed_caps:>5}  {cost.proposed_pads:>5}")
    print(f"pads saved: {cost.pads_saved}")
    print(f"off-chip capacitor ratio: {_sig4(cost.offchip_cap_ratio)}x")
    return EXIT_OK


_SWEEP_METRICS = ("efficiency", "efficiency_gross", "i_l_peak",
                  "i_l_peak_window", "ripple_max")


def _sweep_metric(name: str, trace, ledger, window: float) -> float:
    if name == "efficiency" or name == "efficiency_gross":
        t_end = trace.t[-1]
        t_from = t_end - window * (t_end - trace.t[0])
        eta, eta_gross = analysis.efficiency(ledger, (t_from, t_end))
        return eta if name == "efficiency" else eta_gross
    if name == "i_l_peak":
        return analysis.peak_current(trace)
    if name == "i_l_peak_window":
        return analysis.peak_current(trace, window)
    if name == "ripple_max":
        return max(analysis.ripple(trace, j, window)
                   for j in range(trace.n_outputs))
    if name.startswith("ripple_"):
        return analysis.ripple(trace, int(name[7:]) - 1, window)
    if name.startswith("mean_"):
        return analysis.output_mean(trace, int(name[5:]) - 1, window)
    raise KeyError(name)


def _cmd_sweep(args) -> int:
    try:
        base = parse_config_file(args.config)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.steps < 1:
        print("sweep: --steps must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    known = name = args.metric
    if not (name in _SWEEP_METRICS or name.startswith(("ripple_", "mean_"))):
        print(f"sweep: unknown metric {name!r} (choose from "
              f"{', '.join(_SWEEP_METRICS)}, ripple_<k>, mean_<k>)",
              file=sys.stderr)
        return EXIT_USAGE
    points = sorted(np.linspace(args.from_v, args.to_v, args.steps).tolist())
    print(f"{args.param}   {known}")
    for value in points:
        try:
            spec = apply_override(base, args.param, value)
        except KeyError as exc:
            print(f"sweep: {exc}", file=sys.stderr)
            return EXIT_USAGE
        try:
            trace, ledger = simulate(spec)
            metric = _sweep_metric(known, trace, ledger, args.window)
        except SimulationError as exc:
            print(f"simulation aborted at {args.param}={value!r}: {exc}",
                  file=sys.stderr)
            return EXIT_RUNTIME
        except (KeyError, IndexError):
            print(f"sweep: metric {known!r} not available for this trace",
                  file=sys.stderr)
            return EXIT_USAGE
        print(f"{value!r}   {metric!r}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    handler = {"run": _cmd_run, "analyze": _cmd_analyze,
               "cost": _cmd_cost, "sweep": _cmd_sweep}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
