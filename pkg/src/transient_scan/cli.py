"""``transient-scan`` command-line driver.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
Every command echoes its full configuration (defaults included) so a run can
be repeated from its printed record; ``--json`` emits that record as JSON.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import warnings

import numpy as np

from . import approx, calibrate, mc
from .charts1d import run_first_alarm
from .core import (ChartKind, ChartSpec, DomainError, InvalidSpec, NotPositiveDefinite,
                   ONE_DIMENSIONAL, ScenarioSpec, UnsupportedKind, identity_model)
from .ingest import DataError, estimate_covariance, load_panel, standardized_returns

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
SEED_ENV = "TRANSIENT_SCAN_SEED"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _chart_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("chart")
    g.add_argument("--chart", required=True, choices=[k.value for k in ChartKind])
    g.add_argument("--threshold", "--b", "--h", "--d", "--h1", "--level", dest="threshold",
                   type=float, help="b, h, d, h1 or level, depending on the chart")
    g.add_argument("--ref", "--delta", "--k1", dest="ref_strength", type=float,
                   help="reference strength (delta, ||delta|| or k1)")
    g.add_argument("--beta", type=float)
    g.add_argument("--w", dest="window", type=int)
    g.add_argument("--w0", dest="window_lo", type=int)
    g.add_argument("--w1", dest="window_hi", type=int)
    g.add_argument("--N", dest="dimension", type=int, default=1)
    g.add_argument("--p", dest="soft_p", type=float)
    g.add_argument("--hard-cut", dest="hard_cut", type=float)
    g.add_argument("--cap", dest="mc1_cap", type=int, help="MC1 memory cap")


def _convention_args(p):
    p.add_argument("--overshoot", choices=[m.value for m in approx.Overshoot],
                   default=approx.Overshoot.EXPONENTIAL.value)
    p.add_argument("--ewma-arg", choices=[m.value for m in approx.EwmaArg], default=None)


def _sim_args(p):
    g = p.add_argument_group("simulation")
    g.add_argument("--reps", type=int, default=20_000)
    g.add_argument("--seed", type=int, default=None,
                   help=f"random seed (falls back to ${SEED_ENV}, then 0)")
    g.add_argument("--burn-in", type=int, default=None)
    g.add_argument("--workers", type=int, default=1)
    g.add_argument("--warmup", choices=[m.value for m in mc.WarmUp],
                   default=mc.WarmUp.UNCONDITIONAL.value)


def _out_args(p):
    p.add_argument("--json", action="store_true", help="print a JSON record")
    p.add_argument("--out", help="write rows to this delimiter-separated file")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="transient-scan",
                     description="Detect transient mean shifts; FDP/POD approximation, "
                                 "calibration and simulation.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("calibrate", help="threshold for a target FDP")
    _chart_args(p)
    p.add_argument("--target-fdp", type=float, required=True)
    p.add_argument("--L", type=int, required=True)
    how = p.add_mutually_exclusive_group()
    how.add_argument("--mc", action="store_true",
                     help="calibrate by simulation (default for kinds without a usable formula)")
    how.add_argument("--closed-form", action="store_true",
                     help="invert the closed-form FDP even where simulation is the default")
    _convention_args(p)
    _sim_args(p)
    _out_args(p)

    for name, help_ in (("fdp", "false detection probability"), ("pod", "power of detection")):
        p = sub.add_parser(name, help=help_)
        _chart_args(p)
        p.add_argument("--L", type=int, required=True)
        mode = p.add_mutually_exclusive_group()
        mode.add_argument("--approx", action="store_true", help="closed form (default)")
        mode.add_argument("--simulate", action="store_true")
        if name == "pod":
            p.add_argument("--mu", type=float, nargs="+", required=True,
                           help="per-channel signal value(s)")
            p.add_argument("--mu-pattern", choices=["all", "one"], default="all")
            p.add_argument("--change-time", type=int, default=0)
            p.add_argument("--corrected", action="store_true",
                           help="apply the continuous-boundary correction")
        _convention_args(p)
        _sim_args(p)
        _out_args(p)

    p = sub.add_parser("table", help="reproduce a stored comparison table")
    p.add_argument("--id", dest="table_id", required=True)
    p.add_argument("--design", action="append", help="restrict to these columns")
    p.add_argument("--L", type=int, action="append", help="restrict to these horizons")
    _sim_args(p)
    _out_args(p)

    for name, help_ in (("analyze", "run a chart over a price file"),
                        ("charts", "emit plot-ready series")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--input", required=True)
        _chart_args(p)
        p.add_argument("--channel", action="append",
                       help="channel(s) to monitor (default: all)")
        cov = p.add_mutually_exclusive_group()
        cov.add_argument("--whiten", action="store_true",
                         help="whiten by the estimated correlation (default for N>1)")
        cov.add_argument("--independent", action="store_true",
                         help="treat channels as independent")
        p.add_argument("--trailing", type=int, default=None,
                       help="standardize by a trailing window instead of the full sample")
        if name == "charts":
            p.add_argument("--emit", required=True, help="output CSV path")
        _out_args(p)
    return parser


# -- helpers ----------------------------------------------------------------

def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"${SEED_ENV} must be an integer, got {env!r}") from None


def _sim_config(args) -> mc.SimConfig:
    try:
        return mc.SimConfig(reps=args.reps, seed=_seed(args), burn_in=args.burn_in,
                            workers=args.workers, warmup=args.warmup)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _convention(args) -> approx.OvershootConvention:
    return approx.OvershootConvention(args.overshoot, args.ewma_arg)


_SPEC_FIELDS = ("dimension", "beta", "window", "window_lo", "window_hi", "ref_strength",
                "soft_p", "hard_cut", "mc1_cap")


def _spec(args, threshold: float | None = None, dimension: int | None = None) -> ChartSpec:
    kind = ChartKind(args.chart)
    fields = {f: getattr(args, f) for f in _SPEC_FIELDS}
    if dimension is not None:
        fields["dimension"] = dimension
    if kind is ChartKind.MEWMA_SOFT and fields["soft_p"] is None:
        fields["soft_p"] = 0.1
    if kind in (ChartKind.MEWMA_HARD, ChartKind.MMA_HARD, ChartKind.MGLRT_HARD) \
            and fields["hard_cut"] is None:
        fields["hard_cut"] = 0.25
    th = threshold if threshold is not None else args.threshold
    if th is None:
        raise UsageError("--threshold (or --b/--h/--d/--h1) is required")
    return ChartSpec(kind, th, **fields)


def _warnings_of(result) -> list[str]:
    return list(result.warnings)


def _emit(args, record: dict, lines: list[str], rows: list[dict] | None = None) -> None:
    if rows is not None and getattr(args, "out", None):
        _write_rows(args.out, rows)
    if args.json:
        print(json.dumps(record, indent=2, default=_json_default))
    else:
        print("\n".join(lines))


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(type(obj).__name__)


def _write_rows(path: str, rows: list[dict]) -> None:
    if not rows:
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "-"
    return f"{x:.6g}" if isinstance(x, float) else str(x)


def _mean_vector(pattern: str, dim: int, mu: float) -> np.ndarray:
    if pattern == "one":
        return ScenarioSpec.one_channel(mu, dim, 1).mean
    return ScenarioSpec.all_channels(mu, dim, 1).mean


# -- commands ---------------------------------------------------------------

def cmd_calibrate(args, argv) -> dict:
    probe = _spec(args, threshold=1.0)
    config = {"chart": probe.to_dict(), "target_fdp": args.target_fdp, "L": args.L}
    config["chart"].pop("threshold")
    if args.mc or (probe.kind in calibrate.MC_BY_DEFAULT and not args.closed_form):
        sim = _sim_config(args)
        config["simulation"] = sim.to_dict()
        cal = calibrate.calibrate_mc(probe, args.target_fdp, args.L, sim)
        result = {"threshold": cal.threshold, "fdp": cal.estimate.value,
                  "std_error": cal.estimate.std_error, "iterations": cal.iterations,
                  "converged": cal.converged, "method": "monte-carlo"}
    else:
        conv = _convention(args)
        config["convention"] = {"overshoot": conv.mode.value,
                                "ewma_arg": conv.ewma_arg and conv.ewma_arg.value}
        th = calibrate.solve_threshold(probe, args.target_fdp, args.L, conv)
        check = approx.fdp(probe.replace(threshold=th), args.L, conv)
        result = {"threshold": th, "fdp": check.value, "warnings": _warnings_of(check),
                  "method": "closed-form"}
    lines = [f"threshold  {result['threshold']:.6f}",
             f"fdp        {_fmt(result['fdp'])}  ({result['method']})"]
    if "std_error" in result:
        lines.append(f"std error  {_fmt(result['std_error'])}")
    return {"config": config, "result": result, "lines": lines}


def cmd_fdp(args, argv) -> dict:
    spec = _spec(args)
    config = {"chart": spec.to_dict(), "L": args.L}
    if args.simulate:
        sim = _sim_config(args)
        config["simulation"] = sim.to_dict()
        est = mc.estimate_fdp(spec, args.L, None, sim)
        result = {"fdp": est.value, "std_error": est.std_error, "reps": est.reps,
                  "method": "monte-carlo"}
        lines = [f"fdp        {est.value:.6g}", f"std error  {est.std_error:.3g}"]
    else:
        conv = _convention(args)
        config["convention"] = {"overshoot": conv.mode.value,
                                "ewma_arg": conv.ewma_arg and conv.ewma_arg.value}
        res = approx.fdp(spec, args.L, conv)
        result = {"fdp": res.value, "regime": res.regime.value,
                  "warnings": _warnings_of(res), "method": "closed-form"}
        lines = [f"fdp        {res.value:.4f}"]
        lines += [f"warning    {w}" for w in res.warnings]
    return {"config": config, "result": result, "lines": lines}


def cmd_pod(args, argv) -> dict:
    spec = _spec(args)
    config = {"chart": spec.to_dict(), "L": args.L, "mu": args.mu,
              "mu_pattern": args.mu_pattern, "change_time": args.change_time}
    rows = []
    if args.simulate:
        sim = _sim_config(args)
        config["simulation"] = sim.to_dict()
        means = [_mean_vector(args.mu_pattern, spec.dimension, m) for m in args.mu]
        results = mc.estimate_pod_grid(spec, means, args.L, None, sim, args.change_time)
        for m, (pod, delay) in zip(args.mu, results):
            rows.append({"mu": m, "pod": pod.value, "std_error": pod.std_error,
                         "delay": delay.value, "delay_se": delay.std_error,
                         "detected": delay.reps})
        lines = ["mu         pod        se         delay      delay_se"]
        lines += ["  ".join(f"{_fmt(r[k]):<9}" for k in ("mu", "pod", "std_error", "delay",
                                                        "delay_se")) for r in rows]
    else:
        conv = _convention(args)
        config["convention"] = {"overshoot": conv.mode.value,
                                "ewma_arg": conv.ewma_arg and conv.ewma_arg.value}
        config["corrected"] = args.corrected
        for m in args.mu:
            strength = float(np.linalg.norm(_mean_vector(args.mu_pattern, spec.dimension, m)))
            res = approx.pod_approx(spec, strength, args.L, conv, corrected=args.corrected)
            rows.append({"mu": m, "strength": strength, "pod": res.value,
                         "regime": res.regime.value, "warnings": ";".join(res.warnings)})
        lines = ["mu         pod        regime          warnings"]
        lines += [f"{_fmt(r['mu']):<10} {r['pod']:<10.4f} {r['regime']:<15} {r['warnings']}"
                  for r in rows]
    return {"config": config, "result": {"rows": rows}, "lines": lines, "rows": rows}


def cmd_table(args, argv) -> dict:
    sim = _sim_config(args)
    config = {"table": args.table_id, "designs": args.design, "L": args.L,
              "simulation": sim.to_dict()}
    if args.table_id.lower() not in mc.TABLES:
        raise UsageError(f"unknown table {args.table_id!r}; choose from t1..t5")
    out = mc.reproduce_table(args.table_id, sim, args.design, args.L,
                             progress=lambda msg: print(msg, file=sys.stderr))
    rows = [r.to_dict() for r in out]
    lines = [f"{'design':<16}{'L':>4}{'mu/b':>7}{'estimate':>11}{'se':>9}{'published':>11}"]
    for r in out:
        lines.append(f"{r.design:<16}{r.L:>4}{r.strength:>7.3g}{r.estimate:>11.5f}"
                     f"{r.std_error:>9.5f}{_fmt(r.published):>11}")
    return {"config": config, "result": {"rows": rows}, "lines": lines, "rows": rows}


def _prepare_stream(args):
    panel = load_panel(args.input)
    if args.channel:
        try:
            panel = panel.select(args.channel)
        except ValueError:
            raise DataError(f"unknown channel in {args.channel}") from None
    returns, scales = standardized_returns(panel, args.trailing)
    one_d = ChartKind(args.chart) in ONE_DIMENSIONAL
    if one_d and returns.N != 1:
        raise UsageError("a one-dimensional chart needs exactly one --channel")
    info = {"T": returns.T, "channels": list(returns.channels), "scales": scales.tolist()}
    data = returns.values
    if not one_d:
        if args.independent or returns.N == 1:
            model = identity_model(returns.N)
            info["whitening"] = "none"
        else:
            est = estimate_covariance(returns)
            model = est.model
            info["whitening"] = "correlation"
            info["jittered"] = est.jittered
            info["largest_eigenvalue"] = est.eigen["largest"]
        data = model.whiten_rows(data)
    spec = _spec(args, dimension=1 if one_d else returns.N)
    return returns, data, spec, info


def cmd_analyze(args, argv) -> dict:
    returns, data, spec, info = _prepare_stream(args)
    run = run_first_alarm(spec, data)
    alarms = [int(t) for t in run.alarm_times]
    config = {"input": args.input, "chart": spec.to_dict(), "channels": args.channel,
              "independent": args.independent, "trailing": args.trailing}
    dates = [d.isoformat() for d in returns.timestamps]
    result = dict(info, alarm_level=spec.alarm_level, first_alarm=run.first_alarm,
                  first_alarm_date=dates[run.first_alarm - 1] if run.first_alarm else None,
                  alarm_times=alarms, trace=[None if math.isnan(v) else float(v)
                                             for v in run.trace])
    lines = [f"steps        {returns.T}", f"alarm level  {spec.alarm_level:.6g}",
             f"first alarm  {run.first_alarm if run.first_alarm else 'none'}"
             + (f" ({result['first_alarm_date']})" if run.first_alarm else ""),
             f"alarm times  {_compress(alarms)}"]
    if "largest_eigenvalue" in info:
        lines.append(f"largest eigenvalue of correlation  {info['largest_eigenvalue']:.4g}")
    rows = [{"t": i + 1, "date": dates[i], "statistic": run.trace[i],
             "alarm": int(run.alarms[i])} for i in range(returns.T)]
    return {"config": config, "result": result, "lines": lines, "rows": rows}


def cmd_charts(args, argv) -> dict:
    returns, data, spec, info = _prepare_stream(args)
    run = run_first_alarm(spec, data)
    rows = []
    for i, day in enumerate(returns.timestamps):
        row = {"t": i + 1, "date": day.isoformat()}
        for j, name in enumerate(returns.channels):
            row[name] = float(returns.values[i, j])
        row.update(statistic=float(run.trace[i]), level=spec.alarm_level,
                   alarm=int(run.alarms[i]))
        rows.append(row)
    _write_rows(args.emit, rows)
    config = {"input": args.input, "chart": spec.to_dict(), "channels": args.channel,
              "independent": args.independent, "trailing": args.trailing, "emit": args.emit}
    result = dict(info, rows=len(rows), first_alarm=run.first_alarm)
    return {"config": config, "result": result,
            "lines": [f"wrote {len(rows)} rows to {args.emit}"]}


def _compress(times: list[int]) -> str:
    """1,2,3,7 -> '1-3, 7'."""
    if not times:
        return "none"
    parts, start, prev = [], times[0], times[0]
    for t in times[1:] + [None]:
        if t is not None and t == prev + 1:
            prev = t
            continue
        parts.append(f"{start}-{prev}" if prev > start else str(start))
        if t is not None:
            start = prev = t
    return ", ".join(parts)


COMMANDS = {"calibrate": cmd_calibrate, "fdp": cmd_fdp, "pod": cmd_pod, "table": cmd_table,
            "analyze": cmd_analyze, "charts": cmd_charts}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            out = COMMANDS[args.command](args, argv)
        record = {"command": args.command, "argv": argv, "config": out["config"],
                  "result": out["result"]}
        notes = [str(w.message) for w in caught]
        if notes:
            record["notes"] = notes
        _emit(args, record, out["lines"] + [f"note       {n}" for n in notes], out.get("rows"))
        return EXIT_OK
    except (UsageError, InvalidSpec) as exc:
        print(f"transient-scan: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, NotPositiveDefinite, OSError) as exc:
        print(f"transient-scan: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DomainError, UnsupportedKind, calibrate.NoBracket, ArithmeticError) as exc:
        print(f"transient-scan: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
