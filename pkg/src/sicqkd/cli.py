"""Command-line driver: key-rate sweeps, region and crossover summaries, and
Monte Carlo validation of the memory-assisted node.

Exit status: 0 success, 1 configuration error, 2 domain error during
evaluation, 3 Monte Carlo disagreement, 4 Monte Carlo run without enough data
to judge.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings
from typing import Optional, Sequence

from . import __version__
from .config import (ConfigError, RunConfig, check_switch_timing, effective_parameters,
                     load_config, parse_list, parse_mux, parse_seeds, render_config,
                     sweep_grid)
from .montecarlo import compare_to_analytic, merge_all, predict_node, simulate_seeds
from .protocols import (EvaluationError, ProtocolConfig, RateCurve, classify_regions,
                        crossover_distance, multiplex_curve, rate_curve)

EXIT_OK, EXIT_CONFIG, EXIT_DOMAIN, EXIT_MC_FAIL, EXIT_MC_NODATA = 0, 1, 2, 3, 4

CSV_HEADER = "distance_km,skr_bits_per_s,yield_per_round,qber_x,qber_z,cycle_time_s,region"


def fmt(x: float) -> str:
    """Nine significant digits, stable across platforms."""
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".9g")


def _tag(seconds: float) -> str:
    for unit, scale in (("s", 1.0), ("ms", 1e-3), ("us", 1e-6), ("ns", 1e-9), ("ps", 1e-12)):
        if seconds >= scale * (1 - 1e-12):
            return f"{seconds / scale:g}{unit}"
    return f"{seconds:g}s"


def _opt(x: Optional[float]) -> str:
    return "none" if x is None else fmt(x)


# --------------------------------------------------------------------------
# curve sets


class CurveJob:
    """One curve to compute: protocol, config and output name."""

    def __init__(self, protocol: str, cfg: ProtocolConfig, name: str, mux=(1, 1), meta=None):
        self.protocol = protocol
        self.cfg = cfg
        self.name = name
        self.mux = mux
        self.meta = meta or {}


def plan_curves(run: RunConfig, base: ProtocolConfig) -> list:
    """BB84 and MDI references use the base config; MA-MDI spans the tau_pi x T2 grid."""
    specs = []
    want = ("bb84", "mdi", "ma_mdi") if run.protocol == "all" else (run.protocol,)
    for proto in ("bb84", "mdi"):
        if proto in want:
            tag = f"{fmt(base.rate / 1e6)}MHz"
            specs.append(CurveJob(proto, base, f"{proto}__rate_{tag}",
                                   meta={"source_rate_hz": base.rate}))
    if "ma_mdi" in want:
        nw, npol = run.mux
        for (tp, t2), cfg in sweep_grid(base, run.tau_pi, run.t2):
            name = f"ma_mdi__taupi_{_tag(tp)}__t2_{_tag(t2)}__mux_{nw}x{npol}"
            specs.append(CurveJob("ma_mdi", cfg, name, run.mux,
                                   meta={"tau_pi_s": tp, "t2_s": t2,
                                         "pipelining": cfg.device.pipelining}))
    return specs


def compute_curves(run: RunConfig, base: ProtocolConfig) -> list:
    out = []
    distances = run.distances()
    for job in plan_curves(run, base):
        curve = rate_curve(job.protocol, job.cfg, distances, workers=run.workers, label=job.name)
        if job.mux != (1, 1):
            curve = multiplex_curve(curve, *job.mux)
        out.append((job, curve))
    return out


def curve_csv(curve: RateCurve) -> str:
    rows = [CSV_HEADER]
    for p in curve.points:
        rows.append(",".join([fmt(p.distance), fmt(p.skr), fmt(p.yield_per_round),
                              fmt(p.qber_x), fmt(p.qber_z), fmt(p.cycle_time),
                              p.region.value if p.region is not None else ""]))
    return "\n".join(rows) + "\n"


def regions_table(computed) -> str:
    rows = ["curve,boundary_1_2_km,boundary_2_3_km,zero_km,slope_tolerance"]
    for job, curve in computed:
        s = classify_regions(curve, job.cfg.link.alpha_ob)
        rows.append(f"{job.name},{_opt(s.boundary_1_2)},{_opt(s.boundary_2_3)},"
                    f"{_opt(s.zero_distance)},{fmt(s.tolerance)}")
    return "\n".join(rows) + "\n"


def crossover_table(computed) -> str:
    refs = [(job, c) for job, c in computed if job.protocol in ("bb84", "mdi")]
    rows = ["curve,reference,crossover_km"]
    for job, curve in computed:
        if job.protocol != "ma_mdi":
            continue
        for rjob, ref in refs:
            rows.append(f"{job.name},{rjob.name},{_opt(crossover_distance(curve, ref))}")
    return "\n".join(rows) + "\n"


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _prepare_out(path: str) -> None:
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {path}: {exc.strerror}") from None
    if not os.access(path, os.W_OK):
        raise ConfigError(f"output directory {path} is not writable")


def manifest(run: RunConfig, base: ProtocolConfig, computed) -> dict:
    return {
        "version": __version__,
        "run": {
            "protocol": run.protocol, "config_path": run.config_path,
            "dmin_km": run.dmin, "dmax_km": run.dmax, "dstep_km": run.dstep,
            "tau_pi_s": list(run.tau_pi), "t2_s": list(run.t2), "mux": list(run.mux),
        },
        "base_parameters": effective_parameters(base),
        "curves": [
            {"file": f"{job.name}.csv", "protocol": job.protocol, "digest": curve.digest,
             "mux": list(job.mux), "parameters": effective_parameters(job.cfg), **job.meta}
            for job, curve in computed
        ],
    }


def run_sweep(run: RunConfig, base: ProtocolConfig, plots: bool = True) -> list:
    _prepare_out(run.out)
    computed = compute_curves(run, base)
    for job, curve in computed:
        _write(os.path.join(run.out, f"{job.name}.csv"), curve_csv(curve))
    _write(os.path.join(run.out, "regions.csv"), regions_table(computed))
    _write(os.path.join(run.out, "crossover.csv"), crossover_table(computed))
    _write(os.path.join(run.out, "manifest.json"),
           json.dumps(manifest(run, base, computed), indent=2, sort_keys=True) + "\n")
    if plots:
        from .plotting import plot_curves

        bounds = {}
        for job, curve in computed:
            s = classify_regions(curve, job.cfg.link.alpha_ob)
            if job.protocol == "ma_mdi":
                bounds[job.name] = (s.boundary_1_2, s.boundary_2_3)
        plot_curves([c for _, c in computed], os.path.join(run.out, "skr.svg"),
                    boundaries=bounds if len(bounds) == 1 else None)
    return computed


# --------------------------------------------------------------------------
# Monte Carlo


def run_montecarlo(run: RunConfig, base: ProtocolConfig) -> tuple:
    """Per-distance agreement reports; returns (report dict, exit status)."""
    report = {"version": __version__, "rounds": run.rounds, "seeds": list(run.seeds),
              "parameters": effective_parameters(base), "distances": []}
    statuses = []
    for distance in run.distances():
        expected = predict_node(base, distance)
        trials = simulate_seeds(base, distance, run.rounds, run.seeds, run.workers)
        per_seed = [compare_to_analytic(t, expected) for t in trials]
        pooled = compare_to_analytic(merge_all(trials), expected)
        n_fail = sum(r.status == "fail" for r in per_seed)
        n_nodata = sum(r.status == "insufficient data" for r in per_seed)
        if n_nodata == len(per_seed):
            status = "insufficient data"
        elif 2 * n_fail > len(per_seed) - n_nodata:
            status = "fail"
        else:
            status = "pass"
        statuses.append(status)
        report["distances"].append({
            "distance_km": distance,
            "status": status,
            "expected": {"yield_per_round": expected.yield_per_round,
                         "mean_wait": expected.mean_wait,
                         "e_x": expected.e_x, "e_z": expected.e_z},
            "pooled": {"status": pooled.status, "z": pooled.z_scores},
            "per_seed": [{"seed": t.seeds[0], "status": r.status, "z": r.z_scores,
                          "cycles": t.cycles, "bsm_successes": t.bsm_successes,
                          "timeouts": t.timeouts}
                         for t, r in zip(trials, per_seed)],
        })
    if "fail" in statuses:
        code = EXIT_MC_FAIL
    elif statuses and all(s == "insufficient data" for s in statuses):
        code = EXIT_MC_NODATA
    else:
        code = EXIT_OK
    return report, code


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def _mc_lines(report: dict) -> list:
    lines = []
    for d in report["distances"]:
        z = d["pooled"]["z"]
        zs = " ".join(f"{k}={'n/a' if v is None else format(v, '+.2f')}" for k, v in z.items())
        lines.append(f"L={fmt(d['distance_km'])} km  {d['status']}  pooled: {zs}")
    return lines


# --------------------------------------------------------------------------
# argument handling


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="parameter file (key = value [unit])")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--protocol", default="all", choices=["bb84", "mdi", "ma_mdi", "all"])
    common.add_argument("--dmin", type=float, default=None, help="first distance, km")
    common.add_argument("--dmax", type=float, default=None, help="last distance, km")
    common.add_argument("--dstep", type=float, default=1.0, help="distance step, km")
    common.add_argument("--tau-pi", default="", help="comma list, e.g. 10ns,25ns,50ns,100ns")
    common.add_argument("--t2", default="", help="comma list, e.g. 10ms,100ms,1s,10s")
    common.add_argument("--mux", default="1x1", help="wavelength x polarisation channels, e.g. 88x2")
    common.add_argument("--rounds", type=int, default=100_000, help="Monte Carlo rounds per seed")
    common.add_argument("--seeds", default="1", help="seed list, e.g. 1-10 or 1,2,3")
    common.add_argument("--workers", type=int, default=1)

    parser = argparse.ArgumentParser(prog="sicqkd", description=__doc__.split("\n\n")[0].replace("\n", " "))
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("sweep", parents=[common], help="key-rate curves to CSV")
    p.add_argument("--no-plots", action="store_true", help="skip the SVG overview")
    sub.add_parser("montecarlo", parents=[common], help="validate the node model by simulation")
    sub.add_parser("regions", parents=[common], help="print region boundaries")
    sub.add_parser("crossover", parents=[common], help="print crossover distances")
    sub.add_parser("print-defaults", parents=[common], help="print the effective parameter file")
    return parser


def make_run_config(args) -> RunConfig:
    if args.command == "montecarlo":
        dmin = 100.0 if args.dmin is None else args.dmin
        dmax = dmin if args.dmax is None else args.dmax
    else:
        dmin = 0.0 if args.dmin is None else args.dmin
        dmax = 700.0 if args.dmax is None else args.dmax
    return RunConfig(
        protocol=args.protocol, config_path=args.config, dmin=dmin, dmax=dmax,
        dstep=args.dstep,
        tau_pi=parse_list(args.tau_pi) if args.tau_pi else (),
        t2=parse_list(args.t2) if args.t2 else (),
        mux=parse_mux(args.mux), rounds=args.rounds, seeds=parse_seeds(args.seeds),
        out=args.out, workers=args.workers,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            base = load_config(args.config)
            run = make_run_config(args)
            # tau_pi overrides can also push the round below the switch limit
            for _, cfg in sweep_grid(base, run.tau_pi, run.t2):
                check_switch_timing(cfg)
        for w in {str(w.message) for w in caught}:
            print(f"warning: {w}", file=sys.stderr)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "print-defaults":
            sys.stdout.write(render_config(base))
            return EXIT_OK
        if args.command == "sweep":
            run_sweep(run, base, plots=not args.no_plots)
            print(f"wrote {run.out}")
            return EXIT_OK
        if args.command in ("regions", "crossover"):
            if args.command == "crossover" and run.protocol != "all":
                run = RunConfig(**{**run.__dict__, "protocol": "all"})
            computed = compute_curves(run, base)
            table = regions_table(computed) if args.command == "regions" else crossover_table(computed)
            sys.stdout.write(table)
            return EXIT_OK
        if args.command == "montecarlo":
            _prepare_out(run.out)
            report, code = run_montecarlo(run, base)
            _write(os.path.join(run.out, "montecarlo.json"),
                   json.dumps(_json_safe(report), indent=2, sort_keys=True) + "\n")
            for line in _mc_lines(report):
                print(line)
            return code
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EvaluationError, ValueError, ArithmeticError) as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
