"""Command-line front door.

Every command resolves its configuration from (defaults < --config JSON
file < explicit flags), writes a manifest recording the resolved
configuration and seeds next to its outputs, and emits traces/summaries
in the stable formats of :mod:`popcon.traceio`. Report-style commands
render matplotlib figures next to the columnar data unless --no-render
is given.

Exit codes: 0 all assertions passed, 1 assertion failure, 2 usage or
configuration error (including unreadable input files).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import report as report_mod
from .coupling import compare, reset_experiment
from .meanfield import initial_state, integrate
from .population import ProtocolParams
from .potentials import (
    PhaseNotReachedError,
    PotentialParams,
    check_bounds,
    detect_T1,
    phase_schedule,
)
from .simulator import run_ensemble, run_trial, three_state_baseline
from .traceio import (
    TraceFormatError,
    _jsonable,
    read_trace,
    write_manifest,
    write_summary,
    write_trace,
)
from .verify import CRITERION_NAMES, VerificationSuite, smoke_results

__all__ = ["main"]


class ConfigError(Exception):
    pass


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="popcon",
        description="Low-communication majority-consensus protocol: simulator, "
        "mean-field integrator, verification harness.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON file with option defaults")
        p.add_argument("--out", help="output directory (default: out/<command>)")

    def add_params(p, n=True):
        if n:
            p.add_argument("--n", type=int, help="population size")
        p.add_argument("--s", type=int, help="memory parameter (leaders = n/s)")
        p.add_argument("--rho", type=float, help="initial relative advantage")
        p.add_argument("--seed", type=int, help="base seed (unsigned 64-bit)")
        p.add_argument("--horizon", type=float, help="time horizon")

    p = sub.add_parser("ode", help="integrate the mean-field system")
    add_common(p)
    p.add_argument("--s", type=int)
    p.add_argument("--rho", type=float)
    p.add_argument("--t-end", type=float, dest="t_end")
    p.add_argument("--step", type=float, help="RK4 step (default min(0.01, 1/(10s)))")
    p.add_argument("--record-every", type=int, dest="record_every")
    p.add_argument("--bounds", action="store_true", help="also emit bound reports")
    p.add_argument("--theta", type=float, help="phase-schedule slack knob")
    p.add_argument("--n-ref", type=int, dest="n_ref",
                   help="population size used for the reported phase schedule")

    p = sub.add_parser("sim", help="one seeded protocol trial")
    add_common(p)
    add_params(p)
    p.add_argument("--sample-interval", type=float, dest="sample_interval")
    p.add_argument(
        "--full-horizon",
        action="store_true",
        help="keep running after consensus (communication-rate windows)",
    )

    p = sub.add_parser("ensemble", help="many independent trials")
    add_common(p)
    add_params(p)
    p.add_argument("--sample-interval", type=float, dest="sample_interval")
    p.add_argument("--trials", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--save-traces", action="store_true", dest="save_traces")

    p = sub.add_parser("baseline", help="three-state protocol comparison run")
    add_common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--rho", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--horizon", type=float)
    p.add_argument("--sample-interval", type=float, dest="sample_interval")

    p = sub.add_parser("compare", help="sup deviation between two trace files")
    add_common(p)
    p.add_argument("--random-trace", dest="random_trace")
    p.add_argument("--ode-trace", dest="ode_trace")
    p.add_argument("--t-min", type=float, dest="t_min")
    p.add_argument("--t-max", type=float, dest="t_max")

    p = sub.add_parser("reset", help="periodic-reset coupling experiment")
    add_common(p)
    add_params(p)
    p.add_argument("--block-length", type=float, dest="block_length")
    p.add_argument("--no-render", action="store_true", dest="no_render")

    p = sub.add_parser("sweep", help="(n, s, rho) grid of ensembles")
    add_common(p)
    p.add_argument("--n-grid", dest="n_grid", help="comma list, e.g. 3000,6000")
    p.add_argument("--s-grid", dest="s_grid", help="comma list, e.g. 5")
    p.add_argument("--rho-grid", dest="rho_grid", help="comma list, e.g. 0.1,0.05")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--horizon", type=float, help="default 12 ln n per cell")
    p.add_argument("--workers", type=int)
    p.add_argument("--no-render", action="store_true", dest="no_render")

    p = sub.add_parser("plotdata", help="columnar plot panels (+ figures) from traces")
    add_common(p)
    p.add_argument("--trace", action="append", help="trace file (repeatable)")
    p.add_argument("--no-render", action="store_true", dest="no_render")

    p = sub.add_parser("verify", help="run the acceptance suite")
    add_common(p)
    p.add_argument("--criteria", help="comma list of criterion numbers (default all)")
    p.add_argument("--smoke", action="store_true", help="fast trivial-config subset")
    p.add_argument("--base-seed", type=int, dest="base_seed")

    return ap


_DEFAULTS = {
    "ode": {
        "s": 5,
        "rho": 0.1,
        "t_end": 60.0,
        "step": None,
        "record_every": 1,
        "theta": 0.5,
        "n_ref": None,
    },
    "sim": {
        "n": 3000,
        "s": 5,
        "rho": 0.1,
        "seed": 2026,
        "horizon": 120.0,
        "sample_interval": 1.0,
    },
    "ensemble": {
        "n": 3000,
        "s": 5,
        "rho": 0.1,
        "seed": 2026,
        "horizon": 120.0,
        "sample_interval": 1.0,
        "trials": 20,
        "workers": 1,
    },
    "baseline": {"n": 3000, "rho": 0.1, "seed": 2026, "horizon": 120.0, "sample_interval": 1.0},
    "compare": {"t_min": None, "t_max": None},
    "reset": {
        "n": 2500,
        "s": 5,
        "rho": 0.02,
        "seed": 2026,
        "horizon": 150.0,
        "block_length": 10.0,
    },
    "sweep": {
        "n_grid": "3000",
        "s_grid": "5",
        "rho_grid": "0.1,0.05,0.025",
        "trials": 20,
        "seed": 2026,
        "horizon": None,
        "workers": 1,
    },
    "plotdata": {},
    "verify": {"criteria": None, "base_seed": 2026},
}


def _resolve(args: argparse.Namespace) -> dict:
    cfg = dict(_DEFAULTS.get(args.command, {}))
    if getattr(args, "config", None):
        path = Path(args.config)
        try:
            loaded = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}")
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        for k, v in loaded.items():
            if k in ("command", "out"):
                continue
            cfg[k] = v
    for k, v in vars(args).items():
        if k in ("command", "config", "out") or v is None or v is False:
            continue
        cfg[k] = v
    return cfg


def _outdir(args) -> Path:
    out = Path(args.out) if args.out else Path("out") / args.command
    out.mkdir(parents=True, exist_ok=True)
    return out


def _params(cfg, horizon_key="horizon") -> ProtocolParams:
    try:
        return ProtocolParams(
            n=int(cfg["n"]),
            s=int(cfg["s"]),
            rho=float(cfg["rho"]),
            seed=int(cfg["seed"]),
            horizon_time=float(cfg[horizon_key]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid protocol parameters: {exc}")


def _trial_row(r) -> dict:
    return {
        "seed": r.seed,
        "reached_consensus": r.reached_consensus,
        "consensus_correct": r.consensus_correct,
        "consensus_step": r.consensus_step,
        "consensus_time": r.consensus_time,
        "total_communications": r.total_communications,
    }


def cmd_ode(args) -> int:
    cfg = _resolve(args)
    out = _outdir(args)
    state = initial_state(int(cfg["s"]), float(cfg["rho"]))
    trace = integrate(
        state,
        float(cfg["t_end"]),
        step=cfg["step"],
        record_every=int(cfg["record_every"]),
    )
    trace.rho = float(cfg["rho"])
    write_trace(trace, out / "meanfield_trace.txt")
    results = {"rows": len(trace), "t_end": float(trace.sample_times[-1])}
    bound_reports = []
    if cfg.get("bounds"):
        pp = PotentialParams.for_run(int(cfg["s"]), float(cfg["rho"]))
        bound_reports = check_bounds(trace, pp)
        results["bounds_all_hold"] = all(r.holds for r in bound_reports)
        try:
            t1 = detect_T1(trace, pp.lambda_target)
            results["T1"] = t1
            if cfg.get("n_ref"):
                results["phase_schedule"] = phase_schedule(
                    t1, int(cfg["s"]), int(cfg["n_ref"]), float(cfg["theta"])
                )
        except PhaseNotReachedError as exc:
            results["T1"] = None
            results["T1_note"] = str(exc)
    write_summary(out / "summary.json", cfg, results, bound_reports=bound_reports)
    write_manifest(out, "ode", cfg)
    print(f"wrote {out / 'meanfield_trace.txt'} ({len(trace)} rows)")
    return 0


def cmd_sim(args) -> int:
    cfg = _resolve(args)
    out = _outdir(args)
    params = _params(cfg)
    res = run_trial(
        params,
        sample_interval=float(cfg["sample_interval"]),
        early_stop=not cfg.get("full_horizon", False),
    )
    write_trace(res.trace, out / "random_trace.txt")
    write_summary(out / "summary.json", cfg, _trial_row(res))
    write_manifest(out, "sim", cfg, seeds=[params.seed])
    print(
        f"consensus={res.reached_consensus} t={res.consensus_time} "
        f"comms={res.total_communications}"
    )
    return 0


def cmd_ensemble(args) -> int:
    cfg = _resolve(args)
    out = _outdir(args)
    params = _params(cfg)
    results = run_ensemble(
        params,
        trials=int(cfg["trials"]),
        sample_interval=float(cfg["sample_interval"]),
        workers=int(cfg.get("workers", 1)),
    )
    rows = [_trial_row(r) for r in results]
    ok = [r for r in results if r.reached_consensus and r.consensus_correct]
    summary = {
        "trials": len(results),
        "correct_consensus": len(ok),
        "median_consensus_time": float(np.median([r.consensus_time for r in ok]))
        if ok
        else None,
        "median_communications": float(np.median([r.total_communications for r in ok]))
        if ok
        else None,
        "per_trial": rows,
    }
    if cfg.get("save_traces"):
        for i, r in enumerate(results):
            write_trace(r.trace, out / f"trace_{i:03d}.txt")
    write_summary(out / "summary.json", cfg, summary)
    write_manifest(out, "ensemble", cfg, seeds=[r.seed for r in results])
    print(f"{len(ok)}/{len(results)} correct consensus")
    return 0


def cmd_baseline(args) -> int:
    cfg = _resolve(args)
    out = _outdir(args)
    res = three_state_baseline(
        n=int(cfg["n"]),
        rho=float(cfg["rho"]),
        seed=int(cfg["seed"]),
        horizon=float(cfg["horizon"]),
        sample_interval=float(cfg["sample_interval"]),
    )
    write_trace(res.trace, out / "baseline_trace.txt")
    write_summary(out / "summary.json", cfg, _trial_row(res))
    write_manifest(out, "baseline", cfg, seeds=[int(cfg["seed"])])
    print(
        f"consensus={res.reached_consensus} t={res.consensus_time} "
        f"comms={res.total_communications}"
    )
    return 0


def cmd_compare(args) -> int:
    cfg = _resolve(args)
    out = _outdir(args)
    if not cfg.get("random_trace") or not cfg.get("ode_trace"):
        raise ConfigError("compare needs --random-trace and --ode-trace")
    rt = read_trace(cfg["random_trace"])
    ot = read_trace(cfg["ode_trace"])
    t_min = cfg.get("t_min")
    t_max = cfg.get("t_max")
    lo = float(t_min) if t_min is not None else float(rt.sample_times[0])
    hi = float(t_max) if t_max is not None else float(
        min(rt.sample_times[-1], ot.sample_times[-1])
    )
    rep = compare(rt, ot, (lo, hi))
    write_summary(
        out / "summary.json",
        cfg,
        {"max_over_variables": rep.max_over_variables},
        deviation_reports=[rep],
    )
    write_manifest(out, "compare", cfg)
    print(f"max sup deviation {rep.max_over_variables:.4g} over {rep.window}")
    return 0


def cmd_reset(args) -> int:
    cfg = _resolve(args)
    out = _outdir(args)
    params = _params(cfg)
    ode_traces, reports = reset_experiment(params, block_length=float(cfg["block_length"]))
    rt = run_trial(params, sample_interval=max(0.01, 25.0 / params.n)).trace
    rows = [
        {
            "block": r.block_index,
            "window": list(r.window),
            "sup_alpha": r.deviation.per_variable_sup["alpha"],
            "lambda2_random_end": r.lambda2_random_end,
            "lambda2_ode_end": r.lambda2_ode_end,
        }
        for r in reports
    ]
    write_summary(
        out / "summary.json",
        cfg,
        {"blocks": rows},
        deviation_reports=[r.deviation for r in reports],
    )
    if not cfg.get("no_render"):
        report_mod.render_alpha_beta_overlay(rt, ode_traces, out, tag="reset")
    write_manifest(out, "reset", cfg, seeds=[params.seed])
    print(f"{len(reports)} blocks, max sup_alpha*s = "
          f"{max(r.deviation.per_variable_sup['alpha'] * params.s for r in reports):.4f}")
    return 0


def _grid(text) -> list:
    if isinstance(text, (list, tuple)):
        return list(text)
    return [float(x) if "." in x or "e" in x.lower() else int(x) for x in str(text).split(",")]


def cmd_sweep(args) -> int:
    cfg = _resolve(args)
    out = _outdir(args)
    cells = []
    seeds = []
    for n in _grid(cfg["n_grid"]):
        for s in _grid(cfg["s_grid"]):
            for rho in _grid(cfg["rho_grid"]):
                cell = {"n": int(n), "s": int(s), "rho": float(rho)}
                horizon = cfg.get("horizon") or 12.0 * math.log(int(n))
                try:
                    params = ProtocolParams(
                        n=int(n),
                        s=int(s),
                        rho=float(rho),
                        seed=int(cfg["seed"]),
                        horizon_time=float(horizon),
                    )
                    runs = run_ensemble(
                        params,
                        trials=int(cfg["trials"]),
                        sample_interval=1.0,
                        workers=int(cfg.get("workers", 1)),
                    )
                    seeds.extend(r.seed for r in runs)
                    ok = [r for r in runs if r.reached_consensus and r.consensus_correct]
                    cell.update(
                        success_rate=len(ok) / len(runs),
                        median_time=float(np.median([r.consensus_time for r in ok]))
                        if ok
                        else None,
                        median_communications=float(
                            np.median([r.total_communications for r in ok])
                        )
                        if ok
                        else None,
                        comm_rate=float(
                            np.median(
                                [
                                    r.total_communications / (int(n) * r.consensus_time)
                                    for r in ok
                                ]
                            )
                        )
                        if ok
                        else None,
                    )
                except Exception as exc:  # cell failures recorded, run continues
                    cell["error"] = f"{type(exc).__name__}: {exc}"
                cells.append(cell)

    # affine fit of time against |log rho| per (n, s) group
    fits = []
    for n in {c["n"] for c in cells if "error" not in c}:
        for s in {c["s"] for c in cells if "error" not in c}:
            grp = [
                c
                for c in cells
                if c.get("n") == n and c.get("s") == s and c.get("median_time") is not None
            ]
            if len(grp) >= 2:
                x = [abs(math.log(c["rho"])) for c in grp]
                y = [c["median_time"] for c in grp]
                slope, intercept = np.polyfit(x, y, 1)
                fits.append(
                    {"n": n, "s": s, "slope": float(slope), "intercept": float(intercept)}
                )
    write_summary(out / "summary.json", cfg, {"cells": cells, "time_vs_logrho_fits": fits})
    if not cfg.get("no_render"):
        report_mod.render_sweep_fit(cells, out)
    write_manifest(out, "sweep", cfg, seeds=sorted(set(seeds)))
    print(f"{len(cells)} cells, {sum(1 for c in cells if 'error' in c)} failed")
    return 0


def cmd_plotdata(args) -> int:
    cfg = _resolve(args)
    out = _outdir(args)
    traces = cfg.get("trace") or []
    if isinstance(traces, str):
        traces = [traces]
    if not traces:
        raise ConfigError("plotdata needs at least one --trace file")
    written = []
    for i, path in enumerate(traces):
        tr = read_trace(path)
        tag = f"{tr.system_tag}{i}"
        written += report_mod.emit_panels(tr, out, tag, render=not cfg.get("no_render"))
    write_manifest(out, "plotdata", cfg)
    print(f"wrote {len(written)} files to {out}")
    return 0


def cmd_verify(args) -> int:
    cfg = _resolve(args)
    out = _outdir(args)
    if cfg.get("smoke"):
        results = smoke_results(int(cfg["base_seed"]))
        payload = {
            "criteria": [
                {"index": r.index, "name": r.name, "passed": r.passed, "details": r.details}
                for r in results
            ],
            "all_passed": all(r.passed for r in results),
        }
    else:
        criteria = None
        if cfg.get("criteria"):
            criteria = [int(x) for x in str(cfg["criteria"]).split(",")]
            bad = [c for c in criteria if c not in CRITERION_NAMES]
            if bad:
                raise ConfigError(f"unknown criteria: {bad}")
        suite = VerificationSuite(base_seed=int(cfg["base_seed"]))
        results = suite.run(criteria)
        payload = suite.report_payload(results)
    for r in results:
        print(r.line())
    (out / "verify_report.json").write_text(
        json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n"
    )
    write_manifest(out, "verify", cfg)
    ok = all(r.passed for r in results)
    print("all criteria passed" if ok else "SOME CRITERIA FAILED")
    return 0 if ok else 1


_COMMANDS = {
    "ode": cmd_ode,
    "sim": cmd_sim,
    "ensemble": cmd_ensemble,
    "baseline": cmd_baseline,
    "compare": cmd_compare,
    "reset": cmd_reset,
    "sweep": cmd_sweep,
    "plotdata": cmd_plotdata,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TraceFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
