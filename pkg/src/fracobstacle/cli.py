"""Command-line experiment runner.

    fracobstacle <sample|capacity|ergodic|diagnose|homogenize|shapes>
        [--config FILE] [--seed U64] [--out DIR] [--threads K]

Exit status: 0 success, 2 configuration error, 3 solver failure, 4 I/O.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import capacity as cap
from . import ergodic as erg
from .config import COMMANDS, ExperimentConfig, parse_shape, parse_text, validate
from .errors import ConfigInvalid, FracObstacleError, IoError
from .homogenization import (SUMMARY_COLUMNS, convergence_study, default_capacity_solver,
                             nvg_capacity_check, unit_condenser_capacity)
from .obstacles import (build_obstacles, cardinality_report, check_safety_layer, classify_indices,
                        lq_norm)
from .point_process import Window, child_seed, format_table, matern_thin
from .report import ExperimentReport, emit_report
from .shapes import Ball

log = logging.getLogger("fracobstacle")


def _mapper(threads):
    if threads == 1:
        return map, None
    pool = ProcessPoolExecutor(max_workers=threads or os.cpu_count())
    return pool.map, pool


# ---------------------------------------------------------------------------
# subcommands

def run_sample(cfg: ExperimentConfig, rep: ExperimentReport, threads):
    proc = cfg.process()
    win = cfg.window("window_lower", "window_upper")
    conf = proc.sample(win, cfg["seed"])
    rep.texts["configuration.txt"] = format_table(conf)
    rep.summary = {"points": len(conf), "intensity_hat": len(conf) / win.volume}
    rec = {"seed": cfg["seed"], "points": len(conf)}
    if cfg["thin_delta"] > 0:
        thin = matern_thin(conf, cfg["thin_delta"])
        rep.texts["thinned.txt"] = format_table(thin)
        rep.summary["retained"] = len(thin)
        rec["retained"] = len(thin)
    rep.records.append(rec)


def run_capacity(cfg: ExperimentConfig, rep: ExperimentReport, threads):
    kernel = cfg.kernel()
    T = parse_shape(cfg["target"], cfg["n"])
    opts = cfg.solver_options()
    h = cfg["h"]
    rows = []
    geom = cfg["geometry"]
    if geom == "global":
        R0 = cfg["R0"] or None
        g = cap.global_capacity(T, kernel, h, R0, options=opts)
        for k, res in enumerate(g.results):
            rows.append(res.row(f"ladder{k}"))
        rows.append({"problem_id": "global", "geometry": "global", "R": math.inf, "r": math.nan, "h": h,
                     "value": g.value, "kkt": max((r.kkt for r in g.results), default=0.0),
                     "iters": sum(r.iterations for r in g.results)})
        rep.summary = {"value": g.value, "ladder": g.ladder, "exponent": g.exponent,
                       "observed_ratio": g.observed_ratio}
        if g.ladder:
            rep.figures["capacity_ladder"] = dict(
                x=[R for R, _ in g.ladder], series={"C(T, B_R)": [v for _, v in g.ladder]},
                xlabel="R", ylabel="condenser capacity", reference=g.value)
    elif geom == "condenser":
        res = cap.condenser_capacity(T, cfg["R"], kernel, h=h, options=opts)
        rows.append(res.row("condenser"))
        rep.summary = {"value": res.value}
    else:
        res = cap.relative_capacity(T, cfg["r"], cfg["R"], kernel, h=h, options=opts)
        rows.append(res.row("relative"))
        rep.summary = {"value": res.value}
    rep.tables["capacity"] = (cap.CSV_COLUMNS, rows)
    rep.records.extend(rows)


def run_ergodic(cfg: ExperimentConfig, rep: ExperimentReport, threads):
    proc = cfg.process()
    U = cfg.window()
    q = cfg["mark_power"]
    power = None if math.isnan(q) else q
    h = None if power is None else (lambda rho: rho ** power)
    limit = erg.analytic_rescaled_limit(proc, U, power)
    trace = erg.ergodic_trace(proc, cfg["eps"], U, cfg["replicas"], cfg["seed"], h, analytic=limit)
    rep.tables["traces"] = (erg.TRACE_COLUMNS, list(trace.rows()))
    rep.tables["summary"] = (erg.SUMMARY_COLUMNS, list(trace.summary()))
    rep.records.extend(trace.rows())
    rep.figures["summary"] = dict(x=list(trace.eps), series={"mean": list(trace.mean)},
                                  bands={"mean": list(3 * trace.stderr)}, xlabel="eps",
                                  ylabel="rescaled sum", reference=limit)

    win = Window.cube(cfg["n"], 0.0, cfg["retention_window"])
    deltas = sorted(cfg["deltas"], reverse=True)
    curve = erg.retention_curve(proc, deltas, cfg["replicas"], child_seed(cfg["seed"], 1), win)
    ret_rows = []
    for d, m, se in zip(deltas, curve.mean, curve.stderr):
        oracle = erg.poisson_retention(proc.intensity, cfg["n"], d) if proc.kind == "poisson" else math.nan
        ret_rows.append({"delta": d, "mean": m, "stderr": se, "poisson_oracle": oracle})
    rep.tables["retention"] = (("delta", "mean", "stderr", "poisson_oracle"), ret_rows)
    rep.figures["retention"] = dict(x=deltas, series={"retained": list(curve.mean)},
                                    bands={"retained": list(3 * curve.stderr)}, xlabel="delta",
                                    ylabel="retained fraction")

    params = cfg.params()
    cub = cfg["cap_unit_ball"]
    if cub <= 0:
        cub = cap.global_capacity(Ball((0.0,) * cfg["n"], 1.0), cfg.kernel(), cfg["h"],
                                  options=cfg.solver_options()).value
    g = erg.gamma_estimate(proc, params, cub, cfg["gamma_replicas"], child_seed(cfg["seed"], 2))
    rep.summary = {"analytic_limit": limit, "final_mean": float(trace.mean[-1]),
                   "final_stderr": float(trace.stderr[-1]), "gamma_hat": g.value,
                   "gamma_stderr": g.stderr, "gamma_wald": g.wald, "cap_unit_ball": cub}


def _diagnose_seed(job):
    proc, params, U, eps, R, seed, window, kernel, h, cb12 = job
    conf = proc.sample(window, seed)
    out = []
    for e in eps:
        obs = build_obstacles(conf, params, e, U)
        cls = classify_indices(obs, conf, R)
        rec = {"eps": e, "seed": seed, **cardinality_report(cls, e),
               "lq_inf": lq_norm(obs, math.inf), "lq_2": lq_norm(obs, 2 * params.cap_exponent),
               "nvg_bound": nvg_capacity_check(obs, cls, kernel, h, cb12, budget=0).bound,
               "safety_layer": check_safety_layer(cls, obs), "points": len(obs)}
        out.append(rec)
    return out


DIAG_QUANTITIES = ("I_minus_I2R", "I2R_minus_G", "G_minus_VG", "NVG", "nvg_bound", "lq_inf", "lq_2")


def run_diagnose(cfg: ExperimentConfig, rep: ExperimentReport, threads):
    proc, params, U, kernel = cfg.process(), cfg.params(), cfg.window(), cfg.kernel()
    eps, R = cfg["eps"], cfg["R"]
    cb12 = unit_condenser_capacity(kernel, cfg["h"], cfg.solver_options())
    lo = np.minimum.reduce([np.asarray(U.lower) / e for e in eps])
    hi = np.maximum.reduce([np.asarray(U.upper) / e for e in eps])
    window = Window(tuple(lo), tuple(hi)).enlarged(2.0 / R)
    seeds = [child_seed(cfg["seed"], k) for k in range(cfg["replicas"])]
    jobs = [(proc, params, U, eps, R, s, window, kernel, cfg["h"], cb12) for s in seeds]
    fmap, pool = _mapper(threads)
    try:
        recs = [r for batch in fmap(_diagnose_seed, jobs) for r in batch]
    finally:
        if pool:
            pool.shutdown()
    rep.records.extend(recs)
    rows = [{"quantity": q, "eps": r["eps"], "seed": r["seed"], "value": r[q]}
            for q in DIAG_QUANTITIES for r in recs]
    rep.tables["traces"] = (erg.TRACE_COLUMNS, rows)
    summ = []
    medians = {}
    for q in DIAG_QUANTITIES:
        medians[q] = []
        for e in eps:
            vals = [r[q] for r in recs if r["eps"] == e]
            med = statistics.median(vals)
            medians[q].append(med)
            summ.append({"quantity": q, "eps": e, "median": med, "mean": float(np.mean(vals)),
                         "stderr": float(np.std(vals, ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else math.nan})
    rep.tables["summary"] = (("quantity", "eps", "median", "mean", "stderr"), summ)
    rep.summary = {"safety_layer_all": all(r["safety_layer"] for r in recs), "cap_B1_B2": cb12,
                   "medians": medians}
    rep.figures["cardinality"] = dict(x=list(eps), series={q: medians[q] for q in DIAG_QUANTITIES[:4]},
                                      xlabel="eps", ylabel="eps^n # indices")
    rep.figures["nvg_bound"] = dict(x=list(eps), series={"NVG capacity bound": medians["nvg_bound"]},
                                    xlabel="eps", ylabel="bound")


def run_homogenize(cfg: ExperimentConfig, rep: ExperimentReport, threads, template=None):
    proc, params, U, kernel = cfg.process(), cfg.params(), cfg.window(), cfg.kernel()
    solver = default_capacity_solver(kernel, cfg["cap_h"])
    fmap, pool = _mapper(threads)
    try:
        st = convergence_study(proc, params, U, cfg["f"], cfg["eps"], cfg["replicas"], cfg["seed"],
                               R=cfg["R"], h=cfg["h"], kernel=kernel, capacity_solver=solver,
                               template=template, gamma_replicas=cfg["gamma_replicas"],
                               options=cfg.solver_options(), mapper=fmap)
    finally:
        if pool:
            pool.shutdown()
    rep.records.extend(json.loads(r.to_json()) for r in st.records)
    summ = st.summary()
    rep.tables["study_summary"] = (SUMMARY_COLUMNS, summ)
    rep.summary = {"gamma_hat": st.gamma_hat, "gamma_stderr": st.gamma_stderr,
                   "effective_objective": st.effective.objective,
                   "excluded_runs": sum(r.excluded for r in st.records)}
    rep.figures["convergence"] = dict(x=[r["eps"] for r in summ],
                                      series={"median L^p distance": [r["median_lp_dist"] for r in summ]},
                                      xlabel="eps", ylabel="||u_eps - u_0||")
    return st


def run_shapes(cfg: ExperimentConfig, rep: ExperimentReport, threads):
    tpl = parse_shape(cfg["template"], cfg["n"])
    if tpl is None:
        raise ConfigInvalid("template", "must not be empty")
    run_homogenize(cfg, rep, threads, template=tpl)
    rep.summary["template"] = tpl.to_dict()


RUNNERS = {"sample": run_sample, "capacity": run_capacity, "ergodic": run_ergodic,
           "diagnose": run_diagnose, "homogenize": run_homogenize, "shapes": run_shapes}


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    rep = ExperimentReport(cfg.command, cfg.echo())
    t0 = time.perf_counter()
    RUNNERS[cfg.command](cfg, rep, threads)
    rep.wall_clock = time.perf_counter() - t0
    return rep


# ---------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--seed", type=int, help="override the configured seed (unsigned 64-bit)")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--threads", type=int, default=1, help="worker processes, 0 = all cores")
    common.add_argument("-v", "--verbose", action="store_true")
    ap = argparse.ArgumentParser(prog="fracobstacle", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return ap


def _error_record(out, err, code):
    rec = {"error": type(err).__name__, "message": str(err), "exit_code": code}
    if isinstance(err, ConfigInvalid):
        rec["key"] = err.key
    print(json.dumps(rec), file=sys.stderr)
    try:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "error.json"), "w") as fh:
            json.dump(rec, fh)
    except OSError:
        pass


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        raw = {}
        if args.config:
            try:
                with open(args.config) as fh:
                    raw = parse_text(fh.read())
            except OSError as err:
                raise IoError(f"cannot read config {args.config}: {err}") from err
        if args.seed is not None:
            raw["seed"] = str(args.seed)
        if args.threads < 0:
            raise ConfigInvalid("threads", "must be >= 0")
        cfg = validate(args.command, raw)
        rep = run_experiment(cfg, args.threads)
        emit_report(rep, args.out)
    except FracObstacleError as err:
        _error_record(args.out, err, err.exit_code)
        return err.exit_code
    except OSError as err:
        _error_record(args.out, err, 4)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
