"""Command-line entry point: ``flashsim <command> [options]``.

Exit codes: 0 success, 2 invalid configuration or input, 1 runtime failure.
"""
import argparse
import copy
import json
import logging
import os
import sys

import numpy as np

from . import io
from .calibration import (
    CalibrationSpace, SimulationObjective, grid_refine, surrogate_search, validate,
)
from .config import load_document
from .facts import DegenerateSeriesError, bootstrap_weights, moment_vector, resample_returns
from .io import DataFormatError, RunManifest
from .kernel import ConfigError, run
from .scenarios import crash_metrics, mini_crash_metrics, sweep
from .signal import KalmanSmoother

log = logging.getLogger("flashsim")

DEFAULT_PRESET = {"flashcrash": "flash2010", "minicrash": "minicrash", "calibrate": "calibration",
                  "validate": "calibration"}


def _parser():
    p = argparse.ArgumentParser(prog="flashsim", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--preset", help="named preset (flash2010, minicrash, calibration)")
    common.add_argument("--seed", type=int, help="base seed (overrides the config)")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--runs", type=int, help="Monte Carlo runs")
    common.add_argument("--threads", type=int, default=1, help="worker processes")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("simulate", parents=[common], help="run one session and write its outputs")

    s = sub.add_parser("calibrate", parents=[common], help="calibrate the seven parameters")
    _hist_args(s)
    s.add_argument("--budget", type=int, help="simulator evaluations of the surrogate search")

    s = sub.add_parser("validate", parents=[common], help="p-value test and moment coverage")
    _hist_args(s)
    s.add_argument("--theta", required=True, help="JSON with theta_hat (e.g. calibration.json)")

    sub.add_parser("flashcrash", parents=[common], help="flash-crash Monte Carlo runs")
    sub.add_parser("minicrash", parents=[common], help="mini-crash Monte Carlo runs")

    s = sub.add_parser("sweep", parents=[common], help="sweep one parameter")
    s.add_argument("--param", required=True, help="r, eps_limit, S_interval or a dotted config key")
    s.add_argument("--grid", required=True, help="comma-separated values")
    s.add_argument("--mode", choices=("flash", "mini"), default="flash")
    s.add_argument("--k", type=float, default=3, help="sd multiplier counted in mini mode")

    s = sub.add_parser("kalman", parents=[common], help="smooth a per-second price series")
    s.add_argument("input", help="single-column CSV of per-second prices")

    s = sub.add_parser("stats", parents=[common], help="moment vector of a return series")
    s.add_argument("input", help="single-column CSV of returns")
    return p


def _hist_args(s):
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--returns", help="single-column CSV of historical 1 s returns")
    g.add_argument("--prices", help="time_ms,price CSV of historical prices")


def _hist(args):
    if args.returns:
        return io.read_series(args.returns)
    px = io.ingest_price_csv(args.prices)
    return px[1:] / px[:-1] - 1.0


def _doc(args):
    doc = load_document(args.config, args.preset or DEFAULT_PRESET.get(args.command))
    if args.seed is not None:
        doc.sim.seed = args.seed
    return doc


def _manifest(args, seeds):
    return RunManifest(command=args.command, config_path=args.config,
                       config_hash=io.file_hash(args.config) if args.config else None,
                       seeds=list(seeds))


def _seeds(doc, runs):
    return [doc.sim.seed + j for j in range(runs)]


def cmd_simulate(args):
    doc = _doc(args)
    rec = run(doc.sim)
    metrics = {"n_trades": len(rec.trades["step"]), "n_orders": rec.n_orders,
               "discarded_volume": rec.discarded_volume,
               "final_inventory": dict(zip(("FT", "LMT", "SMT", "NT", "MM", "INS", "ST"),
                                           rec.inventory[-1].tolist()))}
    try:
        r = resample_returns(rec.mid, doc.sim.warmup_steps, doc.sim.steps_per_second)
        metrics["moments"] = moment_vector(r).to_dict()
    except (ValueError, DegenerateSeriesError) as exc:
        metrics["moments"] = f"unavailable: {exc}"
    io.emit_outputs(rec, args.out, metrics, _manifest(args, [doc.sim.seed]))


def _space(doc):
    return CalibrationSpace({k: tuple(v) for k, v in doc.calibration.bounds.items()})


def cmd_calibrate(args):
    doc = _doc(args)
    cs = doc.calibration
    hist = _hist(args)
    w = bootstrap_weights(hist, seed=doc.sim.seed)
    space = _space(doc)
    obj = SimulationObjective(doc.sim, space, w, threads=args.threads)
    rep = surrogate_search(obj, space, args.budget or cs.budget, cs.n_rep, seed=doc.sim.seed,
                           design_fraction=cs.design_fraction, batch_size=cs.batch_size,
                           pool_size=cs.pool_size)
    seeds = sorted({r["seed"] for r in rep.eval_log})
    ref = grid_refine(obj, space, rep.theta_hat, cs.grid_radius * (space.upper - space.lower),
                      cs.grid_points, seeds=seeds, center_d=rep.d_hat)
    os.makedirs(args.out, exist_ok=True)
    files = [os.path.join(args.out, f) for f in ("calibration.json", "weights.json", "eval_log.csv")]
    io.write_json(files[0], {"theta_hat": ref.theta_hat, "d_hat": ref.d_hat,
                             "search": rep.to_dict(), "refine": ref.to_dict()})
    io.write_json(files[1], w.to_dict())
    rows = [[*r["theta"].values(), "%.6f" % r["d"], r["seed"], r["replication"], stage]
            for stage, rr in (("search", rep), ("refine", ref)) for r in rr.eval_log]
    io.write_rows(files[2], [*space.names, "d", "seed", "replication", "stage"], rows)
    io.finish_manifest(_manifest(args, seeds), args.out, files)


def cmd_validate(args):
    doc = _doc(args)
    with open(args.theta) as fh:
        theta = json.load(fh)
    theta = theta.get("theta_hat", theta)
    hist = _hist(args)
    w = bootstrap_weights(hist, seed=doc.sim.seed)
    n = args.runs or doc.calibration.n_validation
    rep = validate(theta, doc.sim, w, n, seed=doc.sim.seed + 10_000, threads=args.threads,
                   space=_space(doc))
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "validation.json")
    io.write_json(path, rep.to_dict())
    io.finish_manifest(_manifest(args, [doc.sim.seed + 10_000 + j for j in range(n)]),
                       args.out, [path])


def _mc(args, fn):
    doc = _doc(args)
    runs = args.runs or 1
    seeds = _seeds(doc, runs)
    rows, files = [], []
    os.makedirs(args.out, exist_ok=True)
    for s in seeds:
        cfg = copy.deepcopy(doc.sim)
        cfg.seed = s
        rec = run(cfg)
        rows.append(fn(rec, doc))
        log.info("seed %d: %s", s, rows[-1])
        if runs == 1:
            m = io.emit_outputs(rec, args.out, rows[-1], _manifest(args, seeds))
            files = [os.path.join(args.out, f) for f in m.files if f != "manifest.json"]
    return doc, seeds, rows, files


def cmd_flashcrash(args):
    doc, seeds, rows, files = _mc(args, lambda rec, doc: crash_metrics(rec).to_dict())
    path = os.path.join(args.out, "crash_metrics.csv")
    keys = list(rows[0])
    io.write_rows(path, ["seed", *keys], [[s, *(r[k] for k in keys)] for s, r in zip(seeds, rows)])
    amp = np.array([r["amplitude"] for r in rows])
    summary = os.path.join(args.out, "summary.json")
    io.write_json(summary, {"median_amplitude": float(np.median(amp)), "n_runs": len(rows)})
    io.finish_manifest(_manifest(args, seeds), args.out, files + [path, summary])


def cmd_minicrash(args):
    def metrics(rec, doc):
        d = doc.detection
        res = mini_crash_metrics(rec, d.k, d.window_seconds, d.recovery, d.move_seconds)
        return res.to_dict()
    doc, seeds, rows, files = _mc(args, metrics)
    ks = doc.detection.k
    path = os.path.join(args.out, "minicrash_counts.csv")
    io.write_rows(path, ["seed", *[f"crashes_k{k}" for k in ks], *[f"flare_ups_k{k}" for k in ks]],
                  [[s, *(r["counts"][k] for k in ks), *(r["flare_counts"][k] for k in ks)]
                   for s, r in zip(seeds, rows)])
    io.finish_manifest(_manifest(args, seeds), args.out, files + [path])


def cmd_sweep(args):
    doc = _doc(args)
    try:
        grid = [float(v) for v in args.grid.split(",")]
    except ValueError as exc:
        raise ConfigError(f"--grid must be comma-separated numbers: {exc}") from exc
    d = doc.detection
    n = args.runs or doc.sweep.n_runs
    res = sweep(doc.sim, args.param, grid, n, seed=doc.sim.seed, mode=args.mode, ks=d.k,
                count_k=args.k, window=d.window_seconds, recovery=d.recovery,
                move_seconds=d.move_seconds, threads=args.threads)
    os.makedirs(args.out, exist_ok=True)
    rows = res.rows()
    p1 = os.path.join(args.out, "sweep.csv")
    io.write_rows(p1, list(rows[0]), [["%.6g" % v if isinstance(v, float) else v for v in r.values()]
                                      for r in rows])
    p2 = os.path.join(args.out, "sweep.json")
    io.write_json(p2, {"param": res.param, "key": res.key, "mode": res.mode, "points": rows})
    p3 = os.path.join(args.out, "sweep_runs.json")
    io.write_json(p3, [{"value": p.value, "runs": p.runs} for p in res.points])
    io.finish_manifest(_manifest(args, _seeds(doc, n)), args.out, [p1, p2, p3])


def cmd_kalman(args):
    y = io.read_series(args.input)
    ks = KalmanSmoother().fit(y)
    os.makedirs(args.out, exist_ok=True)
    p1 = os.path.join(args.out, "fundamental.csv")
    io.write_series(p1, ks.transform(y), name="fundamental", fmt="%.6f")
    p2 = os.path.join(args.out, "kalman.json")
    io.write_json(p2, {"state_var": ks.state_var_, "obs_var": ks.obs_var_, "n_iter": ks.n_iter_,
                       "loglik": float(ks.loglik_[-1]) if len(ks.loglik_) else None})
    io.finish_manifest(_manifest(args, []), args.out, [p1, p2])


def cmd_stats(args):
    r = io.read_series(args.input)
    mv = moment_vector(r)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "moments.json")
    io.write_json(path, {**mv.to_dict(), "coverage_moments": mv.coverage_moments()})
    io.finish_manifest(_manifest(args, []), args.out, [path])


COMMANDS = {
    "simulate": cmd_simulate, "calibrate": cmd_calibrate, "validate": cmd_validate,
    "flashcrash": cmd_flashcrash, "minicrash": cmd_minicrash, "sweep": cmd_sweep,
    "kalman": cmd_kalman, "stats": cmd_stats,
}


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (ConfigError, DataFormatError, DegenerateSeriesError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        log.debug("failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
