"""Command-line driver.

Commands: fit, compare, moo, minima-study, gradcheck. Every command
honors --seed/--out/--problem/--config; unset options fall back to the
benchmark defaults (fit: 500 epochs, minibatch 10, lr 0.01; descent: 5
starts, penalty 10, 2000 epochs, lr 0.01, 10000-point grid).

Artifacts are written atomically. JSON/CSV outputs are byte-stable for a
fixed seed and config; wall-clock measurements are inherently volatile,
so they go to a separate ``timings.json`` sidecar.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import tempfile
import time

import numpy as np

from . import checks
from .baselines import (PenalizedObjective, differential_evolution,
                        grid_pareto_oracle, nelder_mead, particle_swarm)
from .engine import DescentConfig, dedup_minima, optimize
from .moo import MooProblem, sweep_pareto
from .net import TrainConfig
from .problems import get_problem, load_problem_file
from .surrogate import (DEFAULT_GRID_N, SurrogateModel, default_fit_config,
                        fit_surrogate, generate_grid)

FORMAT_VERSION = 1
OPTIMIZER_NAMES = ("descent", "nelder-mead", "de", "pso")


def _atomic_write(path, data: bytes):
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj):
    _atomic_write(path, (json.dumps(obj, sort_keys=True, indent=2) + "\n").encode())


def fmt_float(v):
    return repr(float(v))


def write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt_float(v) if isinstance(v, float) else str(v)
                              for v in row))
    _atomic_write(path, ("\n".join(lines) + "\n").encode())


def _load_config_file(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def resolve_problem(args, config):
    name = args.problem or config.get("problem")
    path = getattr(args, "problem_file", None) or config.get("problem_file")
    if path:
        return load_problem_file(path)
    if name is None:
        raise SystemExit("no problem given: use --problem or --problem-file")
    if name.endswith(".json") or os.path.sep in name:
        return load_problem_file(name)
    return get_problem(name)


def _merged(defaults: dict, section: dict, overrides: dict) -> dict:
    out = dict(defaults)
    out.update({k: v for k, v in section.items() if k in defaults})
    out.update({k: v for k, v in overrides.items() if v is not None})
    return out


def fit_settings(args, config, seed):
    base = dataclasses.asdict(default_fit_config(seed=seed))
    base["grid_n"] = DEFAULT_GRID_N
    overrides = {
        "epochs": args.fit_epochs, "minibatch_size": args.fit_minibatch,
        "learning_rate": args.fit_lr, "optimizer": args.fit_optimizer,
        "grid_n": getattr(args, "grid_n", None),
    }
    merged = _merged(base, config.get("fit", {}), overrides)
    grid_n = merged.pop("grid_n")
    merged["seed"] = seed
    return TrainConfig(**merged), grid_n


def descent_settings(args, config, seed):
    base = dataclasses.asdict(DescentConfig())
    overrides = {
        "n_starts": args.n_starts, "penalty": args.penalty,
        "epochs": args.epochs, "learning_rate": args.lr,
        "grid_n": getattr(args, "grid_n", None),
        "weight_init": args.weight_init, "optimizer": args.optimizer,
    }
    merged = _merged(base, config.get("descent", {}), overrides)
    merged["seed"] = seed
    return DescentConfig(**merged)


def model_path(out_dir, problem_name, index):
    return os.path.join(out_dir, f"{problem_name}-obj{index}.model.json")


def ensure_surrogate(problem, index, out_dir, fit_cfg, grid_n):
    """Load the model file when present; otherwise fit and persist it."""
    path = model_path(out_dir, problem.name, index)
    if os.path.exists(path):
        with open(path, "rb") as fh:
            return SurrogateModel.load(fh.read()), None
    model, report = fit_surrogate(problem, objective_index=index, cfg=fit_cfg,
                                  n_grid=grid_n)
    _atomic_write(path, model.save())
    return model, report


def cmd_fit(args):
    config = _load_config_file(args.config) if args.config else {}
    seed = args.seed if args.seed is not None else config.get("seed", 0)
    problem = resolve_problem(args, config)
    fit_cfg, grid_n = fit_settings(args, config, seed)
    os.makedirs(args.out, exist_ok=True)
    index = args.objective_index
    model, report = fit_surrogate(problem, objective_index=index, cfg=fit_cfg,
                                  n_grid=grid_n)
    _atomic_write(model_path(args.out, problem.name, index), model.save())
    write_json(os.path.join(args.out, f"{problem.name}-obj{index}.fit.json"), {
        "format_version": FORMAT_VERSION,
        "problem": problem.name,
        "objective_index": index,
        "seed": seed,
        "hyperparameters": dataclasses.asdict(fit_cfg) | {"grid_n": grid_n},
        "report": report.to_dict(),
    })
    print(f"fitted {problem.name} objective {index}: "
          f"holdout rmse {report.holdout_rmse:.6g} "
          f"(normalized {report.normalized_rmse:.6g})")
    return 0


def _solution_row(name, sol, dim, error=None):
    row = {"optimizer": name, "error": error or ""}
    for i in range(dim):
        row[f"x{i + 1}"] = float(sol.x[i]) if sol is not None else ""
    row["f_surrogate"] = ("" if sol is None or sol.f_surrogate is None
                          else float(sol.f_surrogate))
    row["f_true"] = "" if sol is None or sol.f_true is None else float(sol.f_true)
    row["max_violation"] = "" if sol is None else float(sol.max_violation)
    row["feasible"] = "" if sol is None else sol.feasible
    row["converged"] = "" if sol is None else sol.converged
    return row


def _best_feasible_grid_start(problem, grid_n):
    grid = generate_grid(problem.box, grid_n)
    feasible = np.ones(grid.shape[0], dtype=bool)
    for con in problem.constraints:
        vals = np.asarray(con.fn(grid), dtype=float)
        feasible &= (vals <= 0.0) if con.kind == "ineq" else (np.abs(vals) <= 1e-3)
    if not feasible.any():
        raise SystemExit("no feasible grid start for the simplex baseline")
    pts = grid[feasible]
    vals = np.asarray(problem.objectives[0](pts), dtype=float)
    return pts[int(np.argmin(vals))]


def cmd_compare(args):
    config = _load_config_file(args.config) if args.config else {}
    seed = args.seed if args.seed is not None else config.get("seed", 0)
    problem = resolve_problem(args, config)
    fit_cfg, grid_n = fit_settings(args, config, seed)
    descent_cfg = descent_settings(args, config, seed)
    os.makedirs(args.out, exist_ok=True)
    names = [n.strip() for n in args.optimizers.split(",") if n.strip()]
    unknown = [n for n in names if n not in OPTIMIZER_NAMES]
    if unknown:
        raise SystemExit(f"unknown optimizers: {unknown}; known: {OPTIMIZER_NAMES}")

    # The surrogate column is reported for every row, so fit unconditionally.
    model, _ = ensure_surrogate(problem, 0, args.out, fit_cfg, grid_n)
    pf = PenalizedObjective(problem.objectives[0], problem.constraints)
    rows, timings, failures = [], {}, []
    for name in names:
        start = time.perf_counter()
        sol, error = None, None
        try:
            if name == "descent":
                sol = optimize(problem, model, problem.constraints, descent_cfg).best
            elif name == "nelder-mead":
                x0 = _best_feasible_grid_start(problem, descent_cfg.grid_n)
                sol = nelder_mead(pf, x0, box=problem.box)
            elif name == "de":
                sol = differential_evolution(pf, problem.box, seed=seed)
            elif name == "pso":
                sol = particle_swarm(pf, problem.box, seed=seed)
        except Exception as exc:  # recorded in-row; the run continues
            error = f"{type(exc).__name__}: {exc}"
            failures.append(name)
        timings[name] = time.perf_counter() - start
        if sol is not None and sol.f_surrogate is None and model is not None:
            sol.f_surrogate = model.eval(sol.x)
        if sol is not None:
            sol.f_true = float(problem.objectives[0](sol.x))
        rows.append(_solution_row(name, sol, problem.dim, error))

    header = (["optimizer"] + [f"x{i + 1}" for i in range(problem.dim)]
              + ["f_surrogate", "f_true", "max_violation", "feasible",
                 "converged", "error"])
    write_csv(os.path.join(args.out, "report.csv"), header,
              [[row[h] for h in header] for row in rows])
    write_json(os.path.join(args.out, "report.json"), {
        "format_version": FORMAT_VERSION,
        "problem": problem.name,
        "seed": seed,
        "hyperparameters": {
            "fit": dataclasses.asdict(fit_cfg) | {"grid_n": grid_n},
            "descent": dataclasses.asdict(descent_cfg),
        },
        "rows": rows,
    })
    write_json(os.path.join(args.out, "timings.json"), {
        "format_version": FORMAT_VERSION,
        "note": "wall times in seconds, optimization only; "
                "non-deterministic by nature",
        "rows": {k: round(v, 6) for k, v in timings.items()},
    })
    for row in rows:
        print(f"{row['optimizer']:12s} f_true={row['f_true']} "
              f"feasible={row['feasible']} {row['error']}")
    all_feasible = all(row["feasible"] is True for row in rows)
    return 0 if not failures and all_feasible else 1


def cmd_moo(args):
    config = _load_config_file(args.config) if args.config else {}
    seed = args.seed if args.seed is not None else config.get("seed", 0)
    problem = resolve_problem(args, config)
    if len(problem.objectives) != 2:
        raise SystemExit("the moo command needs a problem with two objectives")
    fit_cfg, grid_n = fit_settings(args, config, seed)
    descent_cfg = descent_settings(args, config, seed)
    os.makedirs(args.out, exist_ok=True)
    models = []
    for i in range(2):
        model, _ = ensure_surrogate(problem, i, args.out, fit_cfg, grid_n)
        models.append(model)
    mp = MooProblem(surrogates=models, constraints=problem.constraints,
                    box=problem.box, primary=0,
                    true_objectives=problem.objectives, name=problem.name)
    start = time.perf_counter()
    front, attempts = sweep_pareto(mp, args.n_sweep, descent_cfg)
    sweep_seconds = time.perf_counter() - start

    header = ([f"x{i + 1}" for i in range(problem.dim)]
              + ["f1_true", "f2_true", "f1_surr", "f2_surr", "u_bound", "feasible"])

    def point_row(pt):
        truths = pt.f_true if pt.f_true is not None else ("", "")
        return ([float(v) for v in pt.x] + [truths[0], truths[1],
                float(pt.f_surrogate[0]), float(pt.f_surrogate[1]),
                float(pt.u_bound), pt.feasible])

    write_csv(os.path.join(args.out, "pareto.csv"), header,
              [point_row(pt) for pt in front])
    write_csv(os.path.join(args.out, "sweep_attempts.csv"), header,
              [point_row(pt) for pt in attempts])

    oracle = grid_pareto_oracle(problem.objectives, problem.constraints,
                                problem.box, resolution=args.oracle_resolution)
    oracle_header = [f"x{i + 1}" for i in range(problem.dim)] + ["f1", "f2"]
    write_csv(os.path.join(args.out, "oracle.csv"), oracle_header,
              [[float(v) for v in x] + [float(f[0]), float(f[1])]
               for x, f in zip(oracle.x, oracle.f)])

    ranges = np.max(oracle.f, axis=0) - np.min(oracle.f, axis=0)
    margins = []
    for pt in front:
        fv = np.asarray(pt.f_true if pt.f_true is not None else pt.f_surrogate)
        slack = np.max((fv - oracle.f) / ranges, axis=1)
        margins.append(float(np.min(slack)))
    stats = {
        "format_version": FORMAT_VERSION,
        "problem": problem.name,
        "seed": seed,
        "n_sweep": args.n_sweep,
        "n_feasible": sum(pt.feasible for pt in attempts),
        "n_front": len(front),
        "oracle_resolution": args.oracle_resolution,
        "oracle_front_size": int(len(oracle.f)),
        "objective_ranges": [float(r) for r in ranges],
        "worst_domination_margin": max(margins) if margins else None,
    }
    write_json(os.path.join(args.out, "match_stats.json"), stats)
    write_json(os.path.join(args.out, "timings.json"), {
        "format_version": FORMAT_VERSION,
        "note": "wall times in seconds, optimization only; "
                "non-deterministic by nature",
        "rows": {"sweep": round(sweep_seconds, 6)},
    })
    print(f"front: {len(front)} points, {stats['n_feasible']}/{args.n_sweep} "
          f"feasible sweep points")
    return 0 if all(pt.feasible for pt in front) else 1


def cmd_minima_study(args):
    config = _load_config_file(args.config) if args.config else {}
    seed = args.seed if args.seed is not None else config.get("seed", 0)
    args.problem = args.problem or "discussion"
    problem = resolve_problem(args, config)
    fit_cfg, grid_n = fit_settings(args, config, seed)
    descent_cfg = descent_settings(args, config, seed)
    os.makedirs(args.out, exist_ok=True)
    model, _ = ensure_surrogate(problem, 0, args.out, fit_cfg, grid_n)

    def run_cell(weight_init, n_starts, repetitions):
        sols = []
        for rep in range(repetitions):
            cfg = dataclasses.replace(descent_cfg, weight_init=weight_init,
                                      n_starts=n_starts,
                                      seed=descent_cfg.seed + 7919 * rep)
            res = optimize(problem, model, problem.constraints, cfg)
            sols.extend(res.solutions)
        minima = dedup_minima(sols, problem.box)
        return {
            "n_minima": len(minima),
            "minima": [[float(v) for v in m.x] for m in minima],
            "surrogate_values": [float(m.f_surrogate) for m in minima],
        }

    reps = args.repetitions
    cells = {}
    for weight_init in ("unit", "random"):
        cells[f"{weight_init}|1_start|single_run"] = run_cell(weight_init, 1, 1)
        cells[f"{weight_init}|1_start|{reps}_runs"] = run_cell(weight_init, 1, reps)
        cells[f"{weight_init}|{descent_cfg.n_starts}_starts|single_run"] = \
            run_cell(weight_init, descent_cfg.n_starts, 1)
    doc = {
        "format_version": FORMAT_VERSION,
        "problem": problem.name,
        "seed": seed,
        "repetitions": reps,
        "hyperparameters": dataclasses.asdict(descent_cfg),
        "cells": cells,
    }
    write_json(os.path.join(args.out, "minima_study.json"), doc)
    write_csv(os.path.join(args.out, "minima_study.csv"),
              ["cell", "n_minima"],
              [[k, v["n_minima"]] for k, v in sorted(cells.items())])
    for k in sorted(cells):
        print(f"{k:32s} -> {cells[k]['n_minima']} minima")
    return 0


def cmd_gradcheck(args):
    config = _load_config_file(args.config) if args.config else {}
    seed = args.seed if args.seed is not None else config.get("seed", 0)
    suites = None
    if args.suites is not None:
        suites = [s.strip() for s in args.suites.split(",") if s.strip()]
        if not suites:
            raise SystemExit("empty suite selection")
    try:
        results = checks.run_gradient_checks(seed=seed, suites=suites,
                                             fault=args.inject_fault)
    except ValueError as exc:
        raise SystemExit(str(exc))
    for r in results:
        status = "pass" if r.passed else "FAIL"
        print(f"{status}  {r.name:40s} max_rel_err={r.max_rel_err:.3e} "
              f"({r.cases} cases)")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_json(os.path.join(args.out, "gradcheck.json"), {
            "format_version": FORMAT_VERSION,
            "seed": seed,
            "results": [r.to_dict() for r in results],
        })
    return 0 if all(r.passed for r in results) else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="surropt",
        description="Surrogate-descent optimization benchmark driver")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="global seed (default: config file value or 0)")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--problem", default=None,
                        help="registry problem name or JSON problem file")
    common.add_argument("--problem-file", default=None,
                        help="declarative JSON problem definition")
    common.add_argument("--config", default=None, help="JSON run-config file")
    common.add_argument("--fit-epochs", type=int, default=None)
    common.add_argument("--fit-minibatch", type=int, default=None)
    common.add_argument("--fit-lr", type=float, default=None)
    common.add_argument("--fit-optimizer", choices=("sgd", "adam"), default=None)
    common.add_argument("--grid-n", type=int, default=None,
                        help="lattice size for fitting and grid search")
    common.add_argument("--n-starts", type=int, default=None)
    common.add_argument("--penalty", type=float, default=None)
    common.add_argument("--epochs", type=int, default=None,
                        help="descent epochs per restart")
    common.add_argument("--lr", type=float, default=None,
                        help="descent learning rate")
    common.add_argument("--weight-init", choices=("unit", "random"), default=None)
    common.add_argument("--optimizer", choices=("sgd", "adam"), default=None,
                        help="descent update rule")

    sub = parser.add_subparsers(dest="command", required=True)
    p_fit = sub.add_parser("fit", parents=[common],
                           help="fit a surrogate for one objective")
    p_fit.add_argument("--objective-index", type=int, default=0)
    p_fit.set_defaults(func=cmd_fit)

    p_cmp = sub.add_parser("compare", parents=[common],
                           help="run the descent optimizer against baselines")
    p_cmp.add_argument("--optimizers", default="descent,nelder-mead,de,pso")
    p_cmp.set_defaults(func=cmd_compare)

    p_moo = sub.add_parser("moo", parents=[common],
                           help="sweep a two-objective Pareto front")
    p_moo.add_argument("--n-sweep", type=int, default=20)
    p_moo.add_argument("--oracle-resolution", type=int, default=400)
    p_moo.set_defaults(func=cmd_moo)

    p_min = sub.add_parser("minima-study", parents=[common],
                           help="count distinct minima across start/init settings")
    p_min.add_argument("--repetitions", type=int, default=10)
    p_min.set_defaults(func=cmd_minima_study)

    p_gc = sub.add_parser("gradcheck", parents=[common],
                          help="finite-difference gradient verification")
    p_gc.add_argument("--suites", default=None,
                      help="comma-separated suite names (default: all)")
    p_gc.add_argument("--inject-fault", default=None,
                      help="corrupt one activation derivative (test hook)")
    p_gc.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
