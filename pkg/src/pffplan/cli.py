"""Command-line entry point: data generation, training, planning,
benchmarking, and figure re-rendering.

Configuration comes from flags, optionally layered over a JSON config
file (flags override the file; unknown config keys are rejected).
Exit codes: 0 success (including a planner returning no solution),
2 usage/configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from . import learning, ocp_solver, planner, plots
from .dynamics import (DOUBLE_INTEGRATOR, KINEMATIC_CAR, N_POS,
                       SystemModel, Trajectory, double_integrator,
                       kinematic_car)
from .environment import Env, corridor_env, empty_env, random_env
from .linear_steering import double_integrator_linear

SYSTEMS = {"di": double_integrator, "car": kinematic_car}

#: wall-time buckets per decade for benchmark aggregation
BENCH_BUCKETS = 8


class UsageError(ValueError):
    pass


def _system(name: str) -> SystemModel:
    try:
        return SYSTEMS[name]()
    except KeyError:
        raise UsageError(f"unknown system {name!r} (choose from "
                         f"{sorted(SYSTEMS)})")


def _load_env(spec: str) -> Env:
    if spec == "corridor":
        return corridor_env()
    if spec == "empty":
        return empty_env()
    if spec.startswith("random:"):
        return random_env(int(spec.split(":", 1)[1]))
    if os.path.exists(spec):
        return Env.load(spec)
    raise UsageError(f"unknown environment {spec!r}: expected 'corridor', "
                     "'empty', 'random:<seed>', or a JSON file path")


def _floats(text: str) -> np.ndarray:
    return np.array([float(v) for v in text.split(",")])


def _make_backend(args, system: SystemModel):
    if args.backend == "linear":
        if system.kind != DOUBLE_INTEGRATOR:
            raise UsageError("the analytical linear backend supports only "
                             "the double integrator")
        return planner.LinearPFFBackend(double_integrator_linear())
    if args.backend == "learned":
        if not args.control_model or not args.cost_model:
            raise UsageError("learned backend needs --control-model and "
                             "--cost-model")
        return planner.LearnedPFFBackend(
            system,
            learning.Mlp.load(args.control_model),
            learning.Mlp.load(args.cost_model))
    raise UsageError(f"unknown backend {args.backend!r}")


PLANNERS = {
    "fmt_pff": planner.plan_fmt_pff,
    "fmt_full": planner.plan_fmt_full,
    "kino_rrt_star": planner.plan_kino_rrt_star,
}


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_data(args) -> int:
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    system = _system(args.system)
    dataset, manifest = ocp_solver.generate_dataset(system, args.n,
                                                    seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    ocp_solver.save_dataset(dataset, manifest,
                            os.path.join(args.out, "dataset.csv"),
                            os.path.join(args.out, "manifest.json"))
    print(f"success rate: {manifest['success_rate']:.3f} "
          f"({manifest['n_solved']}/{manifest['n_requested']} trajectories, "
          f"{len(dataset)} rows)")
    return 0


def cmd_train(args) -> int:
    with open(args.dataset) as f:
        text = f.read()
    box = None
    manifest_path = os.path.join(os.path.dirname(args.dataset),
                                 "manifest.json")
    if os.path.exists(manifest_path):
        with open(manifest_path) as f:
            box = np.asarray(json.load(f)["box"], dtype=float)
    dataset = ocp_solver.dataset_from_csv(text, box=box)
    system = _system(args.system)
    feature = (learning.FEATURE_CAR_ANGLE if system.kind == KINEMATIC_CAR
               else learning.FEATURE_IDENTITY)
    cfg = learning.TrainConfig(epochs=args.epochs, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)

    control_net, hist_u = learning.train(
        dataset, cfg, target="control", feature=feature,
        output_clip=system.control_bounds, train_box=dataset.box)
    control_net.save(os.path.join(args.out, "control_model.json"))
    learning.save_history_csv(hist_u,
                              os.path.join(args.out, "control_history.csv"))

    cost_net, hist_c = learning.train(dataset, cfg, target="cost",
                                      feature=feature,
                                      train_box=dataset.box)
    cost_net.save(os.path.join(args.out, "cost_model.json"))
    learning.save_history_csv(hist_c,
                              os.path.join(args.out, "cost_history.csv"))

    # the saved nets are the best-validation snapshots, so report the
    # matching losses
    metrics = {"control_val_loss": min(h[2] for h in hist_u),
               "cost_val_loss": min(h[2] for h in hist_c)}
    with open(os.path.join(args.out, "metrics.json"), "w") as f:
        json.dump(metrics, f, indent=2)
    print(f"control val loss: {metrics['control_val_loss']:.6g}  "
          f"cost val loss: {metrics['cost_val_loss']:.6g}")
    return 0


def cmd_plan(args) -> int:
    system = _system(args.system)
    env = _load_env(args.env)
    backend = _make_backend(args, system)
    q = planner.PlanQuery(env, system, backend, _floats(args.start),
                          _floats(args.goal), m=args.m, r=args.r,
                          goal_tolerance=args.goal_tolerance, seed=args.seed)
    result = PLANNERS[args.planner](q)
    os.makedirs(args.out, exist_ok=True)
    result.save(args.out)
    plots.plot_result_tree(result, os.path.join(args.out, "tree.svg"),
                           title=f"{args.planner} ({result.outcome})")
    print(f"outcome: {result.outcome}  cost: {result.cost:.4f}  "
          f"vertices: {len(result.tree)}  "
          f"wall time: {result.wall_time_s:.2f}s")
    return 0


def _cost_at(events, t: float):
    """Best solution cost achieved by wall time t, or None."""
    best = None
    for et, ec in events:
        if et <= t and (best is None or ec < best):
            best = ec
    return best


def _bucket_times(wall_times):
    lo = max(min(wall_times), 1e-3)
    hi = max(wall_times)
    n = max(2, int(math.ceil(BENCH_BUCKETS
                             * math.log10(max(hi / lo, 1.0 + 1e-9)))))
    return np.geomspace(lo, hi, n)


def summarize_benchmark(rows):
    """Median cost per wall-time bucket per planner from raw run rows.

    Each row: dict with planner, m, seed, outcome, cost, wall_time_s,
    events (list of (t, cost)).  A run contributes to a bucket at time
    t if it has found some solution by t; its best-so-far cost at t is
    used (the final cost persists after the run completes).
    """
    if not rows:
        return []
    buckets = _bucket_times([r["wall_time_s"] for r in rows])
    out = []
    for name in sorted({r["planner"] for r in rows}):
        runs = [r for r in rows if r["planner"] == name]
        for t in buckets:
            costs = [c for r in runs
                     if (c := _cost_at(r["events"], t)) is not None]
            if costs:
                out.append({"planner": name, "bucket_time_s": float(t),
                            "median_cost": float(np.median(costs)),
                            "n_runs": len(costs)})
    return out


def cmd_benchmark(args) -> int:
    system = _system(args.system)
    env = _load_env(args.env)
    backend = _make_backend(args, system)
    planners = args.planners.split(",")
    for p in planners:
        if p not in PLANNERS:
            raise UsageError(f"unknown planner {p!r}")
    ms = [int(v) for v in args.m_values.split(",")]
    os.makedirs(args.out, exist_ok=True)

    rows = []
    for name in planners:
        for m in ms:
            for seed in range(args.seeds):
                q = planner.PlanQuery(env, system, backend,
                                      _floats(args.start),
                                      _floats(args.goal), m=m, r=args.r,
                                      goal_tolerance=args.goal_tolerance,
                                      seed=seed)
                res = PLANNERS[name](q)
                rows.append({"planner": name, "m": m, "seed": seed,
                             "outcome": res.outcome,
                             "cost": res.cost, "wall_time_s":
                             res.wall_time_s, "events": res.events})
                print(f"{name} m={m} seed={seed}: {res.outcome} "
                      f"cost={res.cost:.3f} t={res.wall_time_s:.2f}s")

    with open(os.path.join(args.out, "benchmark.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["planner", "m", "seed", "outcome", "cost",
                    "wall_time_s"])
        for r in rows:
            w.writerow([r["planner"], r["m"], r["seed"], r["outcome"],
                        repr(r["cost"]), repr(r["wall_time_s"])])
    with open(os.path.join(args.out, "events.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["planner", "m", "seed", "wall_time_s", "best_cost"])
        for r in rows:
            for t, c in r["events"]:
                w.writerow([r["planner"], r["m"], r["seed"], repr(t),
                            repr(c)])

    summary = summarize_benchmark(rows)
    with open(os.path.join(args.out, "summary.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["planner", "bucket_time_s", "median_cost", "n_runs"])
        for s in summary:
            w.writerow([s["planner"], repr(s["bucket_time_s"]),
                        repr(s["median_cost"]), s["n_runs"]])
    with open(os.path.join(args.out, "benchmark_manifest.json"), "w") as f:
        json.dump({"settings": {
            "system": args.system, "env": args.env,
            "planners": planners, "m_values": ms, "seeds": args.seeds,
            "r": args.r, "goal_tolerance": args.goal_tolerance,
            "start": list(map(float, _floats(args.start))),
            "goal": list(map(float, _floats(args.goal)))},
            "outcomes": {name: sum(1 for r in rows
                                   if r["planner"] == name
                                   and r["outcome"] == "success")
                         for name in planners}}, f, indent=2)
    _plot_benchmark(args.out, summary)
    return 0


def _plot_benchmark(outdir, summary):
    curves = {}
    for name in sorted({s["planner"] for s in summary}):
        pts = [(s["bucket_time_s"], s["median_cost"]) for s in summary
               if s["planner"] == name]
        pts.sort()
        curves[name] = ([p[0] for p in pts], [p[1] for p in pts])
    if curves:
        plots.plot_cost_curves(curves, os.path.join(outdir, "benchmark.svg"),
                               title="median solution cost vs planning time")


def cmd_plot(args) -> int:
    indir = args.input
    if os.path.exists(os.path.join(indir, "benchmark.csv")):
        return _replot_benchmark(indir, args.out)
    if os.path.exists(os.path.join(indir, "manifest.json")):
        return _replot_plan(indir, args.out)
    raise UsageError(f"{indir!r} contains neither benchmark.csv nor "
                     "manifest.json")


def _replot_plan(indir, out) -> int:
    with open(os.path.join(indir, "manifest.json")) as f:
        manifest = json.load(f)
    env = Env.from_json(manifest["settings"]["env"])
    edges = {}
    path = os.path.join(indir, "tree_edges.csv")
    if os.path.exists(path):
        with open(path) as f:
            for row in csv.DictReader(f):
                edges.setdefault(int(row["edge_id"]), []).append(
                    (float(row["x"]), float(row["y"])))
    sol = None
    tpath = os.path.join(indir, "trajectory.csv")
    if os.path.exists(tpath):
        with open(tpath) as f:
            sol = Trajectory.from_csv(f.read()).states[:, :N_POS]
    plots.plot_tree(env, [np.array(p) for p in edges.values()],
                    solution_xy=sol,
                    start=manifest["settings"]["x_s"][:N_POS],
                    goal=manifest["settings"]["goal"],
                    path=out or os.path.join(indir, "tree.svg"),
                    title=manifest["settings"]["planner"])
    return 0


def _replot_benchmark(indir, out) -> int:
    runs = {}
    with open(os.path.join(indir, "benchmark.csv")) as f:
        for row in csv.DictReader(f):
            key = (row["planner"], int(row["m"]), int(row["seed"]))
            runs[key] = {"planner": row["planner"], "m": int(row["m"]),
                         "seed": int(row["seed"]),
                         "outcome": row["outcome"],
                         "cost": float(row["cost"]),
                         "wall_time_s": float(row["wall_time_s"]),
                         "events": []}
    with open(os.path.join(indir, "events.csv")) as f:
        for row in csv.DictReader(f):
            key = (row["planner"], int(row["m"]), int(row["seed"]))
            runs[key]["events"].append((float(row["wall_time_s"]),
                                        float(row["best_cost"])))
    summary = summarize_benchmark(list(runs.values()))
    _plot_benchmark(out and os.path.dirname(out) or indir, summary)
    return 0


# ---------------------------------------------------------------------------
# argument parsing with JSON config layering


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pffplan",
        description="kinodynamic planning with partial-final-state-free "
                    "steering")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON config file; flags override")
        p.add_argument("--seed", type=int, default=argparse.SUPPRESS)

    p = sub.add_parser("gen-data", help="generate steering training data")
    add_common(p)
    p.add_argument("--system", default=argparse.SUPPRESS)
    p.add_argument("--n", type=int, default=argparse.SUPPRESS)
    p.add_argument("--out", default=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gen_data,
                   defaults={"system": "car", "n": 100, "seed": 0,
                             "out": "data"})

    p = sub.add_parser("train", help="train steering controller + cost nets")
    add_common(p)
    p.add_argument("--dataset", default=argparse.SUPPRESS)
    p.add_argument("--system", default=argparse.SUPPRESS)
    p.add_argument("--epochs", type=int, default=argparse.SUPPRESS)
    p.add_argument("--out", default=argparse.SUPPRESS)
    p.set_defaults(func=cmd_train,
                   defaults={"dataset": "data/dataset.csv", "system": "car",
                             "epochs": 80, "seed": 0, "out": "models"})

    plan_defaults = {
        "system": "di", "env": "corridor", "backend": "linear",
        "planner": "fmt_pff", "start": "2,2,0,0", "goal": "8,8",
        "m": 1000, "r": 1.5, "goal_tolerance": planner.GOAL_TOLERANCE,
        "seed": 0, "control_model": None, "cost_model": None,
        "out": "plan_out"}

    p = sub.add_parser("plan", help="run one planner on one problem")
    add_common(p)
    for flag in ("system", "env", "backend", "planner", "start", "goal",
                 "control-model", "cost-model", "out"):
        p.add_argument(f"--{flag}", default=argparse.SUPPRESS)
    p.add_argument("--m", type=int, default=argparse.SUPPRESS)
    p.add_argument("--r", type=float, default=argparse.SUPPRESS)
    p.add_argument("--goal-tolerance", type=float, default=argparse.SUPPRESS)
    p.set_defaults(func=cmd_plan, defaults=plan_defaults)

    p = sub.add_parser("benchmark", help="sweep planners x m x seeds")
    add_common(p)
    for flag in ("system", "env", "backend", "planners", "m-values",
                 "start", "goal", "control-model", "cost-model", "out"):
        p.add_argument(f"--{flag}", default=argparse.SUPPRESS)
    p.add_argument("--seeds", type=int, default=argparse.SUPPRESS)
    p.add_argument("--r", type=float, default=argparse.SUPPRESS)
    p.add_argument("--goal-tolerance", type=float, default=argparse.SUPPRESS)
    p.set_defaults(func=cmd_benchmark,
                   defaults={**{k: v for k, v in plan_defaults.items()
                                if k not in ("planner", "m", "out")},
                             "planners": "fmt_pff,fmt_full,kino_rrt_star",
                             "m_values": "500,1000", "seeds": 3,
                             "out": "bench_out"})

    p = sub.add_parser("plot", help="re-render SVGs from result files")
    add_common(p)
    p.add_argument("--input", default=argparse.SUPPRESS)
    p.add_argument("--out", default=argparse.SUPPRESS)
    p.set_defaults(func=cmd_plot,
                   defaults={"input": ".", "out": None, "seed": 0})

    return parser


def _merge_config(args) -> argparse.Namespace:
    merged = dict(args.defaults)
    if getattr(args, "config", None):
        with open(args.config) as f:
            cfg = json.load(f)
        unknown = set(cfg) - set(merged)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        merged.update(cfg)
    provided = {k: v for k, v in vars(args).items()
                if k not in ("func", "defaults", "config", "command")}
    merged.update(provided)
    return argparse.Namespace(**merged)


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        merged = _merge_config(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    try:
        return args.func(merged)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ValueError, planner.UnsupportedConfigurationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # runtime failure
        print(f"runtime error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
