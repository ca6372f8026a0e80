"""Command-line entry point: ``mecvideo <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .config import ConfigError, load_config
from .dual_solver import MODES, DualDecompositionSolver
from .harness import (
    BASELINES,
    ExperimentSpec,
    build_scenario,
    emit,
    run_experiment,
)
from .oracle import OracleSizeError, check_feasible, solve_exact
from .problem import MBPS, bound_violations, random_small_instance

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _solver_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--max-iters", type=int, default=2000)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--mode", choices=MODES, default="centralized")
    p.add_argument("--step-a", type=float, default=10.0)
    p.add_argument("--step-b", type=float, default=10.0)
    p.add_argument("--patience", type=int, default=100)


def _solver_opts(args) -> dict:
    return {"max_iters": args.max_iters, "tol": args.tol, "mode": args.mode,
            "step_a": args.step_a, "step_b": args.step_b, "patience": args.patience}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mecvideo", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="build a scenario and print it as JSON")
    g.add_argument("--config", help="scenario JSON (defaults otherwise)")
    g.add_argument("--seed", type=int)
    g.add_argument("--baseline", choices=BASELINES, default="full-mecc")
    g.add_argument("--out", help="write here instead of stdout")

    s = sub.add_parser("solve", help="solve one scenario")
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--baseline", choices=BASELINES, default="full-mecc")
    s.add_argument("--trace", help="write the per-iteration trace CSV here")
    _solver_args(s)

    w = sub.add_parser("sweep", help="run an experiment and write metrics")
    w.add_argument("--experiment", help="experiment JSON (config, axis, values, ...)")
    w.add_argument("--config")
    w.add_argument("--axis", choices=("compute_capacity", "cache_size", "users"))
    w.add_argument("--values", type=float, nargs="+", default=())
    w.add_argument("--repetitions", type=int, default=1)
    w.add_argument("--seed", type=int, default=0)
    w.add_argument("--baselines", nargs="+", choices=BASELINES, default=list(BASELINES))
    w.add_argument("--format", choices=("csv", "json"), default="csv")
    w.add_argument("--out", required=True)
    w.add_argument("--timing", action="store_true", help="include wall-clock seconds")
    w.add_argument("--allow-failures", action="store_true",
                   help="exit 0 even if some points failed")
    _solver_args(w)

    o = sub.add_parser("oracle", help="exact solve of a small instance")
    o.add_argument("--random-seed", type=int, help="use a generated small instance")
    o.add_argument("--config")
    o.add_argument("--seed", type=int)
    o.add_argument("--compare", action="store_true", help="also run the dual solver")
    _solver_args(o)

    v = sub.add_parser("validate", help="check a config, solve it and audit feasibility")
    v.add_argument("--config")
    v.add_argument("--seed", type=int)
    _solver_args(v)
    return parser


def _instance_summary(scn) -> dict:
    inst = scn.instance
    return {
        "seed": scn.seed,
        "baseline": scn.baseline,
        "topology": inst.topology.to_dict(),
        "requests": scn.requests,
        "hits": {u: [n for j, n in enumerate(inst.nodes) if inst.hit[i, j]]
                 for i, u in enumerate(inst.users)},
        "paths": [{"user": p.user, "source": p.source_node, "links": list(p.link_sequence)}
                  for p in inst.paths],
    }


def _print_solution(solver, inst) -> None:
    sol = solver.solution_
    print(f"iterations {solver.n_iter_}  dual bound {solver.dual_bound_:.6f}  "
          f"gap {solver.gap_:.3e}")
    if solver.trace_.error:
        print(f"error: {solver.trace_.error}")
    if sol is None:
        print("no feasible schedule found")
        return
    print(f"mean utility {sol.utility:.6f}")
    delivered = sol.user_rates(inst) * MBPS
    for i, u in enumerate(inst.users):
        print(f"  {u}: level {sol.levels[i]}  rate {delivered[i]:.0f} bit/s")


def cmd_generate(args) -> int:
    scn = build_scenario(load_config(args.config), args.seed, args.baseline)
    text = json.dumps(_instance_summary(scn), indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return EXIT_OK


def cmd_solve(args) -> int:
    scn = build_scenario(load_config(args.config), args.seed, args.baseline)
    solver = DualDecompositionSolver(**_solver_opts(args)).fit(scn.instance)
    _print_solution(solver, scn.instance)
    if args.trace:
        solver.trace_.to_csv(args.trace)
    return EXIT_OK if solver.solution_ is not None and not solver.trace_.error else EXIT_FAIL


def cmd_sweep(args) -> int:
    if args.experiment:
        with open(args.experiment) as fh:
            doc = json.load(fh)
        doc.setdefault("solver", _solver_opts(args))
        spec = ExperimentSpec.from_dict(doc)
    else:
        spec = ExperimentSpec(config=load_config(args.config), axis=args.axis,
                              values=list(args.values), repetitions=args.repetitions,
                              seed=args.seed, baselines=args.baselines,
                              solver=_solver_opts(args))
    records = run_experiment(spec)
    emit(records, args.format, args.out, include_timing=args.timing)
    failed = [r for r in records if r.status != "ok"]
    for r in failed:
        print(f"point {r.axis}={r.value} rep {r.repetition} {r.baseline}: "
              f"{r.status} {r.error}", file=sys.stderr)
    print(f"{len(records)} records written to {args.out}")
    return EXIT_FAIL if failed and not args.allow_failures else EXIT_OK


def cmd_oracle(args) -> int:
    if args.random_seed is not None:
        inst = random_small_instance(args.random_seed)
    else:
        inst = build_scenario(load_config(args.config), args.seed).instance
    problems = bound_violations(inst)
    if problems:
        print("instance outside the exact-solver bound:", file=sys.stderr)
        for p in problems:
            print(f"  {p}", file=sys.stderr)
        return EXIT_USAGE
    opt = solve_exact(inst)
    if opt is None:
        print("infeasible")
    else:
        print(f"optimal mean utility {opt.utility:.6f}  levels {opt.levels.tolist()}")
    if args.compare:
        solver = DualDecompositionSolver(**_solver_opts(args)).fit(inst)
        _print_solution(solver, inst)
        if opt is not None and solver.dual_bound_ < opt.utility - 1e-6:
            print("dual bound below the optimum", file=sys.stderr)
            return EXIT_FAIL
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    scn = build_scenario(cfg, args.seed)
    solver = DualDecompositionSolver(**_solver_opts(args)).fit(scn.instance)
    _print_solution(solver, scn.instance)
    if solver.solution_ is None:
        return EXIT_FAIL
    report = check_feasible(solver.solution_, scn.instance)
    for name, ok in report.items():
        print(f"  {name:10s} {'ok' if ok else 'VIOLATED'}")
    return EXIT_OK if all(report.values()) else EXIT_FAIL


COMMANDS = {"generate": cmd_generate, "solve": cmd_solve, "sweep": cmd_sweep,
            "oracle": cmd_oracle, "validate": cmd_validate}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    np.set_printoptions(precision=6)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, OracleSizeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
