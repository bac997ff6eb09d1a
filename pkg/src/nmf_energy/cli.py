"""Command-line interface.

Subcommands mirror the library pipeline:

* ``gen``        -- generate a problem instance JSON
* ``build``      -- build a quartic or QUBO model from an instance
* ``solve``      -- run a stochastic solver on a built model
* ``fit``        -- classical HALS fit of an instance
* ``intsolve``   -- exact or heuristic integer search
* ``experiment`` -- run a full experiment from a config JSON
"""

from __future__ import annotations

import argparse
import json
import sys

from .classic import GivenInit, NndsvdaInit, RandomInit, hals_fit
from .experiments import ExperimentConfig, run_experiment
from .integer_solver import (ABS_DIFF, SQ_DIFF, SearchBudget,
                             brute_force_optimum, heuristic_search)
from .matrices import (ContinuousDomain, IntegerDomain, ProblemInstance,
                       error_metrics, generate_case, read_matrix_csv)
from .quartic import QuarticModel, build_quartic_model, check_variable_budget
from .qubo import BitEncoding, QuboModel, build_binary_quartic, quadratize
from .solvers import (SCHEDULES, QuboSolveParams, save_runs, solve_continuous,
                      solve_discrete, solve_qubo)


def _add_gen(sub):
    p = sub.add_parser("gen", help="generate a problem instance JSON")
    p.add_argument("--kind", required=True,
                   choices=["continuous_planted", "continuous_raw",
                            "integer_planted", "integer_raw"])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--levels", type=int, default=8,
                   help="levels per entry for integer kinds")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--case-id", default=None)
    p.add_argument("--out", required=True)


def _add_build(sub):
    p = sub.add_parser("build", help="build an energy model from an instance")
    p.add_argument("target", choices=["quardp", "quartic", "qubo"],
                   help="'quardp'/'quartic': degree-4 model; 'qubo': bit-encoded")
    p.add_argument("--instance", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sum-target", type=float, default=None,
                   help="override the sum constraint (default: p*(n+m))")
    p.add_argument("--bits", type=int, default=None,
                   help="highest bit index N (entries get N+1 bits); "
                        "default: smallest covering the instance levels")
    p.add_argument("--kappa", type=float, default=1.0, help="bit scale")
    p.add_argument("--offset", type=float, default=0.0, help="bit offset")


def _add_solve(sub):
    p = sub.add_parser("solve", help="run a stochastic solver on a model")
    p.add_argument("--model", required=True)
    p.add_argument("--mode", required=True, choices=["continuous", "discrete", "qubo"])
    p.add_argument("--schedule", type=int, default=1, choices=sorted(SCHEDULES))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--levels", type=int, default=8,
                   help="levels per entry variable in discrete mode")
    p.add_argument("--sweeps", type=int, default=128, help="SA sweeps (qubo mode)")
    p.add_argument("--restarts", type=int, default=8, help="SA restarts (qubo mode)")
    p.add_argument("--out", required=True)


def _add_fit(sub):
    p = sub.add_parser("fit", help="classical HALS fit")
    p.add_argument("--instance", required=True)
    p.add_argument("--init", default="nndsvda", choices=["nndsvda", "random", "given"])
    p.add_argument("--w0", default=None, help="CSV matrix for init=given")
    p.add_argument("--h0", default=None, help="CSV matrix for init=given")
    p.add_argument("--seed", type=int, default=0, help="seed for init=random")
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--out", default=None)


def _add_intsolve(sub):
    p = sub.add_parser("intsolve", help="integer factorization search")
    p.add_argument("--instance", required=True)
    p.add_argument("--objective", default="sq", choices=["abs", "sq"])
    p.add_argument("--mode", default="heuristic", choices=["oracle", "heuristic"])
    p.add_argument("--time-limit", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--wallclock", action="store_true",
                   help="use the real clock instead of the logical budget")
    p.add_argument("--out", default=None)


def _add_experiment(sub):
    p = sub.add_parser("experiment", help="run an experiment from a config JSON")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nmf-energy",
        description="Non-negative matrix factorization as energy minimization")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_gen(sub)
    _add_build(sub)
    _add_solve(sub)
    _add_fit(sub)
    _add_intsolve(sub)
    _add_experiment(sub)
    return parser


def _cmd_gen(args) -> int:
    domain = (IntegerDomain(args.levels) if args.kind.startswith("integer")
              else ContinuousDomain())
    inst = generate_case(args.kind, args.n, args.m, args.p, domain,
                         seed=args.seed, case_id=args.case_id)
    inst.save(args.out)
    print(f"wrote {args.out} ({args.kind} {args.n}x{args.m} p={args.p})")
    return 0


def _cmd_build(args) -> int:
    inst = ProblemInstance.load(args.instance)
    if args.target in ("quardp", "quartic"):
        model = build_quartic_model(inst, sum_target=args.sum_target)
        model.save(args.out)
        check = check_variable_budget(model)
        print(f"wrote {args.out}: {model.layout.total_vars} variables "
              f"(sum target {model.sum_target}); budget: {check.detail}")
        return 0
    if args.bits is None:
        if not isinstance(inst.domain, IntegerDomain):
            raise SystemExit("qubo build needs --bits for continuous instances")
        encoding = BitEncoding.for_levels(inst.domain.levels)
    else:
        encoding = BitEncoding(args.bits, args.kappa, args.offset)
    poly, registry = build_binary_quartic(inst, encoding)
    model = quadratize(poly, registry=registry)
    doc = model.to_json()
    doc["encoding"] = encoding.to_json()
    doc["layout"] = {"n": inst.n, "m": inst.m, "p": inst.p}
    with open(args.out, "w") as fh:
        json.dump(doc, fh)
    print(f"wrote {args.out}: {model.num_vars} variables "
          f"({len(registry)} source bits, {model.num_auxiliaries} auxiliary)")
    return 0


def _cmd_solve(args) -> int:
    runs = []
    if args.mode == "continuous":
        model = QuarticModel.load(args.model)
        for r in range(args.runs):
            runs.append(solve_continuous(model, SCHEDULES[args.schedule],
                                         seed=args.seed + r))
    elif args.mode == "discrete":
        model = QuarticModel.load(args.model)
        levels = [args.levels] * model.layout.num_entries + [1]
        for r in range(args.runs):
            runs.append(solve_discrete(model.poly, levels, SCHEDULES[args.schedule],
                                       seed=args.seed + r))
    else:
        model = QuboModel.load(args.model)
        params = QuboSolveParams(sweeps=args.sweeps, restarts=args.restarts)
        for r in range(args.runs):
            runs.append(solve_qubo(model, params, seed=args.seed + r))
    save_runs(args.out, runs)
    best = min(r.best_energy for r in runs)
    print(f"wrote {args.out}: {len(runs)} runs, best energy {best:.6g}")
    return 0


def _cmd_fit(args) -> int:
    inst = ProblemInstance.load(args.instance)
    if args.init == "nndsvda":
        init = NndsvdaInit()
    elif args.init == "random":
        init = RandomInit(seed=args.seed)
    else:
        if not (args.w0 and args.h0):
            raise SystemExit("init=given needs --w0 and --h0 CSV files")
        init = GivenInit(read_matrix_csv(args.w0), read_matrix_csv(args.h0))
    result = hals_fit(inst.V, inst.p, init, max_iter=args.max_iter, tol=args.tol)
    eps, delta = error_metrics(inst.V, result.factors.product())
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(result.to_json(), fh)
    print(f"fit: {result.iterations} sweeps, converged={result.converged}, "
          f"epsilon={eps:.6g}, delta={delta:.6g}")
    return 0


def _cmd_intsolve(args) -> int:
    inst = ProblemInstance.load(args.instance)
    objective = ABS_DIFF if args.objective == "abs" else SQ_DIFF
    if args.mode == "oracle":
        factors, value = brute_force_optimum(inst, objective)
    else:
        budget = SearchBudget(time_limit=args.time_limit, seed=args.seed,
                              restarts=args.restarts,
                              mode="wallclock" if args.wallclock else "logical")
        factors, value = heuristic_search(inst, objective, budget)
    eps, delta = error_metrics(inst.V, factors.product())
    if args.out:
        with open(args.out, "w") as fh:
            json.dump({"W": factors.W.tolist(), "H": factors.H.tolist(),
                       "objective": args.objective, "value": value,
                       "epsilon": eps, "delta": delta}, fh)
    print(f"{args.mode}: objective value {value:.6g}, delta={delta:.6g}")
    return 0


def _cmd_experiment(args) -> int:
    with open(args.config) as fh:
        doc = json.load(fh)
    config = ExperimentConfig.from_json(doc)
    config = ExperimentConfig.from_json({**config.to_json(), "output_dir": args.out})
    report = run_experiment(config)
    print(f"experiment {config.experiment}: {len(report.records)} case rows, "
          f"{len(report.comparisons)} comparison rows -> {args.out}")
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "build": _cmd_build,
    "solve": _cmd_solve,
    "fit": _cmd_fit,
    "intsolve": _cmd_intsolve,
    "experiment": _cmd_experiment,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return _COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
