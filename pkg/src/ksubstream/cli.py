"""``ksubstream`` command line: generate, run, sweep, verify, check-oracle.

Exit codes: 0 ok, 2 usage, 3 I/O, 4 verification failure, 5 algorithm precondition.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import statistics
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import InvalidBudget, KSubError, ParameterOutOfRange, PreconditionError
from .harness import (
    ALGORITHMS,
    RANDOMIZED,
    Instance,
    ParseError,
    ResultsIOError,
    generate_sizes,
    generate_synthetic,
    load_edge_list,
    load_valuations_csv,
    metrics_of,
    run_algorithm,
    run_experiment,
    stream_order,
    write_edge_list,
    write_results,
    write_valuations_csv,
)
from .objectives import PartRestriction, check_k_submodular
from .schedules import alpha_monotone, alpha_partition_nonmon
from .verify import audit_trace, brute_force_opt, check_guarantee, theoretical_bound

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_VERIFY, EXIT_PRECONDITION = 0, 2, 3, 4, 5

log = logging.getLogger("ksubstream")


class UsageError(Exception):
    pass


def _echo(args: argparse.Namespace) -> None:
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    print("# config: " + json.dumps(cfg, sort_keys=True), file=sys.stderr)


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _load_instance(args) -> Instance:
    path = Path(args.instance)
    kind = args.kind or ("ad" if path.suffix.lower() == ".csv" else "cut")
    try:
        if kind == "ad":
            oracle = load_valuations_csv(path)
            return Instance("ad_welfare", oracle)
        if kind == "cut":
            return Instance("max_k_cut", load_edge_list(path, args.k or 2))
    except OSError as exc:
        raise ResultsIOError(f"cannot read {path}: {exc}") from exc
    raise UsageError(f"unknown instance kind {kind!r}")


def _budgets(args, k: int) -> tuple[int, ...]:
    if args.budgets is not None:
        budgets = tuple(args.budgets)
        if args.alg != "common" and len(budgets) != k:
            raise UsageError(f"--budgets lists {len(budgets)} parts but the instance has k={k}")
        return budgets
    if args.uniform_n is None:
        raise UsageError("give --budgets or --uniform-n")
    if args.alg == "common":
        return (args.uniform_n,)
    return (args.uniform_n,) * k


def _sizes(args, instance: Instance):
    if args.sizes:
        try:
            rows = np.loadtxt(args.sizes, delimiter=",", ndmin=2)
        except OSError as exc:
            raise ResultsIOError(f"cannot read {args.sizes}: {exc}") from exc
        except ValueError as exc:
            raise UsageError(f"bad sizes file: {exc}") from exc
        return rows.reshape(instance.m, instance.k)
    return generate_sizes(instance.m, instance.k, args.eps, args.seed)


def _audit_oracle(instance: Instance, alg: str):
    if alg in ("part-mono", "part-nonmono"):
        return instance.partition_oracle()
    return instance.oracle


def _audit(result, instance: Instance, alg: str, budgets) -> bool:
    if alg == "anybudget":
        big = max(range(len(budgets)), key=lambda a: (budgets[a], -a))
        rep_a = audit_trace(result.components["A"].trace, PartRestriction(instance.oracle, big),
                            result=result.components["A"])
        rep_b = audit_trace(result.components["B"].trace, instance.oracle, result=result.components["B"])
        print(rep_a.summary(), file=sys.stderr)
        print(rep_b.summary(), file=sys.stderr)
        return rep_a.passed and rep_b.passed
    report = audit_trace(result.trace, _audit_oracle(instance, alg), result=result)
    print(report.summary(), file=sys.stderr)
    return report.passed


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args) -> int:
    inst = generate_synthetic(args.kind, args.m, args.k, args.seed,
                              density=args.density, edge_prob=args.edge_prob)
    try:
        if inst.kind == "max_k_cut":
            write_edge_list(inst.m, inst.oracle.edges, args.out)
            summary = f"cut instance: m={inst.m} edges={inst.oracle.n_edges}"
        else:
            mat = inst.oracle.valuations if inst.kind == "ad_welfare" else inst.oracle.weights
            write_valuations_csv(mat, args.out)
            summary = f"{args.kind} instance: m={inst.m} k={inst.k} nonzero={int(np.count_nonzero(mat))}"
    except OSError as exc:
        raise ResultsIOError(f"cannot write {args.out}: {exc}") from exc
    print(f"{summary} -> {args.out}")
    return EXIT_OK


def cmd_run(args) -> int:
    instance = _load_instance(args)
    budgets = _budgets(args, instance.k)
    sizes = _sizes(args, instance) if args.alg == "knapsack" else None
    order = stream_order(instance.m, None if args.order == "file" else args.seed)
    result = run_algorithm(instance, args.alg, budgets, args.mode, args.seed, args.p, sizes, order)
    record = metrics_of(result, args.alg, args.mode, min(budgets), args.seed)
    write_results([record], args.out, args.format)
    if args.audit and not _audit(result, instance, args.alg, budgets):
        return EXIT_VERIFY
    return EXIT_OK


SWEEP_COLUMNS = (
    "algorithm", "mode", "n", "reps", "value_mean", "value_std",
    "marginal_evals_mean", "full_evals_mean", "peak_items_max", "wall_ms_mean",
)


def sweep_rows(instance: Instance, algs, n_from: int, n_to: int, reps: int, mode: str, seed: int):
    rows = []
    for n in range(n_from, n_to + 1):
        for alg in algs:
            budgets = (n,) if alg == "common" else (n,) * instance.k
            sizes = np.full((instance.m, instance.k), 1.0 / n) if alg == "knapsack" else None
            exp = run_experiment(instance, alg, budgets, mode, reps, seed, sizes=sizes)
            runs = exp.runs
            rows.append({
                "algorithm": alg,
                "mode": mode,
                "n": n,
                "reps": reps,
                "value_mean": exp.mean,
                "value_std": exp.std,
                "marginal_evals_mean": statistics.fmean(r.marginal_evals for r in runs),
                "full_evals_mean": statistics.fmean(r.full_evals for r in runs),
                "peak_items_max": max(r.peak_items for r in runs),
                "wall_ms_mean": round(statistics.fmean(r.wall_ms for r in runs), 3),
            })
    return rows


def cmd_sweep(args) -> int:
    instance = _load_instance(args)
    algs = [a.strip() for a in args.alg.split(",") if a.strip()]
    for a in algs:
        if a not in ALGORITHMS:
            raise UsageError(f"unknown algorithm {a!r}")
    if args.n_from < 1 or args.n_to < args.n_from:
        raise UsageError("need 1 <= --n-from <= --n-to")
    rows = sweep_rows(instance, algs, args.n_from, args.n_to, args.reps, args.mode, args.seed)
    if args.format == "csv":
        lines = [",".join(SWEEP_COLUMNS)]
        lines += [",".join(repr(r[c]) if isinstance(r[c], float) else str(r[c]) for c in SWEEP_COLUMNS)
                  for r in rows]
        text = "\n".join(lines) + "\n"
    else:
        text = "".join(json.dumps(r) + "\n" for r in rows)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        try:
            Path(args.out).write_text(text, encoding="utf-8")
        except OSError as exc:
            raise ResultsIOError(f"cannot write {args.out}: {exc}") from exc
    print(f"sweep: {len(rows)} rows -> {args.out}", file=sys.stderr)
    return EXIT_OK


def _verify_instance(alg: str, m: int, k: int, seed: int):
    rng = np.random.default_rng([seed, 7])
    general = alg in ("nonmono", "anybudget", "part-nonmono", "greedy-gen")
    if general:
        inst = generate_synthetic("cut", m, k, seed, edge_prob=0.5)
    else:
        inst = generate_synthetic("ad", m, k, seed, density=0.7)
    if alg == "nonmono":
        budgets = (int(rng.integers(1, 3)),) * k
    elif alg == "anybudget":
        budgets = (int(rng.integers(3, max(4, m))),) + (1,) * (k - 1)
    elif alg == "common":
        budgets = (int(rng.integers(1, 4)),)
    else:
        budgets = tuple(int(x) for x in rng.integers(1, 3, size=k))
    return inst, budgets


def cmd_verify(args) -> int:
    if args.mode == "modified":
        print("verify: guarantees are only claimed in theory mode", file=sys.stderr)
        return EXIT_USAGE
    if args.alg not in ALGORITHMS:
        raise UsageError(f"unknown algorithm {args.alg!r}")
    if args.trials == 0:
        print("warning: --trials 0, nothing verified (vacuous pass)", file=sys.stderr)
        return EXIT_OK
    worst = math.inf
    failures = 0
    for i in range(args.trials):
        seed = args.seed + i
        inst, budgets = _verify_instance(args.alg, args.m, args.k, seed)
        sizes = generate_sizes(inst.m, inst.k, 0.34, seed) if args.alg == "knapsack" else None
        if args.alg in ("part-mono", "part-nonmono"):
            opt = brute_force_opt(inst.partition_oracle(), budgets, classes=inst.classes())
        elif args.alg == "knapsack":
            opt = brute_force_opt(inst.oracle, sizes=sizes)
        elif args.alg == "common":
            opt = brute_force_opt(inst.oracle, common=budgets[0])
        else:
            opt = brute_force_opt(inst.oracle, budgets)

        if args.alg in RANDOMIZED:
            values = []
            for s in range(args.mc_seeds):
                res = run_algorithm(inst, args.alg, budgets, "theory", seed * 100003 + s, sizes=sizes)
                values.append(res.value)
            value = statistics.fmean(values)
            if args.alg == "part-nonmono":
                bound = alpha_partition_nonmon(min(budgets))
            else:
                big = max(budgets)
                clamped = [min(b, sum(budgets) - big) if b == big else b for b in budgets]
                bound = 1.0 / (1.0 / alpha_partition_nonmon(big) + 2.0 / alpha_monotone(min(clamped)))
            ok = value >= 0.95 * bound * opt.value - 1e-9 * (1 + opt.value)
            audit_ok = _audit(res, inst, args.alg, budgets) if args.verbose else True
        else:
            res = run_algorithm(inst, args.alg, budgets, "theory", seed, sizes=sizes)
            value = res.value
            report = audit_trace(res.trace, _audit_oracle(inst, args.alg), result=res)
            audit_ok = report.passed
            if not audit_ok:
                print(f"trial {i}: audit failed: {report.failed()}", file=sys.stderr)
            if args.alg.startswith("greedy"):
                ok = True
            else:
                p = getattr(res.trace, "p", None)
                bound = theoretical_bound(args.alg, res.trace.schedule, p)
                ok = check_guarantee(value, opt, bound)
        if opt.value > 0:
            worst = min(worst, value / opt.value)
        if not (ok and audit_ok):
            failures += 1
            print(f"trial {i}: FAIL value={value!r} opt={opt.value!r} budgets={budgets}", file=sys.stderr)
    ratio = "n/a" if worst == math.inf else f"{worst:.4f}"
    status = "PASS" if failures == 0 else "FAIL"
    print(f"verify {args.alg}: {status} ({args.trials} trials, {failures} failures), worst ratio {ratio}")
    return EXIT_OK if failures == 0 else EXIT_VERIFY


def cmd_check_oracle(args) -> int:
    instance = _load_instance(args)
    report = check_k_submodular(instance.oracle, trials=args.trials, seed=args.seed)
    print(report.summary())
    return EXIT_OK if report.passed else EXIT_VERIFY


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ksubstream", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a seeded synthetic instance")
    g.add_argument("--kind", choices=("ad", "cut", "modular"), required=True)
    g.add_argument("--m", type=int, required=True)
    g.add_argument("--k", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--density", type=float, default=0.1)
    g.add_argument("--edge-prob", type=float, default=0.1)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    def instance_flags(p):
        p.add_argument("--instance", required=True)
        p.add_argument("--kind", choices=("ad", "cut"), default=None,
                       help="default: .csv is ad, anything else an edge list")
        p.add_argument("--k", type=int, default=None, help="parts for edge-list instances (default 2)")

    r = sub.add_parser("run", help="run one algorithm on an instance")
    r.add_argument("--alg", choices=ALGORITHMS, required=True)
    instance_flags(r)
    group = r.add_mutually_exclusive_group()
    group.add_argument("--budgets", type=_int_list)
    group.add_argument("--uniform-n", type=int)
    r.add_argument("--mode", choices=("theory", "modified"), default="theory")
    r.add_argument("--p", type=float, default=None)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--order", choices=("file", "shuffle"), default="file")
    r.add_argument("--sizes", default=None, help="knapsack sizes, m rows of k comma-separated values")
    r.add_argument("--eps", type=float, default=0.1, help="max knapsack size when sizes are generated")
    r.add_argument("--audit", action="store_true")
    r.add_argument("--out", default="-")
    r.add_argument("--format", choices=("csv", "json-lines"), default="csv")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="aggregate runs over a range of uniform budgets")
    s.add_argument("--alg", required=True, help="algorithm tag or comma-separated list")
    instance_flags(s)
    s.add_argument("--n-from", type=int, required=True)
    s.add_argument("--n-to", type=int, required=True)
    s.add_argument("--reps", type=int, default=1)
    s.add_argument("--mode", choices=("theory", "modified"), default="theory")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--format", choices=("csv", "json-lines"), default="csv")
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify", help="brute-force, audit and guarantee checks on random small instances")
    v.add_argument("--alg", choices=ALGORITHMS, required=True)
    v.add_argument("--m", type=int, default=6)
    v.add_argument("--k", type=int, default=2)
    v.add_argument("--trials", type=int, default=100)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--mode", choices=("theory", "modified"), default="theory")
    v.add_argument("--mc-seeds", type=int, default=2000, help="subsample seeds for randomized algorithms")
    v.set_defaults(func=cmd_verify)

    c = sub.add_parser("check-oracle", help="test k-submodularity of an instance's objective")
    instance_flags(c)
    c.add_argument("--trials", type=int, default=1000)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_check_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    _echo(args)
    try:
        return args.func(args)
    except (UsageError, InvalidBudget, ParameterOutOfRange, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PreconditionError as exc:
        print(f"precondition failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (ResultsIOError, ParseError, OSError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except KSubError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
