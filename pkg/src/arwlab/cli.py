"""arwlab command line front end.

One binary, six subcommands:

- simulate:     stabilize i.i.d. density-zeta configurations, estimate
                P(odometer at the origin >= k).
- carpet:       run the block/hole emission procedure, record counters.
- replay-check: verify the per-block mass-balance replay equalities.
- block-stats:  exact jump-law drifts, tail-bound formula, pooled run reports.
- sweep:        (lambda, zeta) activity grid with plot-data export.
- verify:       run the acceptance suite (--quick for the smoke profile).

Exit codes: 0 success, 2 usage or invalid parameters, 3 invariant/property
violation, 4 toppling budget exceeded.  ARW_SEED in the environment supplies
the default master seed when --seed is omitted.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from fractions import Fraction

from . import __version__, acceptance, blockstats, ensemble
from .carpet import (CarpetParams, PropertyViolationError, RUN_RECORD_SCHEMA,
                     mass_balance_replay, run_carpet_hole)
from .core import DEFAULT_TOPPLING_BUDGET, BudgetExceededError, ParameterError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VIOLATION = 3
EXIT_BUDGET = 4


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in text.split(",") if tok.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.split(",") if tok.strip())


def _resolve_seed(value) -> int:
    if value is not None:
        return value
    env = os.environ.get("ARW_SEED")
    return int(env) if env else 0


def _ensemble_exit(summaries) -> int:
    bad = [s.diagnostic for s in summaries if not s.ok]
    if not bad:
        return EXIT_OK
    if all(d.startswith("budget exceeded") for d in bad):
        return EXIT_BUDGET
    return EXIT_VIOLATION


def _print_summaries(summaries, out):
    for s in summaries:
        params = " ".join(f"{k}={v}" for k, v in s.params.items())
        if not s.ok:
            print(f"{params}: ABORTED ({s.diagnostic})", file=out)
            continue
        stats = ", ".join(f"{k} = {s.estimates[k]:.4g} +- {s.errors[k]:.2g}"
                          for k in s.estimates)
        print(f"{params}: {stats}  [{s.trials} trials]", file=out)


# -- simulate ---------------------------------------------------------------

def cmd_simulate(args, out=None) -> int:
    out = out or sys.stdout
    overrides = {k: v for k, v in dict(
        master_seed=args.seed, trials=args.trials, parallelism=args.parallelism,
        lam=args.lam, zeta=args.zeta, k=args.k,
        L=(args.L,) if args.L is not None else None,
        max_topplings=args.max_topplings,
    ).items() if v is not None}
    if args.config:
        spec = ensemble.load_spec(args.config, kind=ensemble.KIND_ORIGIN,
                                  **overrides)
    else:
        overrides.setdefault("master_seed", _resolve_seed(None))
        overrides.setdefault("trials", 100)
        spec = ensemble.EnsembleSpec(kind=ensemble.KIND_ORIGIN, **overrides)
    summaries = ensemble.run_ensemble(spec,
                                      jsonl_path=f"{args.out}.trials.jsonl",
                                      csv_path=f"{args.out}.summary.csv")
    _print_summaries(summaries, out)
    print(f"wrote {args.out}.summary.csv and {args.out}.trials.jsonl", file=out)
    return _ensemble_exit(summaries)


# -- carpet -----------------------------------------------------------------

def cmd_carpet(args, out=None) -> int:
    out = out or sys.stdout
    K = args.K if args.K is not None else args.a * args.a
    params = CarpetParams(lam=args.lam, n=args.n, K=K, a=args.a,
                          check=args.check, trace=args.trace,
                          step_stats=args.step_stats,
                          max_topplings=args.max_topplings)
    seed = _resolve_seed(args.seed)
    header = {"schema": "arwlab/run-batch/v1", "record_schema": RUN_RECORD_SCHEMA,
              "lam": args.lam, "n": args.n, "K": K, "a": args.a,
              "master_seed": seed, "trials": args.trials}
    lines = [json.dumps(header, sort_keys=True, separators=(",", ":"))]
    exits = frozen = 0
    for t in range(args.trials):
        rec = run_carpet_hole(params, seed, run_index=t)
        lines.append(rec.to_json())
        exits += rec.exit
        frozen += rec.frozen
        print(f"run {t}: exit={rec.exit} frozen={rec.frozen} "
              f"attempts={rec.n_attempts} topplings={rec.topplings}", file=out)
    with open(args.out, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"{args.trials} runs: mean exit {exits / args.trials:.3f}, "
          f"mean frozen {frozen / args.trials:.3f}; wrote {args.out}", file=out)
    return EXIT_OK


# -- replay-check -----------------------------------------------------------

def cmd_replay_check(args, out=None) -> int:
    out = out or sys.stdout
    K = args.K if args.K is not None else args.a * args.a
    params = CarpetParams(lam=args.lam, n=args.n, K=K, a=args.a,
                          check=False, trace=False)
    report = mass_balance_replay(params, _resolve_seed(args.seed),
                                 run_index=args.run_index)
    print(f"{'block':>5} {'m':>4} {'S full':>6} {'S replay':>8} "
          f"{'L full':>6} {'L replay':>8}  ok", file=out)
    for row in report.rows:
        print(f"{row.i:>5} {row.m:>4} {row.S_full:>6} {row.S_replay:>8} "
              f"{row.L_full:>6} {row.L_replay:>8}  {'yes' if row.ok else 'NO'}",
              file=out)
    verdict = "all blocks replay exactly" if report.ok else "replay mismatch"
    print(verdict, file=out)
    return EXIT_OK if report.ok else EXIT_VIOLATION


# -- block-stats ------------------------------------------------------------

def _paper_scale_lines(lam: float):
    log_a = math.log(12) + 100 * (lam + 1)
    bound = blockstats.paper_scale_drift_bound(lam, log_a)
    yield (f"paper-scale geometry for sleep rate {lam:g}: "
           f"log a = log 12 + 100(lam+1) = {log_a:.3f}")
    yield (f"log-domain drift bound chain: E <= 1 - 1/(lam+1) "
           f"- (log a - log 6)/(2(lam+1)) = {bound:.3f}")
    yield f"bound <= -48: {bound <= -48};  bound <= -40: {bound <= -40}"
    yield ("tail-formula instances at nu=-40: exponents -507a and -841a, "
           "both <= -a for every a >= 1 (compared in the log domain)")


def cmd_block_stats(args, out=None) -> int:
    out = out or sys.stdout
    if args.tail:
        b, gamma = Fraction(args.tail[0]), Fraction(args.tail[1])
        nu = float(args.tail[2])
        exponent = blockstats.hoeffding_exponent(b, gamma, nu)
        print(f"exponent -2*gamma*(1+gamma*nu)^2*b = {exponent} "
              f"(~{float(exponent):.6g})", file=out)
        print(f"tail bound exp(exponent) = {blockstats.hoeffding_tail(b, gamma, nu):.6g}",
              file=out)
        return EXIT_OK
    if args.paper_scale:
        for line in _paper_scale_lines(args.lam):
            print(line, file=out)
        return EXIT_OK

    K = args.K if args.K is not None else args.a * args.a
    lam = Fraction(str(args.lam))
    print(f"jump-law drifts at lam={args.lam:g} a={args.a} K={K} "
          f"(delta = 1/(2(lam+1)(K-2a)))", file=out)
    print(f"{'v':>3} {'E[plain]':>12} {'E[compensated]':>16} "
          f"{'exact plain':>16} {'exact compensated':>20}", file=out)
    for v in range(0, min(args.a, K - 2 * args.a) + 1):
        spec = blockstats.JumpLawSpec(lam, args.a, K, v)
        e_y, e_yt = blockstats.drift(spec)
        print(f"{v:>3} {float(e_y):>12.6f} {float(e_yt):>16.6f} "
              f"{str(e_y):>16} {str(e_yt):>20}", file=out)

    if args.runs:
        seed = _resolve_seed(args.seed)
        params = CarpetParams(lam=args.lam, n=args.n, K=K, a=args.a,
                              check=False, trace=True,
                              step_stats=args.dominance)
        records = [run_carpet_hole(params, seed, run_index=t)
                   for t in range(args.runs)]
        report = blockstats.hole_lemma_stats(records)
        print(report.to_text(), file=out)
        if args.json:
            with open(args.json, "w") as fh:
                fh.write(report.to_json() + "\n")
            print(f"wrote {args.json}", file=out)
        if args.dominance:
            dom = blockstats.dominance_report(records)
            print(f"displacement-law dominance at 3 SE over "
                  f"{len(dom.points)} support points: "
                  f"{'ok' if dom.ok else 'VIOLATED'} "
                  f"(worst margin {dom.worst_margin_se():.2f} SE)", file=out)
            if not dom.ok:
                return EXIT_VIOLATION
    return EXIT_OK


# -- sweep ------------------------------------------------------------------

def cmd_sweep(args, out=None) -> int:
    out = out or sys.stdout
    summaries = ensemble.sweep_phase(
        args.lam, args.zeta, L=args.L, k=args.k, trials=args.trials,
        seed=_resolve_seed(args.seed), parallelism=args.parallelism,
        jsonl_path=f"{args.out}.trials.jsonl",
        csv_path=f"{args.out}.summary.csv",
        plot_path=f"{args.out}.grid.csv",
        max_topplings=args.max_topplings)
    _print_summaries(summaries, out)
    print(f"wrote {args.out}.summary.csv, {args.out}.trials.jsonl, "
          f"{args.out}.grid.csv", file=out)
    return _ensemble_exit(summaries)


# -- verify -----------------------------------------------------------------

def cmd_verify(args, out=None) -> int:
    out = out or sys.stdout
    profile = "quick" if args.quick else "full"
    results = acceptance.run_all(profile, echo=lambda s: print(s, file=out))
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed "
          f"({profile} profile)", file=out)
    return EXIT_OK if not failed else EXIT_VIOLATION


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="arwlab",
        description="simulation lab for activated random walk on the line")
    parser.add_argument("--version", action="version",
                        version=f"arwlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate",
                         help="origin-odometer activity estimates")
    sim.add_argument("--lambda", dest="lam", type=_floats,
                     help="sleep rate(s), comma separated")
    sim.add_argument("--zeta", type=_floats, help="density value(s) in [0, 2]")
    sim.add_argument("--L", type=int, help="interval half-width")
    sim.add_argument("--k", type=int, help="activity threshold on the origin odometer")
    sim.add_argument("--trials", type=int)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--parallelism", type=int)
    sim.add_argument("--max-topplings", type=int)
    sim.add_argument("--config", help="run-spec INI file; flags override it")
    sim.add_argument("--out", default="arw-simulate", help="output file prefix")
    sim.set_defaults(fn=cmd_simulate)

    car = sub.add_parser("carpet", help="block/hole emission runs")
    car.add_argument("--lambda", dest="lam", type=float, required=True)
    car.add_argument("--a", type=int, required=True)
    car.add_argument("--K", type=int, help="block spacing (default a^2)")
    car.add_argument("--n", type=int, required=True, help="number of blocks (even)")
    car.add_argument("--trials", type=int, default=1)
    car.add_argument("--seed", type=int)
    car.add_argument("--check", action=argparse.BooleanOptionalAction,
                     default=True, help="structural checks after every attempt")
    car.add_argument("--trace", action=argparse.BooleanOptionalAction,
                     default=True, help="record the per-attempt trace")
    car.add_argument("--step-stats", action="store_true",
                     help="record per-offset hole-step statistics")
    car.add_argument("--max-topplings", type=int, default=DEFAULT_TOPPLING_BUDGET)
    car.add_argument("--out", default="arw-carpet.jsonl")
    car.set_defaults(fn=cmd_carpet)

    rep = sub.add_parser("replay-check", help="per-block mass-balance replay")
    rep.add_argument("--lambda", dest="lam", type=float, required=True)
    rep.add_argument("--a", type=int, required=True)
    rep.add_argument("--K", type=int)
    rep.add_argument("--n", type=int, required=True)
    rep.add_argument("--seed", type=int)
    rep.add_argument("--run-index", type=int, default=0)
    rep.set_defaults(fn=cmd_replay_check)

    blk = sub.add_parser("block-stats",
                         help="jump-law drifts, tail formula, run reports")
    blk.add_argument("--lambda", dest="lam", type=float, default=0.5)
    blk.add_argument("--a", type=int, default=6)
    blk.add_argument("--K", type=int)
    blk.add_argument("--paper-scale", action="store_true",
                     help="print the log-domain drift bound chain")
    blk.add_argument("--tail", nargs=3, metavar=("B", "GAMMA", "NU"),
                     help="evaluate the tail formula at (b, gamma, nu)")
    blk.add_argument("--runs", type=int, default=0,
                     help="pool hole statistics over this many runs")
    blk.add_argument("--n", type=int, default=8, help="blocks per pooled run")
    blk.add_argument("--seed", type=int)
    blk.add_argument("--dominance", action="store_true",
                     help="also compare the compensated law against observed steps")
    blk.add_argument("--json", help="write the pooled report as JSON here")
    blk.set_defaults(fn=cmd_block_stats)

    swp = sub.add_parser("sweep", help="(lambda, zeta) activity grid")
    swp.add_argument("--lambda", dest="lam", type=_floats, required=True)
    swp.add_argument("--zeta", type=_floats, required=True)
    swp.add_argument("--L", type=int, default=200)
    swp.add_argument("--k", type=int, default=10)
    swp.add_argument("--trials", type=int, default=100)
    swp.add_argument("--seed", type=int)
    swp.add_argument("--parallelism", type=int, default=1)
    swp.add_argument("--max-topplings", type=int, default=DEFAULT_TOPPLING_BUDGET)
    swp.add_argument("--out", default="arw-sweep")
    swp.set_defaults(fn=cmd_sweep)

    ver = sub.add_parser("verify", help="run the acceptance suite")
    ver.add_argument("--quick", action="store_true",
                     help="reduced smoke profile (well under two minutes)")
    ver.set_defaults(fn=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PropertyViolationError as exc:
        print(f"property violation: {exc.args[0]}", file=sys.stderr)
        return EXIT_VIOLATION
    except BudgetExceededError as exc:
        print(f"budget exceeded: {exc.args[0]}", file=sys.stderr)
        return EXIT_BUDGET


if __name__ == "__main__":
    sys.exit(main())
