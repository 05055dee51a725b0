"""Command-line front end for the DPLL(T) network verifier."""

import argparse
import logging
import sys

import pandas as pd

from config import LOG_LEVEL
from errors import ConfigError, ParseError, RefusalError
from abstraction import AbstractionMode
from attack import AttackConfig, falsify
from benchmark import AblationRunner
from database import DatabaseManager
from oracle import enumerate_verify
from solver import Decider, SearchMode, SolverConfig, VerdictKind, format_stats, verify
from spec_io import load_problem
from theory import LpRelaxation

EXIT_OK = 0
EXIT_UNDECIDED = 1
EXIT_USAGE = 2


def build_parser():
    parser = argparse.ArgumentParser(description="DPLL(T) verifier for ReLU networks")
    parser.add_argument('command', choices=['verify', 'falsify', 'oracle', 'ablate', 'runs'],
                        help='Command to execute')
    parser.add_argument('--net', type=str, help='Network file (JSON)')
    parser.add_argument('--prop', type=str, help='Property file (VNN-LIB subset)')
    parser.add_argument('--seed', type=int, default=None, help='Random seed (default: VERIFIER_SEED)')
    parser.add_argument('--timeout', type=float, default=None, help='Wall-clock budget in seconds')
    parser.add_argument('--mode', choices=[m.value for m in SearchMode], default=SearchMode.FULL.value)
    parser.add_argument('--abstraction', choices=[m.value for m in AbstractionMode],
                        default=AbstractionMode.BOTH.value)
    parser.add_argument('--lp-relaxation', choices=[m.value for m in LpRelaxation],
                        default=LpRelaxation.TRIANGLE.value)
    parser.add_argument('--decider', choices=[d.value for d in Decider], default=Decider.FSB.value)
    parser.add_argument('--no-tighten', action='store_true', help='Skip LP input tightening')
    parser.add_argument('--no-attack', action='store_true', help='Skip the falsification fast path')
    parser.add_argument('--split', type=int, default=1, help='Input splits per dimension')
    parser.add_argument('--jobs', type=int, default=1, help='Worker processes for subproblems')
    parser.add_argument('--stats', type=str, help='Write statistics to FILE (CSV when it ends in .csv)')
    parser.add_argument('--oracle', action='store_true', help='Cross-check the verdict by enumeration')
    parser.add_argument('--trace', action='store_true', help='Print the search trace on stderr')
    parser.add_argument('--count', type=int, default=50, help='Problems in the ablation suite')
    parser.add_argument('--budget', type=float, default=10.0, help='Per-run budget for ablate (seconds)')
    parser.add_argument('--csv', type=str, help='CSV output for ablate')
    parser.add_argument('--export', type=str, help='Directory to write the ablation problems to')
    parser.add_argument('--suite', type=str, default='random', help='Suite name for ablate / runs')
    return parser


def _solver_config(args):
    values = {
        'mode': args.mode,
        'abstraction': args.abstraction,
        'lp_relaxation': args.lp_relaxation,
        'decider': args.decider,
        'tighten': not args.no_tighten,
        'attack': not args.no_attack,
        'split_per_dim': args.split,
        'jobs': args.jobs,
    }
    if args.seed is not None:
        values['seed'] = args.seed
    if args.timeout is not None:
        values['timeout'] = args.timeout
    return SolverConfig.create(**values)


def _print_witness(witness):
    for i, value in enumerate(witness):
        print(f"X_{i} = {float(value)!r}")


def _write_stats(path, stats):
    if path.endswith('.csv'):
        pd.DataFrame([stats.as_dict()]).to_csv(path, index=False)
    else:
        with open(path, 'w', encoding='utf-8') as f:
            f.write(format_stats(stats))


def _load(args):
    if not args.net or not args.prop:
        raise ConfigError(f"--net and --prop are required for {args.command}")
    return load_problem(args.net, args.prop)


def cmd_verify(args):
    problem = _load(args)
    cfg = _solver_config(args)
    verdict = verify(problem, cfg)

    kind = verdict.kind
    if kind is VerdictKind.SAT and not problem.is_counterexample(verdict.witness):
        logging.getLogger(__name__).error("witness failed validation; reporting unknown")
        kind = VerdictKind.UNKNOWN

    print(kind.value)
    if kind is VerdictKind.SAT:
        _print_witness(verdict.witness)

    if args.trace:
        for entry in verdict.trace:
            print(entry, file=sys.stderr)
    if args.stats:
        _write_stats(args.stats, verdict.stats)

    if args.oracle:
        try:
            expected = enumerate_verify(problem).kind
        except RefusalError as e:
            print(f"oracle skipped: {e}", file=sys.stderr)
        else:
            definitive = (VerdictKind.SAT, VerdictKind.UNSAT)
            if kind in definitive and expected in definitive and kind is not expected:
                print(f"oracle mismatch: solver says {kind.value}, oracle says {expected.value}", file=sys.stderr)
                return EXIT_UNDECIDED

    return EXIT_OK if kind in (VerdictKind.SAT, VerdictKind.UNSAT) else EXIT_UNDECIDED


def cmd_falsify(args):
    problem = _load(args)
    cfg = AttackConfig.create(seed=args.seed) if args.seed is not None else AttackConfig()
    witness = falsify(problem, cfg)
    if witness is None:
        print(VerdictKind.UNKNOWN.value)
        return EXIT_UNDECIDED
    print(VerdictKind.SAT.value)
    _print_witness(witness)
    return EXIT_OK


def cmd_oracle(args):
    problem = _load(args)
    verdict = enumerate_verify(problem)
    print(verdict.kind.value)
    if verdict.kind is VerdictKind.SAT:
        _print_witness(verdict.witness)
    return EXIT_OK if verdict.kind in (VerdictKind.SAT, VerdictKind.UNSAT) else EXIT_UNDECIDED


def cmd_ablate(args):
    db = DatabaseManager()
    try:
        runner = AblationRunner(suite=args.suite, count=args.count,
                                seed=args.seed if args.seed is not None else 0,
                                budget=args.budget, db=db)
        if args.export:
            runner.export(args.export)
        frame = runner.run()
        if args.csv:
            frame.to_csv(args.csv, index=False)
            print(f"💾 Wrote {len(frame)} rows to {args.csv}")
        return EXIT_OK if frame['agrees'].all() else EXIT_UNDECIDED
    finally:
        db.close()


def cmd_runs(args):
    db = DatabaseManager()
    try:
        runs = db.get_runs(args.suite)
        print(f"\n📋 Stored runs for suite '{args.suite}' ({len(runs)}):")
        print("-" * 80)
        if not runs:
            print("No runs found.")
            return EXIT_OK
        for run in runs:
            print(f"  seed {run.instance_seed:>4}  {run.mode:<12} {run.verdict:<8} "
                  f"decisions={run.decisions} learned={run.learned_clauses} time={run.wall_time:.3f}s")

        print(f"\n📊 Summary by mode:")
        print("-" * 40)
        for mode, entry in db.summarize(args.suite).items():
            verdicts = ", ".join(f"{k}: {v}" for k, v in sorted(entry['verdicts'].items()))
            print(f"  {mode}: {entry['solved']}/{entry['runs']} solved ({verdicts}), "
                  f"median decisions {entry['median_decisions']}")
        return EXIT_OK
    finally:
        db.close()


COMMANDS = {
    'verify': cmd_verify,
    'falsify': cmd_falsify,
    'oracle': cmd_oracle,
    'ablate': cmd_ablate,
    'runs': cmd_runs,
}


def run(argv=None):
    """Parse arguments, dispatch, and return the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK

    logging.basicConfig(level=LOG_LEVEL, stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    try:
        return COMMANDS[args.command](args)
    except (ParseError, ConfigError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except RefusalError as e:
        print(f"refused: {e}", file=sys.stderr)
        return EXIT_UNDECIDED
    except KeyboardInterrupt:
        print("\nOperation cancelled by user.", file=sys.stderr)
        return EXIT_UNDECIDED


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
