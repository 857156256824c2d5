"""Command-line entry point: ``artifact run|enumerate|predict|oracle|experiment``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from fractions import Fraction
from typing import Sequence

from artifact.envs import UsageError, make_environment, true_model_set
from artifact.grades import grade_to_strs, rational_str
from artifact.harness import AGENTS, RunConfig, run_episode
from artifact.planner import oracle_expectimax
from artifact.search import History, find_models
from artifact.stochastic import (
    DEFAULT_ROW_CAP,
    find_stoch_models,
    natural_extension,
    stmt3_experiment,
)
from artifact.turing import CapacityError

__all__ = ["main", "build_parser"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CAPACITY = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit with status 2
        raise UsageError(message)


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="artifact", description="Enumerative world-model agent on toy worlds.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="play one episode and write a JSON Lines trace")
    run.add_argument("--world", required=True)
    run.add_argument("--agent", choices=AGENTS, default="det")
    run.add_argument("--k-max", type=_positive, default=2)
    run.add_argument("--k", type=_positive, help="fixed complexity for the stochastic agent")
    run.add_argument("--h", type=_positive, default=2)
    run.add_argument("--eps", type=Fraction, help="tolerance, default h^(-1/2)")
    run.add_argument("--gamma", type=Fraction, default=Fraction(1, 2))
    run.add_argument("--cap", type=_positive, default=64, help="grade-set cap")
    run.add_argument("--budget-factor", type=_positive, default=1000)
    run.add_argument("--steps", type=int, default=6)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--row-cap", type=_positive, default=DEFAULT_ROW_CAP)
    run.add_argument("--truth-depth", type=_positive)
    run.add_argument("--no-timing", action="store_true", help="write null wall times (byte-stable traces)")
    run.add_argument("--cache-dir")
    run.add_argument("--trace")

    enum = sub.add_parser("enumerate", help="models of complexity k for a history")
    enum.add_argument("--history", default="", help='action:observation pairs, e.g. "1:1 2:f"')
    enum.add_argument("--n", type=_positive, required=True)
    enum.add_argument("--m", type=_positive, required=True)
    enum.add_argument("--k", type=_positive, required=True)
    enum.add_argument("--budget-factor", type=_positive, default=1000)
    enum.add_argument("--stochastic", action="store_true")
    enum.add_argument("--limit", type=int, default=20, help="members to print")

    pred = sub.add_parser("predict", help="natural extension of a binary word")
    pred.add_argument("--word", required=True)
    pred.add_argument("--k-max", type=_positive, default=2)
    pred.add_argument("--budget-factor", type=_positive, default=1000)

    orc = sub.add_parser("oracle", help="brute-force expectimax on a world's true models")
    orc.add_argument("--world", required=True)
    orc.add_argument("--history", default="")
    orc.add_argument("--h", type=_positive, default=2)
    orc.add_argument("--k", type=_positive)
    orc.add_argument("--depth", type=_positive, default=4, help="verification depth of the true models")
    orc.add_argument("--budget-factor", type=_positive, default=1000)

    exp = sub.add_parser("experiment", help="desk experiments")
    exp_sub = exp.add_subparsers(dest="experiment", required=True, parser_class=_Parser)
    st = exp_sub.add_parser("stmt3", help="natural extension of Bernoulli(p) words")
    st.add_argument("--p", type=Fraction, required=True)
    st.add_argument("--length", type=_positive, default=16)
    st.add_argument("--trials", type=_positive, default=200)
    st.add_argument("--seed", type=int, default=0)
    st.add_argument("--k-max", type=_positive, default=2)
    st.add_argument("--budget-factor", type=_positive, default=1000)
    return parser


def _cmd_run(args) -> None:
    config = RunConfig(
        world=args.world, agent=args.agent, k_max=args.k_max, k=args.k, h=args.h, eps=args.eps,
        gamma=args.gamma, cap=args.cap, budget_factor=args.budget_factor, steps=args.steps,
        seed=args.seed, row_cap=args.row_cap, truth_depth=args.truth_depth,
        timing=not args.no_timing, cache_dir=args.cache_dir, trace_path=args.trace,
    )
    make_environment(config.world)
    trace = run_episode(config)
    print(json.dumps(trace.summary()))


def _cmd_enumerate(args) -> None:
    history = History.parse(args.history, args.n, args.m)
    if args.stochastic:
        wset = find_stoch_models(history, args.k, args.budget_factor)
        print(f"members {len(wset)} rows {wset.rows} truncated {wset.truncated_rows}")
        if len(wset) <= args.limit:
            for mi, wi, R, w in wset.members(args.limit):
                print(mi, wi, "".join(map(str, R)), rational_str(w))
        return
    mset = find_models(history, args.k, args.budget_factor)
    print(f"members {len(mset)} rows {mset.rows}")
    for mi, wi in mset.first_ids(args.limit):
        print(mi, wi)


def _cmd_predict(args) -> None:
    found = natural_extension(args.word, args.k_max, args.budget_factor)
    if found is None:
        print(f"no model up to k={args.k_max}")
        return
    bit, (k, mi, wi) = found
    print(bit)
    print(f"k={k} machine={mi} word={wi}")


def _cmd_oracle(args) -> None:
    env = make_environment(args.world)
    history = History.parse(args.history, env.n, env.m)
    ks = [args.k] if args.k else range(max(env.n, env.m), 4)
    for k in ks:
        mset = true_model_set(args.world, k, args.depth, args.budget_factor)
        if mset:
            break
    else:
        print("no true model found")
        return
    result = oracle_expectimax(mset, history, args.h, rewards=env.rewards)
    print(result.action)
    print(" ".join(grade_to_strs(result.grade)))


def _cmd_stmt3(args) -> None:
    summary = stmt3_experiment(args.p, args.length, args.trials, args.seed, args.k_max, args.budget_factor)
    mean = "none" if summary.mean is None else f"{summary.mean:.4f}"
    print(f"mean {mean} ones {summary.ones} no_model {summary.no_model} trials {summary.trials}")


_COMMANDS = {"run": _cmd_run, "enumerate": _cmd_enumerate, "predict": _cmd_predict, "oracle": _cmd_oracle}


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
        if args.command == "experiment":
            _cmd_stmt3(args)
        else:
            _COMMANDS[args.command](args)
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (UsageError, ValueError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
