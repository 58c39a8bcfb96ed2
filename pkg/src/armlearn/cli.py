"""Command-line interface: ``armlearn learn|solve|query|equiv|builtin``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import DriverConfig
from .driver import run_active_learning
from .environments import NAMES, builtin, compile_grid, export, load_grid, make_env
from .machine import MachineFormatError, check_equivalence, from_json
from .planner import MAX, BudgetExhausted, UnrealizableQuery, build_query_mdp, execute_membership_query, plan
from .product import build_product_with_reset
from .solver import optimal_mean_payoff


def _add_world(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--domain", choices=NAMES, help="built-in benchmark domain")
    g.add_argument("--grid", type=Path, help="grid file (needs --machine)")
    p.add_argument("--machine", type=Path, help="reward machine JSON for --grid")


def _load_world(args):
    """(GridSpec, truth machine, default DriverConfig or None)."""
    if args.domain:
        return builtin(args.domain)
    if args.machine is None:
        raise SystemExit("--grid needs --machine")
    spec = load_grid(args.grid.read_text())
    truth = from_json(args.machine.read_text())
    return spec, truth, None


def cmd_learn(args) -> int:
    spec, truth, defaults = _load_world(args)
    base = defaults.to_dict() if defaults else {"v_expert": 0.0}
    overrides = {"v_expert": args.expert, "episode_length": args.episode_len,
                 "total_step_budget": args.budget, "query_step_budget": args.query_budget,
                 "mode": args.mode, "seed": args.seed,
                 "out_dir": str(args.out) if args.out else None}
    base.update({k: v for k, v in overrides.items() if v is not None})
    config = DriverConfig(**base)
    env = make_env(spec, truth, seed=config.seed)
    runlog = run_active_learning(env, config)
    if config.out_dir:
        for path in runlog.write(config.out_dir):
            print(f"wrote {path}", file=sys.stderr)
    summary = runlog.summary()
    summary.pop("config")
    print(json.dumps(summary, indent=2))
    return 0


def cmd_solve(args) -> int:
    spec, truth, _ = _load_world(args)
    model, labels = compile_grid(spec)
    product = build_product_with_reset(model, labels, truth, spec.reset_cost, reachable_only=True)
    strat = optimal_mean_payoff(product.mdp)
    mdp = product.mdp
    print(f"optimal gain {strat.value[mdp.initial_state]:.6f}")
    if args.strategy:
        for i, name in enumerate(mdp.states):
            s, u = name
            print(f"{s}\t{truth.name_of(u)}\t{mdp.actions[strat.choice[i]]}")
    return 0


def cmd_query(args) -> int:
    spec, truth, _ = _load_world(args)
    model, labels = compile_grid(spec)
    word = [labels.symbol(z) for z in args.word.split(",") if z]
    q = build_query_mdp(model, labels, word)
    strat = plan(q, args.mode)
    v = strat.value[q.start]
    if args.mode == MAX:
        print(f"per-attempt success probability {v:.6f}")
    else:
        print(f"expected steps {v:.3f}")
    if args.execute:
        env = make_env(spec, truth, seed=args.seed)
        env.reset()
        res = execute_membership_query(env, strat, q, args.budget)
        print(json.dumps({"rewards": list(res.rewards), "steps": res.steps,
                          "env_actions": res.env_actions, "attempts": res.attempts}))
    return 0


def cmd_equiv(args) -> int:
    a = from_json(args.a.read_text())
    b = from_json(args.b.read_text())
    word = check_equivalence(a, b)
    if word is None:
        print("equivalent")
        return 0
    names = ",".join(a.alphabet[z] for z in word)
    print(f"counterexample {names}")
    print(f"  {args.a}: {list(a.run_observations(word))}")
    print(f"  {args.b}: {list(b.run_observations(word))}")
    return 1


def cmd_builtin(args) -> int:
    for path in export(args.name, args.out):
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="armlearn", description="Active learning of reward machines in MDPs")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("learn", help="learn the hidden reward machine while collecting reward")
    _add_world(p)
    p.add_argument("--expert", type=float, help="expert lower bound on the mean payoff")
    p.add_argument("--episode-len", type=int)
    p.add_argument("--budget", type=int, help="total number of environment actions")
    p.add_argument("--query-budget", type=int, help="step limit for a single membership query")
    p.add_argument("--mode", choices=("min", "max"))
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path, help="directory for run.csv, learned.json, learned.dot, summary.json")
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("solve", help="optimal mean payoff of a grid with a known machine")
    _add_world(p)
    p.add_argument("--strategy", action="store_true", help="also print the strategy")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("query", help="plan (and optionally run) one membership query")
    _add_world(p)
    p.add_argument("--word", required=True, help="comma-separated observations, e.g. m,e,t")
    p.add_argument("--mode", choices=("min", "max"), default="min")
    p.add_argument("--execute", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=int, default=10**6)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("equiv", help="check two machine files for equivalence")
    p.add_argument("a", type=Path)
    p.add_argument("b", type=Path)
    p.set_defaults(func=cmd_equiv)

    p = sub.add_parser("builtin", help="export a built-in domain as editable files")
    p.add_argument("name", choices=NAMES)
    p.add_argument("--out", type=Path, default=Path("."))
    p.set_defaults(func=cmd_builtin)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UnrealizableQuery, BudgetExhausted, MachineFormatError, ValueError, KeyError, OSError) as err:
        print(f"armlearn: error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
