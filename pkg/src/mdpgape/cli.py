"""Command-line entry point.

Subcommands: ``generate``, ``plan``, ``campaign``, ``verify`` and ``nss``.
Exit codes: 0 success, 1 run failure, 2 configuration error (including
unknown flags). Output files go to ``--out`` or, by default, to the
directory named by ``$MDPGAPE_OUTPUT_DIR`` (``./mdpgape-out`` if unset).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from .baselines import sparse_sampling_budget
from .bench import DESK_ENV, PAPER_ENV, Campaign, run_campaign, write_results
from .confidence import ThresholdSpec
from .errors import ConfigError
from .mdp import (ForwardModel, GeneratorConfig, TabularMdp, exact_value_iteration,
                  generate_random_mdp, planning_horizon, simple_regret)
from .planner import GapEConfig, plan

OUTPUT_ENV_VAR = "MDPGAPE_OUTPUT_DIR"
DEFAULT_OUTPUT = "mdpgape-out"
log = logging.getLogger("mdpgape")


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_ENV_VAR, DEFAULT_OUTPUT))


def format_count(x: float) -> str:
    """Compact scientific form without exponent padding, e.g. ``7.776e9``."""
    text = f"{x:.4g}"
    if "e" not in text:
        return text
    mant, exp = text.split("e")
    return f"{mant}e{int(exp)}"


def _env_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--env", choices=("paper", "desk"), default="desk",
                   help="generator preset (paper: S=200 K=5 B=2; desk: S=50 K=3 B=2)")
    p.add_argument("--S", type=int, help="number of states")
    p.add_argument("--K", type=int, help="number of actions")
    p.add_argument("--B", type=int, help="branching factor")
    p.add_argument("--sparsity", type=float, help="fraction of rewarding (s, a) pairs")
    p.add_argument("--seed", type=int, default=0, help="MDP seed")


def _generator(args) -> GeneratorConfig:
    env = PAPER_ENV if args.env == "paper" else DESK_ENV
    over = {k: v for k, v in (("states", args.S), ("actions", args.K),
                              ("branching", args.B), ("sparsity", args.sparsity))
            if v is not None}
    cfg = replace(env, **over).generator(args.seed)
    cfg.validate()
    return cfg


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mdpgape", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a random MDP and save it as JSON")
    _env_args(g)
    g.add_argument("--out", type=Path, help="output file (default: <output dir>/mdp-<seed>.json)")

    p = sub.add_parser("plan", help="run MDP-GapE on one MDP")
    _env_args(p)
    p.add_argument("--mdp", type=Path, help="load the MDP from a JSON file instead")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--gamma", type=float, default=0.7)
    p.add_argument("--H", type=int, help="planning horizon (default: from eps and gamma)")
    p.add_argument("--thresholds", choices=("practical", "theoretical"), default="practical")
    p.add_argument("--episode-seed", type=int, help="oracle seed (default: seed + 1000000)")
    p.add_argument("--max-episodes", type=int, default=10_000_000)
    p.add_argument("--json", action="store_true", help="print the full run record as JSON")

    c = sub.add_parser("campaign", help="run a campaign file (YAML or JSON)")
    c.add_argument("config", type=Path)
    c.add_argument("--out", type=Path)
    c.add_argument("--replications", type=int)
    c.add_argument("--seed", type=int)
    c.add_argument("--eps", type=float, nargs="+", help="override eps_grid")
    c.add_argument("--delta", type=float)
    c.add_argument("--gamma", type=float)
    c.add_argument("--workers", type=int, default=1)

    v = sub.add_parser("verify", help="empirical checks")
    v.add_argument("what", choices=("concentration",))
    v.add_argument("--delta", type=float, nargs="+", default=[0.05, 0.1])
    v.add_argument("--trials", type=int, default=1000)
    v.add_argument("--length", type=int, default=1000)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", type=Path)

    n = sub.add_parser("nss", help="Sparse Sampling sample-complexity scale H^5 (BK)^H / eps^2")
    n.add_argument("--H", type=int, required=True)
    n.add_argument("--B", type=int, required=True)
    n.add_argument("--K", type=int, required=True)
    n.add_argument("--eps", type=float, required=True)
    return ap


def _cmd_generate(args) -> int:
    mdp = generate_random_mdp(_generator(args))
    out = args.out or default_output_dir() / f"mdp-{args.seed}.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    mdp.save(out)
    print(f"wrote {out} (S={mdp.num_states} K={mdp.num_actions} B={mdp.branching})")
    return 0


def _cmd_plan(args) -> int:
    mdp = TabularMdp.load(args.mdp) if args.mdp else generate_random_mdp(_generator(args))
    H = args.H or planning_horizon(args.eps, args.gamma)
    thr = ThresholdSpec(args.thresholds, args.delta, H, mdp.branching, mdp.num_actions)
    cfg = GapEConfig(eps=args.eps, delta=args.delta, gamma=args.gamma, horizon=H,
                     thresholds=thr, branching=mdp.branching, max_episodes=args.max_episodes)
    ep_seed = args.episode_seed if args.episode_seed is not None else args.seed + 1_000_000
    rec = plan(cfg, ForwardModel(mdp, ep_seed))
    rec.simple_regret = simple_regret(exact_value_iteration(mdp, H, args.gamma),
                                      rec.recommended_action)
    rec.seeds["mdp"] = None if args.mdp else args.seed
    if args.json:
        print(rec.to_json())
    else:
        print(f"a_hat={rec.recommended_action} tau={rec.tau} n={rec.oracle_calls} "
              f"regret={rec.simple_regret:.4g} stop={rec.stop_reason}")
    return 0


def _cmd_campaign(args) -> int:
    camp = Campaign.load(args.config)
    over = {}
    if args.replications is not None:
        over["replications"] = args.replications
    if args.seed is not None:
        over["seed"] = args.seed
    if args.eps is not None:
        over["eps_grid"] = tuple(args.eps)
    params = dict(camp.params)
    for key in ("delta", "gamma"):
        if getattr(args, key) is not None:
            params[key] = getattr(args, key)
    camp = replace(camp, params=params, **over)
    out = args.out or (Path(camp.output) if camp.output else default_output_dir())
    res = run_campaign(camp, workers=args.workers)
    paths = write_results(res, out)
    for row in res.summary:
        print(f"{row['algorithm']} x={row['eps_or_budget']:g} runs={row['runs']} "
              f"median_n={row['median_n']} max_regret={row['max_regret']}")
    for algo, (slope, _) in res.slopes.items():
        print(f"{algo} slope={slope:.3f}")
    for r in res.coverage:
        print(f"{r.kind} {r.label} delta={r.delta:g} rate={r.violation_rate:.4f}")
    print("wrote " + ", ".join(str(p) for p in paths))
    failed = sum(row["failures"] for row in res.summary)
    return 1 if failed else 0


def _cmd_verify(args) -> int:
    camp = Campaign(mode="concentration", deltas=tuple(args.delta), trials=args.trials,
                    stream_length=args.length, seed=args.seed)
    res = run_campaign(camp)
    write_results(res, args.out or default_output_dir())
    ok = True
    for r in res.coverage:
        good = r.violation_rate <= r.delta
        ok &= good
        print(f"{'PASS' if good else 'FAIL'} {r.kind} {r.label} delta={r.delta:g} "
              f"rate={r.violation_rate:.4f}")
    return 0 if ok else 1


def _cmd_nss(args) -> int:
    print(format_count(sparse_sampling_budget(args.H, args.B, args.K, args.eps)))
    return 0


COMMANDS = {"generate": _cmd_generate, "plan": _cmd_plan, "campaign": _cmd_campaign,
            "verify": _cmd_verify, "nss": _cmd_nss}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on bad usage, 0 on --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        # domain errors raised while validating user input
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, RuntimeError) as exc:
        log.debug("run failed", exc_info=True)
        print(f"run failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
