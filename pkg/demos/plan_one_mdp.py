"""Plan on one random MDP and look inside the run.

    python3 demos/plan_one_mdp.py [--eps 1.0] [--seed 0]

Generates an MDP of the benchmark family (S=200, K=5, B=2), runs MDP-GapE
with the practical thresholds, then prints the final root bounds, the
recommendation, its true regret and how the oracle calls compare with the
Sparse Sampling scale at the same horizon.
"""
import argparse

from mdpgape import (ForwardModel, GapEConfig, GapEPlanner, GeneratorConfig, ThresholdSpec,
                     exact_value_iteration, generate_random_mdp, planning_horizon, simple_regret)
from mdpgape.baselines import sparse_sampling_budget


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--eps", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    gamma, delta = 0.7, 0.1
    mdp = generate_random_mdp(GeneratorConfig(200, 5, 2, 0.5, args.seed))
    H = planning_horizon(args.eps, gamma)
    thr = ThresholdSpec("practical", delta, H, mdp.branching, mdp.num_actions)
    cfg = GapEConfig(args.eps, delta, gamma, H, thr, mdp.branching)

    planner = GapEPlanner(cfg, mdp.num_actions, 0)
    action, reason = planner.run(ForwardModel(mdp, args.seed + 1_000_000))

    vals = exact_value_iteration(mdp, H, gamma)
    U, L = planner.root_bounds()
    print(f"H={H}  episodes={planner.episodes}  oracle calls={planner.oracle_calls}  stop={reason}")
    print(" a   L_1        Q*_1       U_1")
    for a in range(mdp.num_actions):
        print(f" {a}   {L[a]:.4f}     {vals.q[0, 0, a]:.4f}     {U[a]:.4f}")
    d = planner.decision()
    print(f"best={d.best} challenger={d.challenger} stop statistic={d.stop_stat:.4f} <= eps={args.eps}")
    print(f"recommended {action}, regret {simple_regret(vals, action):.4g}")
    n_ss = sparse_sampling_budget(H, mdp.branching, mdp.num_actions, args.eps)
    print(f"Sparse Sampling scale at this horizon: {n_ss:.3g} calls "
          f"({n_ss / planner.oracle_calls:.2g}x more)")


if __name__ == "__main__":
    main()
