"""Mean simple regret of the four budget planners on a few MDPs.

    python3 demos/budget_comparison.py [--mdps 10]

A reduced version of the fixed-budget campaign: every planner receives the
same budgets and the same MDPs, and regret is measured against exact values
at the horizon the budget split assigns.
"""
import argparse

from mdpgape.bench import Campaign, run_campaign


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--mdps", type=int, default=10)
    args = ap.parse_args()
    c = Campaign.from_dict({"mode": "fixed_budget", "env": "desk",
                            "algo": {"name": ["gape", "kl_olop", "brue", "uct"]},
                            "budget_grid": [1000, 10000], "replications": args.mdps})
    res = run_campaign(c)
    print(f"{'algorithm':<9} {'budget':>7} {'mean regret':>12} {'95% CI':>22}")
    for s in res.summary:
        print(f"{s['algorithm']:<9} {s['eps_or_budget']:>7.0f} {s['mean_regret']:>12.4f} "
              f"  [{s['ci95_low']:+.4f}, {s['ci95_high']:+.4f}]")


if __name__ == "__main__":
    main()
