"""Fixed-confidence Monte-Carlo planning with MDP-GapE, baselines and benchmarks."""
from .baselines import (BudgetConfig, brue_plan, budget_split, gape_budget_plan, kl_olop_plan,
                        sparse_sampling_budget, sparse_sampling_calls, sparse_sampling_plan,
                        uct_plan)
from .bench import Campaign, CampaignResult, run_campaign
from .confidence import (KlBallProblem, ThresholdSpec, coverage_test, kl_bernoulli,
                         kl_ucb_lower, kl_ucb_upper, max_over_kl_ball, min_over_kl_ball,
                         threshold)
from .diagnostics import check_event_E, track_pseudo_counts
from .errors import (ConfigError, DomainError, ModelAssumptionError, NumericError,
                     PreconditionError)
from .mdp import (ExactValues, ForwardModel, GeneratorConfig, TabularMdp, exact_value_iteration,
                  generate_random_mdp, planning_horizon, sample_step, simple_regret)
from .planner import GapEConfig, GapEPlanner, root_decision, plan
from .records import RunRecord

__version__ = "0.1.0"
