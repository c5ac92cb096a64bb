import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mdpgape.confidence import ThresholdSpec
from mdpgape.errors import ConfigError, ModelAssumptionError
from mdpgape.mdp import ForwardModel, GeneratorConfig, TabularMdp, generate_random_mdp
from mdpgape.planner import GapEConfig, GapEPlanner, PlanNode, StateNode, plan, root_decision

from oracles import root_decision_ref, sigma_ref, tree_bounds_ref

GAMMA = 0.7


def make_cfg(H=2, K=2, B=2, eps=0.5, delta=0.1, kind="practical", **kw):
    return GapEConfig(eps, delta, GAMMA, H, ThresholdSpec(kind, delta, H, B, K), B, **kw)


def toy_mdp(seed=0):
    """2 states, 2 actions, every row has both states as successors."""
    rng = np.random.default_rng(seed)
    succ = np.tile(np.array([0, 1]), (2, 2, 1))
    p0 = rng.uniform(0.2, 0.8, size=(2, 2))
    probs = np.stack([p0, 1 - p0], axis=-1)
    return TabularMdp(succ, probs, rng.uniform(0, 1, size=(2, 2)))


def walk_nodes(planner):
    stack = [planner.root]
    while stack:
        sn = stack.pop()
        for node in sn.actions:
            if node is not None:
                yield node
                stack.extend(node.children.values())


# -- root decision ---------------------------------------------------------


def test_root_decision_example():
    d = root_decision([0.9, 0.8, 0.5], [0.5, 0.3, 0.1])
    assert (d.best, d.challenger, d.selected) == (0, 1, 1)
    assert math.isclose(d.stop_stat, 0.3, abs_tol=1e-12)


def test_root_decision_ties_go_low():
    d = root_decision([0.6, 0.6], [0.2, 0.2])
    assert (d.best, d.challenger, d.selected) == (0, 1, 0)


def test_root_decision_needs_two_actions():
    with pytest.raises(ConfigError):
        root_decision([1.0], [0.0])


grid = st.sampled_from([0.0, 0.1, 0.25, 0.5, 0.75, 1.0])


@settings(max_examples=400)
@given(st.integers(2, 5).flatmap(lambda K: st.lists(st.tuples(grid, grid), min_size=K, max_size=K)))
def test_root_decision_matches_brute_force(pairs):
    # coarse grid values force plenty of ties
    U = [max(x, y) for x, y in pairs]
    L = [min(x, y) for x, y in pairs]
    d = root_decision(U, L)
    assert (d.best, d.challenger, d.selected, d.stop_stat) == root_decision_ref(U, L)
    assert d.selected in (d.best, d.challenger) and d.best != d.challenger


# -- bounds vs full-tree recomputation ---------------------------------------


SCRIPT = [
    [(0, 0, 1.0, 1), (1, 1, 0.0, 0)],
    [(0, 1, 0.0, 0), (0, 0, 1.0, 1)],
    [(0, 0, 0.0, 0), (0, 1, 1.0, 0)],
    [(0, 0, 1.0, 1), (1, 0, 1.0, 1)],
    [(0, 1, 1.0, 1), (1, 1, 0.0, 1)],
]


def assert_tree_matches(planner, trajectories):
    cfg = planner.cfg
    ref = tree_bounds_ref(trajectories, cfg.thresholds, cfg.gamma, cfg.horizon,
                          cfg.branching, planner.K)
    nodes = list(walk_nodes(planner))
    assert {n.key for n in nodes} == set(ref)
    for node in nodes:
        u, l, U, L = ref[node.key]
        assert node.u == pytest.approx(u, abs=1e-9)
        assert node.l == pytest.approx(l, abs=1e-9)
        assert node.U == pytest.approx(U, abs=1e-9)
        assert node.L == pytest.approx(L, abs=1e-9)


@pytest.mark.parametrize("kind", ["practical", "theoretical"])
def test_scripted_updates_match_full_tree_recomputation(kind):
    planner = GapEPlanner(make_cfg(kind=kind), 2, 0)
    for t, traj in enumerate(SCRIPT, start=1):
        planner.update_bounds(traj)
        assert_tree_matches(planner, SCRIPT[:t])


@pytest.mark.parametrize("seed", range(6))
def test_planner_runs_match_full_tree_recomputation(seed):
    model = ForwardModel(toy_mdp(seed), seed)
    H = 2 + seed % 2
    planner = GapEPlanner(make_cfg(H=H, eps=0.05), 2, 0)
    trajs = []
    for _ in range(12):
        trajs.append(planner.step(model))
        assert_tree_matches(planner, trajs)


def test_leaf_parent_bounds_equal_reward_bounds():
    planner = GapEPlanner(make_cfg(H=2), 2, 0)
    for traj in SCRIPT:
        planner.update_bounds(traj)
    for node in walk_nodes(planner):
        if node.depth == 2:
            assert (node.U, node.L) == (node.u, node.l)


# -- invariants ---------------------------------------------------------------


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 8), st.integers(2, 3), st.integers(1, 3), st.integers(1, 4),
       st.sampled_from(["practical", "theoretical"]), st.integers(0, 10_000))
def test_node_invariants_during_runs(S, K, B, H, kind, seed):
    B = min(B, S)
    mdp = generate_random_mdp(GeneratorConfig(S, K, B, 0.5, seed))
    cfg = GapEConfig(0.3, 0.1, GAMMA, H, ThresholdSpec(kind, 0.1, H, B, K), B,
                     max_episodes=60, diagnostics=True)
    planner = GapEPlanner(cfg, K, 0)
    _, reason = planner.run(ForwardModel(mdp, seed + 1))
    d = planner.diag
    for i in range(len(d.ep)):
        key = d.node_keys[d.node[i]]
        h = len(key) // 2
        assert 0.0 <= d.l[i] <= d.u[i] <= 1.0
        assert 0.0 <= d.L[i] <= d.U[i] <= sigma_ref(H - h + 1, GAMMA) + 1e-12
        assert d.n[i] == sum(c for _, c in d.counts[i])
    assert planner.oracle_calls == H * planner.episodes
    if reason == "confidence":
        assert planner.decision().stop_stat <= cfg.eps


def test_update_touches_only_the_path():
    mdp = generate_random_mdp(GeneratorConfig(6, 3, 2, 0.5, seed=5))
    model = ForwardModel(mdp, 9)
    planner = GapEPlanner(make_cfg(H=3, K=3, eps=0.01), 3, 0)
    for _ in range(40):
        before = {n.key: (n.n, n.reward_sum, dict(n.child_counts), n.u, n.l, n.U, n.L)
                  for n in walk_nodes(planner)}
        traj = planner.step(model)
        path, key = set(), (0,)
        for _s, a, _r, s_next in traj:
            key = key + (a,)
            path.add(key)
            key = key + (s_next,)
        for node in walk_nodes(planner):
            if node.key in before and node.key not in path:
                assert (node.n, node.reward_sum, node.child_counts, node.u, node.l,
                        node.U, node.L) == before[node.key]


def test_fresh_node_starts_at_trivial_bounds():
    node = PlanNode((0, 1), 2, 0, 1, sigma_ref(2, GAMMA), 0)
    assert (node.n, node.u, node.l, node.L) == (0, 1.0, 0.0, 0.0)
    assert node.U == sigma_ref(2, GAMMA)


# -- transition slots ------------------------------------------------------------


def test_kl_ball_slots_unvisited_node_is_full_simplex():
    planner = GapEPlanner(make_cfg(H=3), 2, 0)
    node = PlanNode((0, 0), 1, 0, 0, planner.sig[3], 0)
    prob = planner.kl_ball_slots(node, "upper")
    assert math.isinf(prob.radius)
    assert max(prob.values) == pytest.approx(sigma_ref(2, GAMMA))


def test_kl_ball_slots_virtual_slot():
    planner = GapEPlanner(make_cfg(H=3), 2, 0)
    planner.update_bounds([(0, 0, 1.0, 1), (1, 0, 0.0, 0), (0, 1, 1.0, 1)])
    node = planner.root.actions[0]
    up = planner.kl_ball_slots(node, "upper")
    assert up.p_hat == (1.0, 0.0)
    assert up.values == (node.children[1].best_U, pytest.approx(sigma_ref(2, GAMMA)))
    assert up.radius == pytest.approx(planner.thr.transition(1))
    lo = planner.kl_ball_slots(node, "lower")
    assert lo.values == (node.children[1].best_L, 0.0)


def test_kl_ball_slots_all_observed():
    planner = GapEPlanner(make_cfg(H=2), 2, 0)
    planner.update_bounds([(0, 0, 1.0, 1), (1, 0, 0.0, 0)])
    planner.update_bounds([(0, 0, 1.0, 0), (0, 1, 0.0, 0)])
    planner.update_bounds([(0, 0, 0.0, 0), (0, 1, 0.0, 1)])
    node = planner.root.actions[0]
    prob = planner.kl_ball_slots(node)
    assert sorted(prob.p_hat) == [pytest.approx(1 / 3), pytest.approx(2 / 3)]
    assert len(prob.p_hat) == 2


def test_too_many_successors_is_rejected():
    planner = GapEPlanner(make_cfg(H=2, B=2), 2, 0)
    planner.update_bounds([(0, 0, 1.0, 1), (1, 0, 0.0, 0)])
    planner.update_bounds([(0, 0, 1.0, 2), (2, 0, 0.0, 0)])
    with pytest.raises(ModelAssumptionError):
        planner.update_bounds([(0, 0, 1.0, 3), (3, 0, 0.0, 0)])
    with pytest.raises(ModelAssumptionError):
        planner.kl_ball_slots(planner.root.actions[0])


# -- optimistic policy ----------------------------------------------------------


def test_optimistic_action_cases():
    planner = GapEPlanner(make_cfg(H=3, K=3), 3, 0)
    assert planner.optimistic_action(None) == 0
    sn = StateNode(2, 1, (0, 0, 1), 3, planner.sig[2])
    planner._refresh_state(sn, planner.sig[2])
    assert planner.optimistic_action(sn) == 0
    sn.actions[0] = PlanNode((0, 0, 1, 0), 2, 1, 0, planner.sig[2], 0)
    sn.actions[0].U = 0.4
    planner._refresh_state(sn, planner.sig[2])
    assert planner.optimistic_action(sn) == 1


def test_optimistic_action_matches_stored_u():
    mdp = generate_random_mdp(GeneratorConfig(4, 3, 2, 0.5, seed=2))
    model = ForwardModel(mdp, 3)
    planner = GapEPlanner(make_cfg(H=3, K=3, eps=0.01), 3, 0)
    for _ in range(30):
        planner.step(model)
    stack = [c for n in planner.root.actions if n for c in n.children.values()]
    checked = 0
    while stack:
        sn = stack.pop()
        U = [planner.sig[planner.H - sn.depth + 1] if n is None else n.U for n in sn.actions]
        assert planner.optimistic_action(sn) == U.index(max(U))
        checked += 1
        stack.extend(c for n in sn.actions if n for c in n.children.values())
    assert checked > 5


# -- episodes and stopping -------------------------------------------------------


def test_horizon_one_episode():
    mdp = toy_mdp()
    model = ForwardModel(mdp, 1)
    planner = GapEPlanner(make_cfg(H=1), 2, 0)
    played = planner.decision().selected
    traj = planner.step(model)
    assert len(traj) == 1 and traj[0][:2] == (0, played)
    assert planner.oracle_calls == 1 == model.calls


def test_calls_grow_by_horizon_per_episode():
    model = ForwardModel(toy_mdp(), 1)
    planner = GapEPlanner(make_cfg(H=4), 2, 0)
    for t in range(1, 8):
        planner.step(model)
        assert planner.oracle_calls == 4 * t == model.calls


def test_deterministic_mdp_trajectory_follows_actions():
    mdp = generate_random_mdp(GeneratorConfig(6, 2, 1, 0.5, seed=4))
    planner = GapEPlanner(make_cfg(H=4, B=1), 2, 0)
    for seed in range(5):
        traj = planner.run_episode(ForwardModel(mdp, seed), 1)
        s = 0
        for s_h, a, _r, s_next in traj:
            assert s_h == s and s_next == mdp.successors[s, a, 0]
            s = s_next


def test_single_action_stops_immediately():
    mdp = generate_random_mdp(GeneratorConfig(5, 1, 2, 0.5, seed=1))
    rec = plan(make_cfg(K=1), ForwardModel(mdp, 2))
    assert (rec.recommended_action, rec.tau, rec.oracle_calls) == (0, 0, 0)
    assert rec.stop_reason == "single_action"


def test_loose_tolerance_stops_at_once():
    mdp = generate_random_mdp(GeneratorConfig(5, 3, 2, 0.5, seed=1))
    H = 3
    rec = plan(make_cfg(H=H, K=3, eps=sigma_ref(H, GAMMA)), ForwardModel(mdp, 2))
    assert rec.tau <= 1 and rec.stop_reason == "confidence"


def test_budget_cap_is_flagged():
    mdp = generate_random_mdp(GeneratorConfig(20, 3, 2, 0.5, seed=1))
    rec = plan(make_cfg(H=4, K=3, eps=1e-3, max_episodes=25), ForwardModel(mdp, 2))
    assert rec.stop_reason == "budget" and rec.tau == 25 and rec.oracle_calls == 100


def test_confidence_stop_satisfies_rule():
    mdp = generate_random_mdp(GeneratorConfig(10, 3, 2, 0.5, seed=7))
    cfg = make_cfg(H=3, K=3, eps=0.6)
    planner = GapEPlanner(cfg, 3, 0)
    action, reason = planner.run(ForwardModel(mdp, 8))
    assert reason == "confidence"
    d = planner.decision()
    assert d.stop_stat <= cfg.eps and action == d.best


def test_plan_is_deterministic():
    mdp = generate_random_mdp(GeneratorConfig(30, 3, 2, 0.5, seed=21))
    cfg = make_cfg(H=4, K=3, eps=0.8, diagnostics=True)
    a = plan(cfg, ForwardModel(mdp, 5))
    b = plan(cfg, ForwardModel(mdp, 5))
    assert (a.recommended_action, a.tau, a.oracle_calls) == (b.recommended_action, b.tau, b.oracle_calls)
    assert a.diagnostics.trajectories == b.diagnostics.trajectories
    assert a.to_json() == b.to_json()


def test_config_validation():
    thr = ThresholdSpec("practical", 0.1, 2, 2, 2)
    with pytest.raises(ConfigError):
        GapEConfig(0.5, 1.0, GAMMA, 2, thr, 2)
    with pytest.raises(ConfigError):
        make_cfg(eps=-0.1)
    with pytest.raises(ConfigError):
        make_cfg(tie_break="random")
