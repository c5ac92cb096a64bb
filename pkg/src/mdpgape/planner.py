"""MDP-GapE: fixed-confidence Monte-Carlo planning with KL confidence bounds.

The search tree alternates state nodes and action nodes. An action node at
depth ``h`` is identified by the history ``(s_1, a_1, ..., s_h, a_h)`` and
stores its visit count, reward sum, successor counts and cached bounds
``u, l`` (mean reward) and ``U, L`` (optimal value). After an episode only
the nodes on the visited path are refreshed, deepest first.
"""
from __future__ import annotations

import math
from array import array
from dataclasses import dataclass, field
from typing import Any

from .confidence import (ThresholdSpec, ball_max_value, ball_min_value,
                         kl_ucb_lower, kl_ucb_upper, KlBallProblem)
from .errors import ConfigError, ModelAssumptionError
from .mdp import ForwardModel, sigma
from .records import RunRecord

DEFAULT_MAX_EPISODES = 10_000_000


@dataclass(frozen=True)
class GapEConfig:
    eps: float
    delta: float
    gamma: float
    horizon: int
    thresholds: ThresholdSpec
    branching: int
    max_episodes: int = DEFAULT_MAX_EPISODES
    tie_break: str = "lowest_index"
    diagnostics: bool = False

    def __post_init__(self):
        if not self.eps >= 0:
            raise ConfigError("eps must be nonnegative")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError("delta must lie in (0, 1)")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError("gamma must lie in (0, 1]")
        if self.horizon < 1 or self.branching < 1:
            raise ConfigError("horizon and branching must be >= 1")
        if self.tie_break != "lowest_index":
            raise ConfigError(f"unsupported tie_break {self.tie_break!r}")

    def echo(self) -> dict[str, Any]:
        t = self.thresholds
        return {"eps": self.eps, "delta": self.delta, "gamma": self.gamma,
                "horizon": self.horizon, "branching": self.branching,
                "max_episodes": self.max_episodes, "thresholds": t.kind,
                "budget_episodes": t.budget_episodes}


class StateNode:
    __slots__ = ("depth", "state", "key", "actions", "best_U", "best_L", "policy")

    def __init__(self, depth: int, state: int, key: tuple, num_actions: int, sig: float):
        self.depth = depth
        self.state = state
        self.key = key
        self.actions: list[PlanNode | None] = [None] * num_actions
        # an unvisited action has U = sigma_{H-h+1}, L = 0
        self.best_U = sig
        self.best_L = 0.0
        self.policy = 0


class PlanNode:
    """Statistics of one (history, action) pair."""

    __slots__ = ("key", "depth", "state", "action", "n", "reward_sum",
                 "child_counts", "children", "u", "l", "U", "L", "node_id")

    def __init__(self, key: tuple, depth: int, state: int, action: int, sig: float, node_id: int):
        self.key = key
        self.depth = depth
        self.state = state
        self.action = action
        self.n = 0
        self.reward_sum = 0.0
        self.child_counts: dict[int, int] = {}
        self.children: dict[int, StateNode] = {}
        self.u = 1.0
        self.l = 0.0
        self.U = sig
        self.L = 0.0
        self.node_id = node_id


@dataclass(frozen=True)
class RootDecision:
    best: int
    challenger: int
    selected: int
    stop_stat: float


def root_decision(U, L) -> RootDecision:
    """UGapE choice of the candidate, its challenger and the action to play.

    ``best`` minimises ``max_{a != b} U[a] - L[b]``, ``challenger`` maximises
    ``U`` over the other actions, and the played action is whichever of the
    two has the wider interval ``U - L``. Ties go to the lowest index.
    """
    K = len(U)
    if K < 2:
        raise ConfigError("root_decision needs at least two actions")
    # top two of U give max_{a != b} U[a] in O(K)
    i1 = 0
    for a in range(1, K):
        if U[a] > U[i1]:
            i1 = a
    i2 = 1 if i1 == 0 else 0
    for a in range(K):
        if a != i1 and U[a] > U[i2]:
            i2 = a
    best, best_idx = math.inf, 0
    for b in range(K):
        idx = (U[i2] if b == i1 else U[i1]) - L[b]
        if idx < best:
            best, best_idx = idx, b
    b = best_idx
    c = -1
    for a in range(K):
        if a != b and (c < 0 or U[a] > U[c]):
            c = a
    db, dc = U[b] - L[b], U[c] - L[c]
    if db > dc:
        sel = b
    elif dc > db:
        sel = c
    else:
        sel = min(b, c)
    return RootDecision(best=b, challenger=c, selected=sel, stop_stat=U[c] - L[b])


class RunDiagnostics:
    """Opt-in per-episode logs for replaying a run against the true MDP.

    Each refreshed node appends one row across the parallel arrays ``ep``,
    ``node``, ``n``, ``rsum``, ``u``, ``l``, ``U``, ``L`` and ``counts`` (the
    node's successor counts at that moment); ``node_keys[node_id]`` is the
    node's history. ``policy_log[t]`` lists the
    ``(state_key, action)`` changes that define the policy for episode
    ``t + 1``; ``root_actions[t]`` is the depth-1 action of episode ``t``
    (0-based).
    """

    def __init__(self, cfg: GapEConfig, s1: int, num_actions: int):
        self.cfg = cfg
        self.s1 = s1
        self.num_actions = num_actions
        self.node_keys: list[tuple] = []
        self.ep = array("l")
        self.node = array("l")
        self.n = array("l")
        self.rsum = array("d")
        self.u = array("d")
        self.l = array("d")
        self.U = array("d")
        self.L = array("d")
        self.counts: list[tuple] = []
        self.policy_log: list[list[tuple[tuple, int]]] = []
        self.root_actions: list[int] = []
        self.trajectories: list[tuple] = []

    def summary(self) -> dict[str, Any]:
        return {"nodes": len(self.node_keys), "visit_rows": len(self.ep),
                "episodes": len(self.root_actions)}


class GapEPlanner:
    """One planning run from a fixed root state."""

    def __init__(self, cfg: GapEConfig, num_actions: int, s1: int):
        if num_actions < 1:
            raise ConfigError("num_actions must be >= 1")
        self.cfg = cfg
        self.K = num_actions
        self.H = cfg.horizon
        self.s1 = s1
        self.gamma = cfg.gamma
        self.thr = cfg.thresholds
        # sig[m] = sigma_m
        self.sig = [sigma(m, cfg.gamma) for m in range(self.H + 2)]
        self.root = StateNode(1, s1, (s1,), num_actions, self.sig[self.H])
        self.episodes = 0
        self.oracle_calls = 0
        self.num_nodes = 0
        self.diag = RunDiagnostics(cfg, s1, num_actions) if cfg.diagnostics else None

    # -- bounds --------------------------------------------------------
    def root_bounds(self) -> tuple[list[float], list[float]]:
        U, L = [], []
        top = self.sig[self.H]
        for node in self.root.actions:
            U.append(top if node is None else node.U)
            L.append(0.0 if node is None else node.L)
        return U, L

    def decision(self) -> RootDecision:
        U, L = self.root_bounds()
        return root_decision(U, L)

    def kl_ball_slots(self, node: PlanNode, side: str = "upper") -> KlBallProblem:
        """Slot view of the transition confidence set of ``node``.

        One slot per observed successor; if fewer than ``B`` successors were
        seen, one extra slot with empirical mass 0 stands for all unseen
        states and carries the extreme value (``sigma_{H-h}`` for the upper
        side, 0 for the lower side).
        """
        h = node.depth
        rest = self.sig[self.H - h]
        n = node.n
        B = self.cfg.branching
        if len(node.child_counts) > B:
            raise ModelAssumptionError(
                f"{len(node.child_counts)} successors observed at {node.key}, branching is {B}")
        p_hat, values = [], []
        for s_next, c in node.child_counts.items():
            p_hat.append(c / n)
            child = node.children.get(s_next)
            if child is None:  # depth H: continuation is zero
                values.append(0.0)
            else:
                values.append(child.best_U if side == "upper" else child.best_L)
        if len(p_hat) < B:
            p_hat.append(0.0)
            values.append(rest if side == "upper" and h < self.H else 0.0)
        if n == 0:
            if not p_hat or sum(p_hat) == 0.0:
                p_hat = [1.0] + [0.0] * (len(values) - 1)
            return KlBallProblem(tuple(p_hat), math.inf, tuple(values))
        return KlBallProblem(tuple(p_hat), self.thr.transition(n) / n, tuple(values))

    def _refresh(self, node: PlanNode) -> None:
        n = node.n
        r_hat = node.reward_sum / n
        level = self.thr.reward(n) / n
        node.u = kl_ucb_upper(r_hat, level)
        node.l = kl_ucb_lower(r_hat, level)
        h = node.depth
        if h == self.H:
            node.U, node.L = node.u, node.l
            return
        B = self.cfg.branching
        counts = node.child_counts
        if len(counts) > B:
            raise ModelAssumptionError(
                f"{len(counts)} successors observed at {node.key}, branching is {B}")
        p_hat, vu, vl = [], [], []
        for s_next, c in counts.items():
            child = node.children[s_next]
            p_hat.append(c / n)
            vu.append(child.best_U)
            vl.append(child.best_L)
        if len(p_hat) < B:
            p_hat.append(0.0)
            vu.append(self.sig[self.H - h])
            vl.append(0.0)
        radius = self.thr.transition(n) / n
        if len(p_hat) == 1:  # B = 1: a point mass, nothing to optimise
            up, lo = vu[0], vl[0]
        else:
            up = ball_max_value(p_hat, vu, radius)
            lo = ball_min_value(p_hat, vl, radius)
        cap = self.sig[self.H - h + 1]
        node.U = min(node.u + self.gamma * up, cap)
        node.L = min(max(node.l + self.gamma * lo, 0.0), node.U)

    @staticmethod
    def _refresh_state(sn: StateNode, top: float) -> None:
        bu, bl, pol = -1.0, 0.0, 0
        for a, child in enumerate(sn.actions):
            cu = top if child is None else child.U
            if cu > bu:
                bu, pol = cu, a
            if child is not None and child.L > bl:
                bl = child.L
        sn.best_U, sn.best_L, sn.policy = bu, bl, pol

    def update_bounds(self, trajectory) -> list[PlanNode]:
        """Fold one episode ``[(s_h, a_h, r_h, s_{h+1}), ...]`` into the tree."""
        sn = self.root
        path_states: list[StateNode] = []
        path: list[PlanNode] = []
        H = self.H
        for h, (s, a, r, s_next) in enumerate(trajectory, start=1):
            path_states.append(sn)
            node = sn.actions[a]
            if node is None:
                node = PlanNode(sn.key + (a,), h, s, a, self.sig[H - h + 1], self.num_nodes)
                self.num_nodes += 1
                sn.actions[a] = node
                if self.diag is not None:
                    self.diag.node_keys.append(node.key)
            node.n += 1
            node.reward_sum += r
            node.child_counts[s_next] = node.child_counts.get(s_next, 0) + 1
            path.append(node)
            if h < H:
                child = node.children.get(s_next)
                if child is None:
                    child = StateNode(h + 1, s_next, node.key + (s_next,), self.K, self.sig[H - h])
                    node.children[s_next] = child
                sn = child
        for h in range(len(path), 0, -1):
            node = path[h - 1]
            self._refresh(node)
            self._refresh_state(path_states[h - 1], self.sig[H - h + 1])
        if self.diag is not None:
            self._log(path, path_states)
        return path

    def _log(self, path, path_states) -> None:
        d = self.diag
        t = self.episodes
        for node in path:
            d.ep.append(t)
            d.node.append(node.node_id)
            d.n.append(node.n)
            d.rsum.append(node.reward_sum)
            d.u.append(node.u)
            d.l.append(node.l)
            d.U.append(node.U)
            d.L.append(node.L)
            d.counts.append(tuple(node.child_counts.items()))
        d.policy_log.append([(sn.key, sn.policy) for sn in path_states[1:]])

    # -- acting --------------------------------------------------------
    def optimistic_action(self, sn: StateNode | None) -> int:
        """``argmax_a U_h(s_h, a)``; an unseen history plays action 0."""
        return 0 if sn is None else sn.policy

    def run_episode(self, model: ForwardModel, first_action: int) -> list[tuple[int, int, float, int]]:
        trajectory = []
        s = self.s1
        sn: StateNode | None = self.root
        a = first_action
        for h in range(1, self.H + 1):
            if h > 1:
                a = self.optimistic_action(sn)
            s_next, r = model.sample(s, a)
            trajectory.append((s, a, r, s_next))
            if sn is not None and h < self.H:
                node = sn.actions[a]
                sn = None if node is None else node.children.get(s_next)
            s = s_next
        self.oracle_calls += self.H
        return trajectory

    def step(self, model: ForwardModel, decision: RootDecision | None = None) -> list:
        decision = decision or self.decision()
        traj = self.run_episode(model, decision.selected)
        if self.diag is not None:
            self.diag.root_actions.append(decision.selected)
            self.diag.trajectories.append(tuple(traj))
        self.update_bounds(traj)
        self.episodes += 1
        return traj

    def run(self, model: ForwardModel) -> tuple[int, str]:
        """Loop until the stopping rule fires or the episode cap is reached."""
        cfg = self.cfg
        if self.K == 1:
            return 0, "single_action"
        while True:
            dec = self.decision()
            if dec.stop_stat <= cfg.eps:
                return dec.best, "confidence"
            if self.episodes >= cfg.max_episodes:
                return dec.best, "budget"
            self.step(model, dec)


def plan(cfg: GapEConfig, model: ForwardModel, s1: int = 0) -> RunRecord:
    planner = GapEPlanner(cfg, model.mdp.num_actions, s1)
    action, reason = planner.run(model)
    return RunRecord(
        algorithm="gape",
        recommended_action=action,
        tau=planner.episodes,
        oracle_calls=planner.oracle_calls,
        stop_reason=reason,
        seeds={"episode": model.seed},
        config=cfg.echo(),
        diagnostics=planner.diag,
    )
