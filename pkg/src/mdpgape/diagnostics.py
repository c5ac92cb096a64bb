"""Replay of a recorded MDP-GapE run against the true MDP.

These checks need the opt-in logs kept by the planner when
``GapEConfig.diagnostics`` is set. They verify the three concentration
events behind the correctness guarantee (rewards inside their kl interval,
transitions inside their KL ball, counts not far below pseudo-counts), the
inclusion ``L <= Q <= U`` at every refreshed node, and the pseudo-count vs
gap inequality that drives the sample-complexity bound.

Pseudo-counts are kept per tree node, i.e. per history prefix, because that
is where the planner's counts and confidence sets live. Aggregates per
``(h, s, a)`` are available through :func:`aggregate_by_depth_state_action`.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

from .confidence import ThresholdSpec
from .errors import PreconditionError
from .mdp import ExactValues, TabularMdp
from .planner import RunDiagnostics

THEOREM_CONSTANT = 64.0 * math.sqrt(2.0) * (1.0 + math.sqrt(2.0))
_TOL = 1e-9


@dataclass
class PseudoCounts:
    """Final pseudo-counts and counts per node key, plus the count-event verdict."""

    nbar: dict[tuple, float]
    counts: dict[tuple, int]
    episodes: int
    count_violations: list[tuple[int, tuple, int, float]] = field(default_factory=list)

    @property
    def count_event_ok(self) -> bool:
        return not self.count_violations

    def depth_totals(self, horizon: int) -> list[float]:
        """Sum of pseudo-counts at each depth (equals the episode count)."""
        tot = [0.0] * horizon
        for key, v in self.nbar.items():
            tot[len(key) // 2 - 1] += v
        return tot


@dataclass
class EventReport:
    reward_ok: bool
    transition_ok: bool
    count_ok: bool
    reward_violations: int
    transition_violations: int
    count_violations: int
    checked_rows: int
    first_violation: str | None = None

    @property
    def holds(self) -> bool:
        return self.reward_ok and self.transition_ok and self.count_ok


def _require(diag: RunDiagnostics | None) -> RunDiagnostics:
    if diag is None:
        raise PreconditionError("run has no diagnostics; plan with diagnostics=True")
    return diag


def _node_sa(key: tuple) -> tuple[int, int, int]:
    """``(depth, state, action)`` of an action-node key."""
    return len(key) // 2, key[-2], key[-1]


class _HistoryTrie:
    """Integer ids for histories reached with positive probability."""

    def __init__(self, mdp: TabularMdp, s1: int):
        self.mdp = mdp
        self.state_of = [s1]          # state-history id -> current state
        self.state_key = [(s1,)]
        self.state_id = {(s1,): 0}
        self.act = [{}]               # state-history id -> {action: action-history id}
        self.action_key: list[tuple] = []
        self.action_state: list[int] = []
        self.succ: list[list[tuple[int, float]] | None] = []

    def action_node(self, sid: int, a: int) -> int:
        aid = self.act[sid].get(a)
        if aid is None:
            aid = len(self.action_key)
            self.act[sid][a] = aid
            self.action_key.append(self.state_key[sid] + (a,))
            self.action_state.append(self.state_of[sid])
            self.succ.append(None)
        return aid

    def successors(self, aid: int) -> list[tuple[int, float]]:
        out = self.succ[aid]
        if out is None:
            key = self.action_key[aid]
            succ, prob = self.mdp.support(self.action_state[aid], key[-1])
            out = [(self.state_node(key + (int(x),)), float(p))
                   for x, p in zip(succ, prob) if p > 0]
            self.succ[aid] = out
        return out

    def state_node(self, key: tuple) -> int:
        sid = self.state_id.get(key)
        if sid is None:
            sid = len(self.state_key)
            self.state_id[key] = sid
            self.state_key.append(key)
            self.state_of.append(key[-1])
            self.act.append({})
        return sid


def track_pseudo_counts(diag: RunDiagnostics | None, mdp: TabularMdp) -> PseudoCounts:
    """Accumulate the reach probabilities of every history under each played policy.

    The policy of episode ``t`` is rebuilt from the root action log and the
    policy changes recorded after each update; histories outside the tree
    play action 0, as the planner does. Along the way the count event
    ``n >= nbar / 2 - beta_cnt`` is checked after every episode.
    """
    diag = _require(diag)
    H = diag.cfg.horizon
    beta_cnt = diag.cfg.thresholds.count()
    trie = _HistoryTrie(mdp, diag.s1)
    nbar: list[float] = []
    counts: list[int] = []
    policy: dict[int, int] = {}
    violations = []
    act, succ = trie.act, trie.succ
    for t, a1 in enumerate(diag.root_actions):
        touched = []
        frontier = [(0, 1.0)]
        for h in range(1, H + 1):
            nxt = []
            last = h == H
            for sid, pr in frontier:
                a = a1 if h == 1 else policy.get(sid, 0)
                aid = act[sid].get(a)
                if aid is None:
                    aid = trie.action_node(sid, a)
                    nbar.append(0.0)
                    counts.append(0)
                nbar[aid] += pr
                touched.append(aid)
                if not last:
                    children = succ[aid] or trie.successors(aid)
                    for sid2, p in children:
                        nxt.append((sid2, pr * p))
            frontier = nxt
        sid = 0
        for h, (_s, a, _r, s_next) in enumerate(diag.trajectories[t], start=1):
            aid = act[sid].get(a)
            if aid is None:
                aid = trie.action_node(sid, a)
                nbar.append(0.0)
                counts.append(0)
            counts[aid] += 1
            if h < H:
                sid = trie.state_node(trie.action_key[aid] + (s_next,))
        for aid in touched:
            if counts[aid] < nbar[aid] / 2.0 - beta_cnt:
                violations.append((t + 1, trie.action_key[aid], counts[aid], nbar[aid]))
        for state_key, action in diag.policy_log[t]:
            policy[trie.state_node(state_key)] = action
    keys = trie.action_key
    return PseudoCounts({keys[i]: nbar[i] for i in range(len(nbar))},
                        {keys[i]: counts[i] for i in range(len(nbar)) if counts[i]},
                        len(diag.root_actions), violations)


def check_event_E(diag: RunDiagnostics | None, mdp: TabularMdp,
                  pseudo: PseudoCounts | None = None) -> EventReport:
    """Did the reward, transition and count concentration events all hold?

    Bounds only change when a node is refreshed, so checking each refreshed
    node at that moment covers every (t, h, s, a); nodes never visited sit
    at the trivial bounds and are inside by convention.
    """
    diag = _require(diag)
    thr: ThresholdSpec = diag.cfg.thresholds
    r_bad = p_bad = 0
    first = None
    keys = diag.node_keys
    for i in range(len(diag.ep)):
        key = keys[diag.node[i]]
        _h, s, a = _node_sa(key)
        r = float(mdp.reward_means[s, a])
        if not (diag.l[i] - _TOL <= r <= diag.u[i] + _TOL):
            r_bad += 1
            first = first or f"reward outside [{diag.l[i]:.4g}, {diag.u[i]:.4g}] at {key}, episode {diag.ep[i] + 1}"
        n = diag.n[i]
        kl = 0.0
        for s_next, c in diag.counts[i]:
            ph = c / n
            p = mdp.transition_prob(s, a, s_next)
            kl += ph * math.log(ph / p) if p > 0 else math.inf
        if n * kl > thr.transition(n) + _TOL:
            p_bad += 1
            first = first or f"transition outside KL ball at {key}, episode {diag.ep[i] + 1}"
    if pseudo is None:
        pseudo = track_pseudo_counts(diag, mdp)
    c_bad = len(pseudo.count_violations)
    if c_bad and first is None:
        t, key, n, nb = pseudo.count_violations[0]
        first = f"count {n} < nbar/2 - beta_cnt with nbar={nb:.4g} at {key}, episode {t}"
    return EventReport(r_bad == 0, p_bad == 0, c_bad == 0, r_bad, p_bad, c_bad,
                       len(diag.ep), first)


def check_value_inclusion(diag: RunDiagnostics | None, values: ExactValues) -> list[tuple]:
    """Rows where ``L_h <= Q_h <= U_h`` fails; empty means the inclusion held."""
    diag = _require(diag)
    bad = []
    keys = diag.node_keys
    for i in range(len(diag.ep)):
        key = keys[diag.node[i]]
        h, s, a = _node_sa(key)
        q = values.q[h - 1, s, a]
        if not (diag.L[i] - _TOL <= q <= diag.U[i] + _TOL):
            bad.append((diag.ep[i] + 1, key, diag.L[i], q, diag.U[i]))
    return bad


def aggregate_by_depth_state_action(per_node: dict[tuple, float]) -> dict[tuple[int, int, int], float]:
    out: dict[tuple[int, int, int], float] = defaultdict(float)
    for key, v in per_node.items():
        out[_node_sa(key)] += v
    return dict(out)


def gap_of(values: ExactValues, s1: int, eps: float, h: int, s: int, a: int) -> float:
    """Gap used by the pseudo-count bound; at the root it is floored by the
    smallest root gap and by ``eps``."""
    if h == 1:
        return max(float(values.gaps[0, s, a]), values.min_root_gap(s1), eps)
    return float(values.gaps[h - 1, s, a])


def theorem_bound_check(pseudo: PseudoCounts, values: ExactValues, diag: RunDiagnostics,
                        aggregate: bool = False) -> list[tuple]:
    """Visited entries with positive gap where
    ``nbar * gap > C (sqrt(BK))^(H-h) sqrt(nbar * beta(nbar))``.

    ``beta`` is the master threshold with the theoretical calibration, as in
    the bound itself. Returns the offending entries (empty when it holds).
    """
    cfg = diag.cfg
    H, B, K = cfg.horizon, cfg.branching, diag.num_actions
    thr = ThresholdSpec("theoretical", cfg.delta, H, B, K)
    if aggregate:
        nbar = aggregate_by_depth_state_action(pseudo.nbar)
        visited = {_node_sa(k) for k, c in pseudo.counts.items() if c > 0}
        items = [((h, s, a), nbar[(h, s, a)], h, s, a) for (h, s, a) in visited]
    else:
        items = [(k, pseudo.nbar.get(k, 0.0), *_node_sa(k))
                 for k, c in pseudo.counts.items() if c > 0]
    bad = []
    for key, nb, h, s, a in items:
        gap = gap_of(values, diag.s1, cfg.eps, h, s, a)
        if gap <= 0:
            continue
        rhs = THEOREM_CONSTANT * math.sqrt(B * K) ** (H - h) * math.sqrt(nb * thr.master(nb))
        if nb * gap > rhs:
            bad.append((key, nb, gap, rhs))
    return bad
