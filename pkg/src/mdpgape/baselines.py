"""Baseline planners for fixed-budget comparisons.

Sparse Sampling follows its textbook recursion. KL-OLOP, BRUE and UCT are
reconstructions from their published descriptions:

* KL-OLOP plans over open-loop action sequences with kl-UCB reward bounds
  (``beta = log tau``) and the min-over-prefixes sharpening of the sequence
  values; it recommends the most played first action.
* BRUE alternates a switching depth ``d = H, H-1, ..., 1``: uniformly random
  actions up to ``d``, greedy actions below, and a Monte-Carlo update of the
  depth-``d`` estimate only. It recommends the best root estimate.
* UCT applies UCB1 at every history node, with an exploration term scaled by
  the value range ``sigma_{H-h+1}``, backs up discounted returns and
  recommends the most visited root action.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import Decimal, localcontext

import numpy as np

from .confidence import ThresholdSpec, kl_ucb_upper
from .errors import ConfigError
from .mdp import ForwardModel, sigma
from .planner import GapEConfig, plan
from .records import RunRecord


@dataclass(frozen=True)
class BudgetConfig:
    budget: int
    gamma: float
    exploration: float = 1.0  # UCT only
    seed: int = 0

    def __post_init__(self):
        if self.budget < 1:
            raise ConfigError("budget must be >= 1")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError("gamma must lie in (0, 1)")

    @property
    def split(self) -> tuple[int, int]:
        return budget_split(self.budget, self.gamma)


def budget_split(n: int, gamma: float) -> tuple[int, int]:
    """Episodes ``tau`` and horizon ``H`` for a budget of ``n`` oracle calls.

    ``tau`` is the largest integer with ``tau log(tau) / (2 log(1/gamma)) <= n``
    and ``H = ceil(log(tau) / (2 log(1/gamma)))``, at least 1.
    """
    if n < 1:
        raise ConfigError("budget must be >= 1")
    if not 0.0 < gamma < 1.0:
        raise ConfigError("gamma must lie in (0, 1)")
    scale = 2.0 * math.log(1.0 / gamma)

    def ok(t: int) -> bool:
        return t * math.log(t) / scale <= n

    lo, hi = 1, 2
    while ok(hi):
        lo, hi = hi, hi * 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            lo = mid
        else:
            hi = mid
    tau = lo
    horizon = max(1, math.ceil(math.log(tau) / scale - 1e-12))
    return tau, horizon


# ---------------------------------------------------------------------------
# Sparse Sampling


def sparse_sampling_calls(horizon: int, samples: int, num_actions: int) -> int:
    """Oracle calls made by one Sparse Sampling tree: ``sum_h (K C)^h``."""
    kc = num_actions * samples
    return sum(kc ** h for h in range(1, horizon + 1))


def sparse_sampling_plan(model: ForwardModel, horizon: int, samples: int, gamma: float,
                         s1: int = 0) -> tuple[int, np.ndarray, int]:
    """Recursive Sparse Sampling estimate of the root action values.

    Rewards are estimated from the same ``samples`` transitions as the
    successor states. Returns ``(recommended action, Q estimates, calls)``.
    """
    if samples < 1 or horizon < 1:
        raise ConfigError("samples and horizon must be >= 1")
    K = model.mdp.num_actions
    start = model.calls

    def q_hat(s: int, h: int) -> list[float]:
        out = []
        for a in range(K):
            total = 0.0
            for _ in range(samples):
                s_next, r = model.sample(s, a)
                total += r
                if h < horizon:
                    total += gamma * max(q_hat(s_next, h + 1))
            out.append(total / samples)
        return out

    q = np.array(q_hat(s1, 1))
    return int(np.argmax(q)), q, model.calls - start


def sparse_sampling_budget(horizon: int, branching: int, num_actions: int, eps: float) -> float:
    """``H^5 (B K)^H / eps^2``, the Sparse Sampling sample complexity scale.

    Evaluated in decimal arithmetic on the decimal form of ``eps`` so that,
    e.g., ``eps = 0.2`` gives exactly ``2.5e16`` at ``H = 10, B K = 10``.
    """
    if eps <= 0:
        raise ConfigError("eps must be positive")
    with localcontext() as ctx:
        ctx.prec = 50
        e = Decimal(repr(float(eps)))
        return float(Decimal(horizon) ** 5 * Decimal(branching * num_actions) ** horizon / (e * e))


# ---------------------------------------------------------------------------
# KL-OLOP


class _SeqNode:
    __slots__ = ("n", "rsum", "u", "tail", "children")

    def __init__(self, num_actions: int):
        self.n = 0
        self.rsum = 0.0
        self.u = 1.0
        self.tail = 0.0  # best discounted optimistic continuation below this node
        self.children: list[_SeqNode | None] = [None] * num_actions


def kl_olop_plan(model: ForwardModel, cfg: BudgetConfig, s1: int = 0) -> RunRecord:
    tau, H = cfg.split
    K = model.mdp.num_actions
    gamma = cfg.gamma
    beta = math.log(tau)
    sig = [sigma(m, gamma) for m in range(H + 2)]
    root = _SeqNode(K)
    # tail of a node at depth h (h actions fixed): best over continuations of
    # sum_{i>h} gamma^{i-h-1} u_i, capped by sigma_{H-h}; an untried child
    # contributes 1 + gamma * sigma_{H-h-1} = sigma_{H-h}
    root.tail = sig[H]
    start = model.calls

    def child_score(node: _SeqNode, a: int, h: int) -> float:
        c = node.children[a]
        if c is None:
            return sig[H - h]
        return c.u + gamma * c.tail

    for _ in range(tau):
        path = [root]
        node = root
        s = s1
        rewards = []
        actions = []
        for h in range(H):
            best_a, best_v = 0, -1.0
            for a in range(K):
                v = child_score(node, a, h)
                if v > best_v:
                    best_a, best_v = a, v
            s, r = model.sample(s, best_a)
            rewards.append(r)
            actions.append(best_a)
            if node.children[best_a] is None:
                node.children[best_a] = _SeqNode(K)
            node = node.children[best_a]
            path.append(node)
        for h in range(H, 0, -1):
            nd = path[h]
            nd.n += 1
            nd.rsum += rewards[h - 1]
            nd.u = kl_ucb_upper(nd.rsum / nd.n, beta / nd.n)
            if h == H:
                nd.tail = 0.0
            else:
                best = max(child_score(nd, a, h) for a in range(K))
                nd.tail = min(best, sig[H - h])
    visits = [0 if c is None else c.n for c in root.children]
    best = int(np.argmax(visits))
    return RunRecord("kl_olop", best, tau, model.calls - start, "budget",
                     seeds={"episode": model.seed}, config={"budget": cfg.budget, "gamma": gamma,
                                                            "tau": tau, "horizon": H})


# ---------------------------------------------------------------------------
# BRUE


def brue_plan(model: ForwardModel, cfg: BudgetConfig, s1: int = 0) -> RunRecord:
    tau, H = cfg.split
    K = model.mdp.num_actions
    gamma = cfg.gamma
    rng = np.random.default_rng(cfg.seed)
    # history key (s1, a1, ..., s_h) -> (per-action counts, per-action means)
    table: dict[tuple, tuple[list[int], list[float]]] = {}
    start = model.calls
    for t in range(tau):
        switch = H - (t % H)  # H, H-1, ..., 1, H, ...
        key = (s1,)
        s = s1
        traj = []
        for h in range(1, H + 1):
            if h <= switch:
                a = int(rng.integers(K))
            else:
                entry = table.get(key)
                if entry is None or 0 in entry[0]:
                    untried = [b for b in range(K) if entry is None or entry[0][b] == 0]
                    a = int(untried[rng.integers(len(untried))])
                else:
                    m = max(entry[1])
                    ties = [b for b in range(K) if entry[1][b] == m]
                    a = int(ties[rng.integers(len(ties))])
            s_next, r = model.sample(s, a)
            traj.append((key, a, r))
            key = key + (a, s_next)
            s = s_next
        ret = 0.0
        for h in range(H, switch - 1, -1):
            ret = traj[h - 1][2] + gamma * ret
        k, a, _ = traj[switch - 1]
        counts, means = table.setdefault(k, ([0] * K, [0.0] * K))
        counts[a] += 1
        means[a] += (ret - means[a]) / counts[a]
    counts, means = table.get((s1,), ([0] * K, [0.0] * K))
    scores = [means[a] if counts[a] > 0 else -math.inf for a in range(K)]
    best = int(np.argmax(scores)) if max(counts) > 0 else 0
    return RunRecord("brue", best, tau, model.calls - start, "budget",
                     seeds={"episode": model.seed, "policy": cfg.seed},
                     config={"budget": cfg.budget, "gamma": gamma, "tau": tau, "horizon": H})


# ---------------------------------------------------------------------------
# UCT


def uct_plan(model: ForwardModel, cfg: BudgetConfig, s1: int = 0) -> RunRecord:
    tau, H = cfg.split
    K = model.mdp.num_actions
    gamma = cfg.gamma
    c = cfg.exploration
    sig = [sigma(m, gamma) for m in range(H + 2)]
    table: dict[tuple, tuple[list[int], list[float]]] = {}
    start = model.calls
    for _ in range(tau):
        key = (s1,)
        s = s1
        traj = []
        for h in range(1, H + 1):
            counts, means = table.setdefault(key, ([0] * K, [0.0] * K))
            a = -1
            for b in range(K):
                if counts[b] == 0:
                    a = b
                    break
            if a < 0:
                log_n = math.log(sum(counts))
                scale = c * sig[H - h + 1]
                a = max(range(K), key=lambda b: means[b] + scale * math.sqrt(log_n / counts[b]))
            s_next, r = model.sample(s, a)
            traj.append((key, a, r))
            key = key + (a, s_next)
            s = s_next
        ret = 0.0
        for k, a, r in reversed(traj):
            ret = r + gamma * ret
            counts, means = table[k]
            counts[a] += 1
            means[a] += (ret - means[a]) / counts[a]
    counts, _ = table[(s1,)]
    best = int(np.argmax(counts))
    return RunRecord("uct", best, tau, model.calls - start, "budget",
                     seeds={"episode": model.seed},
                     config={"budget": cfg.budget, "gamma": gamma, "tau": tau,
                             "horizon": H, "exploration": c})


# ---------------------------------------------------------------------------
# MDP-GapE under a call budget


def gape_budget_plan(model: ForwardModel, cfg: BudgetConfig, s1: int = 0,
                     delta: float = 0.1) -> RunRecord:
    """MDP-GapE with ``beta = log tau`` thresholds, ``eps = 0`` and a hard cap of
    ``tau`` episodes; recommends the final best candidate."""
    tau, H = cfg.split
    K = model.mdp.num_actions
    B = int(model.mdp.branching)
    thr = ThresholdSpec("fixed_budget", delta, H, B, K, budget_episodes=tau)
    gcfg = GapEConfig(eps=0.0, delta=delta, gamma=cfg.gamma, horizon=H, thresholds=thr,
                      branching=B, max_episodes=tau)
    rec = plan(gcfg, model, s1)
    rec.algorithm = "gape"
    rec.config = {"budget": cfg.budget, "gamma": cfg.gamma, "tau": tau, "horizon": H}
    rec.diagnostics = None
    return rec


BUDGET_PLANNERS = {
    "gape": gape_budget_plan,
    "kl_olop": kl_olop_plan,
    "brue": brue_plan,
    "uct": uct_plan,
}
