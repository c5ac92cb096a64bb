"""Tabular MDPs: random generation, forward-model sampling and exact values.

A :class:`TabularMdp` is stationary (the same kernel is used at every depth)
and stores each transition row on at most ``branching`` successor slots.
Rows shorter than ``branching`` are padded with successor ``-1`` and
probability ``0``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ConfigError, DomainError

FORMAT_TAG = "mdpgape/tabular-mdp/1"


@dataclass(frozen=True)
class GeneratorConfig:
    num_states: int
    num_actions: int
    branching: int
    reward_sparsity: float = 0.5
    seed: int = 0
    # "state_action" attaches a reward mean to a fraction of (s, a) pairs,
    # "transition" to a fraction of (s, a, s') triples.
    sparsity_granularity: str = "state_action"

    def validate(self) -> None:
        if self.num_states < 1 or self.num_actions < 1:
            raise ConfigError("num_states and num_actions must be >= 1")
        if not 1 <= self.branching <= self.num_states:
            raise ConfigError(
                f"branching must lie in [1, num_states], got {self.branching}")
        if not 0.0 <= self.reward_sparsity <= 1.0:
            raise ConfigError(
                f"reward_sparsity must lie in [0, 1], got {self.reward_sparsity}")
        if self.sparsity_granularity not in ("state_action", "transition"):
            raise ConfigError(
                f"unknown sparsity granularity {self.sparsity_granularity!r}")


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """Finite stationary MDP with at most ``branching`` successors per (s, a).

    Attributes:
        successors: int array ``(S, K, B)``; ``-1`` marks an unused slot.
        trans_probs: float array ``(S, K, B)``; rows sum to one.
        reward_means: float array ``(S, K)`` with entries in ``[0, 1]``.
        transition_rewards: optional ``(S, K, B)`` per-successor reward means.
            When set, a reward is drawn given the sampled successor and
            ``reward_means`` holds its expectation.
    """

    successors: np.ndarray
    trans_probs: np.ndarray
    reward_means: np.ndarray
    transition_rewards: np.ndarray | None = None
    generator: dict[str, Any] | None = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("successors", "trans_probs", "reward_means", "transition_rewards"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.array(arr, dtype=np.int64 if name == "successors" else np.float64)
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)
        self.validate()

    @property
    def num_states(self) -> int:
        return self.successors.shape[0]

    @property
    def num_actions(self) -> int:
        return self.successors.shape[1]

    @property
    def branching(self) -> int:
        return self.successors.shape[2]

    def validate(self) -> None:
        S, K, B = self.successors.shape
        if self.trans_probs.shape != (S, K, B) or self.reward_means.shape != (S, K):
            raise DomainError("inconsistent array shapes")
        used = self.successors >= 0
        if np.any(self.successors >= S):
            raise DomainError("successor index out of range")
        if np.any(self.trans_probs[~used] != 0.0) or np.any(self.trans_probs < 0):
            raise DomainError("invalid transition probabilities")
        if np.any(np.abs(self.trans_probs.sum(axis=-1) - 1.0) > 1e-12):
            raise DomainError("transition rows must sum to 1")
        for s in range(S):
            for a in range(K):
                row = self.successors[s, a][used[s, a]]
                if len(set(row.tolist())) != len(row):
                    raise DomainError(f"duplicate successors at ({s}, {a})")
        if np.any(self.reward_means < 0) or np.any(self.reward_means > 1):
            raise DomainError("reward means must lie in [0, 1]")
        if self.transition_rewards is not None:
            tr = self.transition_rewards
            if tr.shape != (S, K, B) or np.any(tr < 0) or np.any(tr > 1):
                raise DomainError("invalid transition rewards")

    def support(self, s: int, a: int) -> tuple[np.ndarray, np.ndarray]:
        """Successor states and probabilities of ``(s, a)`` without padding."""
        used = self.successors[s, a] >= 0
        return self.successors[s, a][used], self.trans_probs[s, a][used]

    def transition_prob(self, s: int, a: int, s_next: int) -> float:
        hit = np.flatnonzero(self.successors[s, a] == s_next)
        return float(self.trans_probs[s, a, hit[0]]) if hit.size else 0.0

    # -- serialization ---------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        out = {
            "format": FORMAT_TAG,
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "branching": self.branching,
            "successors": self.successors.tolist(),
            "trans_probs": self.trans_probs.tolist(),
            "reward_means": self.reward_means.tolist(),
            "transition_rewards": (None if self.transition_rewards is None
                                   else self.transition_rewards.tolist()),
            "generator": self.generator,
        }
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TabularMdp":
        if data.get("format") != FORMAT_TAG:
            raise ConfigError(f"unsupported MDP format {data.get('format')!r}")
        tr = data.get("transition_rewards")
        return cls(
            successors=np.asarray(data["successors"], dtype=np.int64),
            trans_probs=np.asarray(data["trans_probs"], dtype=np.float64),
            reward_means=np.asarray(data["reward_means"], dtype=np.float64),
            transition_rewards=None if tr is None else np.asarray(tr, dtype=np.float64),
            generator=data.get("generator"),
        )

    def save(self, path: str | Path) -> None:
        # json writes floats with repr(), which round-trips exactly
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "TabularMdp":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TabularMdp):
            return NotImplemented
        same_tr = (self.transition_rewards is None and other.transition_rewards is None) or (
            self.transition_rewards is not None and other.transition_rewards is not None
            and np.array_equal(self.transition_rewards, other.transition_rewards))
        return (np.array_equal(self.successors, other.successors)
                and np.array_equal(self.trans_probs, other.trans_probs)
                and np.array_equal(self.reward_means, other.reward_means)
                and same_tr)

    __hash__ = None


def generate_random_mdp(cfg: GeneratorConfig) -> TabularMdp:
    """Random MDP with ``branching`` successors drawn without replacement.

    Each row's probabilities are the gaps between sorted uniforms on (0, 1),
    padded with the endpoints 0 and 1. A ``reward_sparsity`` fraction of the
    (s, a) pairs (or of the transitions, see ``sparsity_granularity``) gets a
    mean reward drawn uniformly in (0, 1); the others get 0.
    """
    cfg.validate()
    S, K, B = cfg.num_states, cfg.num_actions, cfg.branching
    rng = np.random.default_rng(cfg.seed)
    successors = np.empty((S, K, B), dtype=np.int64)
    probs = np.empty((S, K, B))
    for s in range(S):
        for a in range(K):
            successors[s, a] = rng.choice(S, size=B, replace=False)
            cuts = np.sort(rng.uniform(0.0, 1.0, size=B - 1))
            probs[s, a] = np.diff(np.concatenate(([0.0], cuts, [1.0])))
    # np.diff of a partition of [0, 1] can be off by an ulp; absorb into the largest slot
    err = 1.0 - probs.sum(axis=-1)
    idx = probs.argmax(axis=-1)
    np.put_along_axis(probs, idx[..., None],
                      np.take_along_axis(probs, idx[..., None], -1) + err[..., None], -1)

    transition_rewards = None
    if cfg.sparsity_granularity == "state_action":
        rewards = np.zeros(S * K)
        n_rewarded = int(round(cfg.reward_sparsity * S * K))
        picked = rng.choice(S * K, size=n_rewarded, replace=False)
        rewards[picked] = rng.uniform(0.0, 1.0, size=n_rewarded)
        rewards = rewards.reshape(S, K)
    else:
        tr = np.zeros(S * K * B)
        n_rewarded = int(round(cfg.reward_sparsity * S * K * B))
        picked = rng.choice(S * K * B, size=n_rewarded, replace=False)
        tr[picked] = rng.uniform(0.0, 1.0, size=n_rewarded)
        transition_rewards = tr.reshape(S, K, B)
        rewards = np.clip((probs * transition_rewards).sum(axis=-1), 0.0, 1.0)

    return TabularMdp(successors, probs, rewards, transition_rewards, generator=asdict(cfg))


class ForwardModel:
    """Generative model over a :class:`TabularMdp` with a private RNG.

    Each call to :meth:`sample` is one oracle call and consumes two uniforms
    from a buffered stream, so the (next state, reward) sequence depends only
    on the seed and the queries.
    """

    _BLOCK = 8192

    def __init__(self, mdp: TabularMdp, seed: int | None = 0):
        self.mdp = mdp
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.calls = 0
        self._buf: list[float] = []
        self._pos = 0
        S, K = mdp.num_states, mdp.num_actions
        # plain-Python tables: hot path avoids numpy scalar overhead
        self._cum = [[np.cumsum(mdp.trans_probs[s, a]).tolist() for a in range(K)]
                     for s in range(S)]
        self._succ = mdp.successors.tolist()
        self._rew = mdp.reward_means.tolist()
        self._trew = None if mdp.transition_rewards is None else mdp.transition_rewards.tolist()

    def _uniforms(self) -> tuple[float, float]:
        if self._pos + 2 > len(self._buf):
            self._buf = self.rng.random(self._BLOCK).tolist()
            self._pos = 0
        i = self._pos
        self._pos = i + 2
        return self._buf[i], self._buf[i + 1]

    def sample(self, s: int, a: int) -> tuple[int, float]:
        """Draw ``(next_state, reward)`` for one transition from ``(s, a)``."""
        if not (0 <= s < len(self._succ) and 0 <= a < len(self._succ[0])):
            raise DomainError(f"state/action out of range: ({s}, {a})")
        u_next, u_rew = self._uniforms()
        cum = self._cum[s][a]
        j = 0
        last = len(cum) - 1
        while j < last and (u_next >= cum[j] or self._succ[s][a][j] < 0):
            j += 1
        while self._succ[s][a][j] < 0:  # tail padding after rounding
            j -= 1
        mean = self._rew[s][a] if self._trew is None else self._trew[s][a][j]
        self.calls += 1
        return self._succ[s][a][j], (1.0 if u_rew < mean else 0.0)

    def sample_batch(self, s: int, a: int, size: int) -> tuple[np.ndarray, np.ndarray]:
        """``size`` consecutive oracle calls from ``(s, a)``."""
        if size < 0:
            raise DomainError("size must be nonnegative")
        out_s = np.empty(size, dtype=np.int64)
        out_r = np.empty(size)
        for i in range(size):
            out_s[i], out_r[i] = self.sample(s, a)
        return out_s, out_r


def sample_step(model: ForwardModel, s: int, a: int) -> tuple[int, float]:
    return model.sample(s, a)


@dataclass(frozen=True, eq=False)
class ExactValues:
    """Optimal values by depth; index 0 is depth h=1.

    ``q`` has shape ``(H, S, K)``, ``v`` and ``gaps`` follow. ``v`` is
    ``q.max(-1)`` and ``gaps = v[..., None] - q``.
    """

    q: np.ndarray
    v: np.ndarray
    gaps: np.ndarray
    discount: float

    @property
    def horizon(self) -> int:
        return self.q.shape[0]

    def min_root_gap(self, s1: int) -> float:
        """Smallest gap among suboptimal root actions (0 if the max is tied)."""
        g = np.sort(self.gaps[0, s1])
        return float(g[1]) if g.size > 1 else 0.0

    def optimal_action(self, s1: int) -> int:
        return int(np.argmax(self.q[0, s1]))


def sigma(m: int, gamma: float) -> float:
    """Largest discounted return over ``m`` steps, ``sum_{i<m} gamma**i``."""
    if m <= 0:
        return 0.0
    if gamma == 1.0:
        return float(m)
    return (1.0 - gamma ** m) / (1.0 - gamma)


def exact_value_iteration(mdp: TabularMdp, horizon: int, discount: float) -> ExactValues:
    """Backward induction over ``horizon`` steps with terminal value 0."""
    if horizon < 1:
        raise ConfigError("horizon must be >= 1")
    if not 0.0 < discount <= 1.0:
        raise ConfigError("discount must lie in (0, 1]")
    S, K = mdp.num_states, mdp.num_actions
    succ = np.where(mdp.successors >= 0, mdp.successors, 0)
    p = mdp.trans_probs
    q = np.zeros((horizon, S, K))
    v_next = np.zeros(S)
    for h in range(horizon - 1, -1, -1):
        q[h] = mdp.reward_means + discount * (p * v_next[succ]).sum(axis=-1)
        v_next = q[h].max(axis=-1)
    v = q.max(axis=-1)
    gaps = v[..., None] - q
    return ExactValues(q=q, v=v, gaps=gaps, discount=discount)


def simple_regret(values: ExactValues, a_hat: int, s1: int = 0) -> float:
    return float(values.v[0, s1] - values.q[0, s1, a_hat])


def planning_horizon(eps: float, gamma: float) -> int:
    """Horizon ``ceil(log_gamma(eps (1 - gamma) / 2))`` for discounted planning."""
    if eps <= 0:
        raise ConfigError("eps must be positive")
    if gamma == 1.0:
        raise ConfigError("gamma = 1 is the undiscounted episodic setting; pass H explicitly")
    if not 0.0 < gamma < 1.0:
        raise ConfigError("gamma must lie in (0, 1)")
    h = math.log(eps * (1.0 - gamma) / 2.0) / math.log(gamma)
    # guard against ceil(5.999999999) style rounding noise
    return max(1, math.ceil(h - 1e-12))
