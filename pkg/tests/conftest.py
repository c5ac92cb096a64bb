import itertools
import math

import numpy as np
import pytest

from mdpgape.mdp import GeneratorConfig, TabularMdp, generate_random_mdp


def hand_mdp() -> TabularMdp:
    """3 states, 2 actions, B=2, hand-written kernel and rewards."""
    successors = np.array([
        [[1, 2], [0, -1]],
        [[2, 0], [1, 2]],
        [[0, -1], [1, 0]],
    ])
    probs = np.array([
        [[0.25, 0.75], [1.0, 0.0]],
        [[0.5, 0.5], [0.1, 0.9]],
        [[1.0, 0.0], [0.6, 0.4]],
    ])
    rewards = np.array([[0.2, 0.5], [0.9, 0.0], [0.3, 0.7]])
    return TabularMdp(successors, probs, rewards)


def brute_force_q(mdp: TabularMdp, horizon: int, gamma: float) -> np.ndarray:
    """Optimal Q by enumerating every deterministic non-stationary policy table.

    Each policy fixes one action per (depth, state); Q*_h(s, a) is the best
    expected return of playing ``a`` then following any policy.
    """
    S, K = mdp.num_states, mdp.num_actions
    P = np.zeros((S, K, S))
    for s in range(S):
        for a in range(K):
            succ, prob = mdp.support(s, a)
            for x, p in zip(succ, prob):
                P[s, a, x] += p
    r = mdp.reward_means
    q = np.full((horizon, S, K), -np.inf)
    for table in itertools.product(range(K), repeat=horizon * S):
        pol = np.array(table).reshape(horizon, S)
        # value of following pol from depth h on
        v = np.zeros(S)
        vals = [None] * (horizon + 1)
        vals[horizon] = v
        for h in range(horizon - 1, -1, -1):
            a = pol[h]
            vals[h] = r[np.arange(S), a] + gamma * P[np.arange(S), a] @ vals[h + 1]
        for h in range(horizon):
            qh = r + gamma * P @ vals[h + 1]
            q[h] = np.maximum(q[h], qh)
    return q


@pytest.fixture
def small_mdp():
    return generate_random_mdp(GeneratorConfig(5, 2, 2, 0.5, seed=3))


def sigma_ref(m: int, gamma: float) -> float:
    return sum(gamma ** i for i in range(m))


def close(a, b, tol=1e-12):
    return math.isclose(a, b, rel_tol=0.0, abs_tol=tol)


# -- acceptance report ---------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, title: str, ok: bool, detail: str) -> None:
    """Print and keep one PASS/FAIL line; the terminal summary repeats them."""
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2} {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
