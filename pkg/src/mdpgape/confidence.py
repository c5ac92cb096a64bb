"""KL confidence bounds and the exploration thresholds that size them.

Scalar routines are written against :mod:`math` rather than numpy since the
planner calls them a few times per transition.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, NumericError

KL_TOL = 1e-9
BALL_TOL = 1e-8
MAX_ITER = 100
# bracket width at which inversion stops; well inside KL_TOL
_BRACKET_TOL = 1e-11


# ---------------------------------------------------------------------------
# Bernoulli kl and its inversions


def kl_bernoulli(u: float, v: float) -> float:
    """Binary relative entropy ``kl(Ber(u), Ber(v))`` with 0 log 0 = 0."""
    if not (0.0 <= u <= 1.0 and 0.0 <= v <= 1.0):
        raise DomainError(f"kl arguments must lie in [0, 1], got ({u}, {v})")
    return _kl(u, v)


def _kl(u: float, v: float) -> float:
    out = 0.0
    if u > 0.0:
        if v <= 0.0:
            return math.inf
        out += u * math.log(u / v)
    if u < 1.0:
        if v >= 1.0:
            return math.inf
        out += (1.0 - u) * math.log((1.0 - u) / (1.0 - v))
    return max(out, 0.0)


def kl_ucb_upper(p_hat: float, level: float) -> float:
    """Largest ``v`` in ``[p_hat, 1]`` with ``kl(p_hat, v) <= level``."""
    if level <= 0.0 or p_hat >= 1.0:
        return min(max(p_hat, 0.0), 1.0)
    if p_hat <= 0.0:
        return -math.expm1(-level)
    # Pinsker: v - p_hat <= sqrt(level / 2)
    return _invert(p_hat, level, p_hat, min(1.0, p_hat + math.sqrt(0.5 * level)), upper=True)


def kl_ucb_lower(p_hat: float, level: float) -> float:
    """Smallest ``v`` in ``[0, p_hat]`` with ``kl(p_hat, v) <= level``."""
    if level <= 0.0 or p_hat <= 0.0:
        return min(max(p_hat, 0.0), 1.0)
    if p_hat >= 1.0:
        return math.exp(-level)
    return _invert(p_hat, level, max(0.0, p_hat - math.sqrt(0.5 * level)), p_hat, upper=False)


def _invert(p: float, c: float, lo: float, hi: float, upper: bool) -> float:
    # Root of g(v) = kl(p, v) - c on (lo, hi), with 0 < p < 1. g is convex
    # and monotone on each side of p, so Newton started on the infeasible
    # side moves monotonically towards the root; the bracket guards the
    # case where that side is the singular endpoint v in {0, 1}.
    if hi - lo <= _BRACKET_TOL:
        return hi if upper else lo
    q = 1.0 - p
    # kl(p, v) = p log p + q log q - p log v - q log(1 - v)
    target = c - p * math.log(p) - q * math.log(q)
    v = hi if upper else lo
    if not 0.0 < v < 1.0:
        v = 0.5 * (lo + hi)
    log = math.log
    for _ in range(MAX_ITER):
        g = -p * log(v) - q * log(1.0 - v) - target
        if (g > 0.0) == upper:
            hi = v
        else:
            lo = v
        dg = (v - p) / (v * (1.0 - v))
        step = g / dg if dg != 0.0 else 0.0
        if g == 0.0 or abs(step) <= 1e-13 or hi - lo <= _BRACKET_TOL:
            break
        nv = v - step
        v = nv if lo < nv < hi else 0.5 * (lo + hi)
    else:
        raise NumericError("kl inversion did not converge", hi - lo)
    if hi - lo <= _BRACKET_TOL and abs(step) > 1e-13:
        # bracket collapsed first: report its conservative end
        return hi if upper else lo
    return v


# ---------------------------------------------------------------------------
# Categorical KL and linear optimisation over KL balls


def kl_categorical(p: Sequence[float], q: Sequence[float]) -> float:
    """``sum_{i in supp(p)} p_i log(p_i / q_i)``; infinite if supp(p) is not in supp(q)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise DomainError(f"dimension mismatch {p.shape} vs {q.shape}")
    mask = p > 0
    if np.any(q[mask] <= 0):
        return math.inf
    return float(max(np.sum(p[mask] * np.log(p[mask] / q[mask])), 0.0))


@dataclass(frozen=True)
class KlBallProblem:
    """Maximise or minimise ``<q, values>`` over ``{q : KL(p_hat, q) <= radius}``.

    ``radius = inf`` means the whole simplex.
    """

    p_hat: tuple[float, ...]
    radius: float
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.p_hat) != len(self.values) or len(self.p_hat) < 1:
            raise DomainError("p_hat and values must have the same positive length")
        if self.radius < 0:
            raise DomainError("radius must be nonnegative")
        if abs(math.fsum(self.p_hat) - 1.0) > 1e-9 or min(self.p_hat) < 0:
            raise DomainError("p_hat must be a probability vector")


def max_over_kl_ball(problem: KlBallProblem) -> tuple[float, np.ndarray]:
    """Return ``(max <q, v>, argmax q)`` over the KL ball around ``p_hat``."""
    p, v = _floats(problem.p_hat), _floats(problem.values)
    q = _ball_argmax(p, v, float(problem.radius))
    return math.fsum(qi * vi for qi, vi in zip(q, v)), np.asarray(q)


def min_over_kl_ball(problem: KlBallProblem) -> tuple[float, np.ndarray]:
    p, v = _floats(problem.p_hat), _floats(problem.values)
    q = _ball_argmax(p, [-x for x in v], float(problem.radius))
    return math.fsum(qi * vi for qi, vi in zip(q, v)), np.asarray(q)


def _floats(xs) -> list[float]:
    return [float(x) for x in xs]


def ball_max_value(p_hat: list[float], values: list[float], radius: float) -> float:
    """Optimal value only; the planner's entry point."""
    if len(p_hat) == 2:
        return _ball_max2(p_hat[0], values[0], values[1], radius)
    q = _ball_argmax(p_hat, values, radius)
    return math.fsum(qi * vi for qi, vi in zip(q, values))


def ball_min_value(p_hat: list[float], values: list[float], radius: float) -> float:
    if len(p_hat) == 2:
        return -_ball_max2(p_hat[0], -values[0], -values[1], radius)
    q = _ball_argmax(p_hat, [-v for v in values], radius)
    return math.fsum(qi * vi for qi, vi in zip(q, values))


def _ball_max2(p0: float, v0: float, v1: float, radius: float) -> float:
    # two slots: KL(p, q) = kl(p0, q0), so the optimum moves q0 along a kl-UCB
    if v0 == v1:
        return v0
    if v0 > v1:
        q0 = kl_ucb_upper(p0, radius) if radius != math.inf else 1.0
    else:
        q0 = kl_ucb_lower(p0, radius) if radius != math.inf else 0.0
    return q0 * v0 + (1.0 - q0) * v1


def _ball_argmax(p: list[float], v: list[float], radius: float) -> list[float]:
    """KKT solution of the linear program over a KL ball.

    On the support of ``p`` the maximiser is ``q_i ∝ p_i / (nu - v_i)``; the
    multiplier ``nu`` solves ``f(nu) = radius`` with
    ``f(nu) = sum p_i log(nu - v_i) + log sum p_i / (nu - v_i)``. If the best
    value sits on a slot outside the support and ``f(v_max) < radius``, the
    leftover mass ``1 - exp(f(v_max) - radius)`` goes to that slot.
    """
    m = len(p)
    v_max = max(v)
    if radius == math.inf:
        best = v.index(v_max)
        return [1.0 if i == best else 0.0 for i in range(m)]
    if radius <= 0.0:
        return list(p)
    # the maximiser is invariant under v -> (v - min v) / span
    v_min = min(v)
    span = v_max - v_min
    if span <= 1e-300:
        return list(p)
    v = [(x - v_min) / span for x in v]
    v_max = 1.0
    supp = [i for i in range(m) if p[i] > 0.0]
    v_supp_max = max(v[i] for i in supp)
    if all(v[i] == v_supp_max for i in supp) and v_supp_max >= v_max:
        return list(p)
    out_best = [i for i in range(m) if p[i] == 0.0 and v[i] == v_max]

    ps = [p[i] for i in supp]
    if out_best and v_max > v_supp_max:
        # f at nu = v_max, i.e. offset v_max - v_top above the support's best
        f_edge, _ = _kl_at_offset(ps, [v_supp_max - v[i] for i in supp], v_max - v_supp_max)
        if f_edge < radius:
            extra = -math.expm1(f_edge - radius)
            w = [p[i] / (v_max - v[i]) if p[i] > 0.0 else 0.0 for i in range(m)]
            z = math.fsum(w)
            q = [(1.0 - extra) * wi / z for wi in w]
            q[out_best[0]] += extra
            return q
    gaps = [v_supp_max - v[i] for i in supp]
    x = _solve_log_offset(ps, gaps, radius)
    e = math.exp(x)
    w = [0.0] * m
    for i, g in zip(supp, gaps):
        w[i] = p[i] / (g + e)
    z = math.fsum(w)
    return [wi / z for wi in w]


def _phi(d: float) -> float:
    """``log(1 + d) - d / (1 + d)`` without cancellation for small ``d``."""
    if abs(d) < 1e-2:
        # sum_{k>=2} (-1)^k (k-1)/k d^k
        out, term = 0.0, d
        for k in range(2, 10):
            term *= -d
            out -= (k - 1) / k * term
        return out
    return math.log1p(d) - d / (1.0 + d)


def _kl_at_offset(p: list[float], gaps: list[float], e: float) -> tuple[float, float]:
    """``f`` and ``df/dx`` at ``nu = v_top + e`` where ``x = log e``.

    With ``d_i = gaps[i] + e`` the KKT point is ``q_i = (p_i / d_i) / s1``,
    ``s1 = sum p_j / d_j``, and ``f = KL(p, q)``. Writing
    ``delta_i = p_i / q_i - 1 = sum_j p_j (g_i - g_j) / d_j`` gives
    ``f = sum p_i phi(delta_i)`` with every term nonnegative, because
    ``sum p_i delta_i / (1 + delta_i) = sum (p_i - q_i) = 0``. This stays
    accurate when ``f`` is far below the machine epsilon of ``log e``.
    """
    d = [g + e for g in gaps]
    s1 = math.fsum(pi / di for pi, di in zip(p, d))
    t = math.fsum(pi * gi / di for pi, gi, di in zip(p, gaps, d))
    f = 0.0
    var = 0.0
    for pi, gi, di in zip(p, gaps, d):
        delta = gi * s1 - t
        f += pi * _phi(delta)
        # df/dnu = -sum p_i (delta_i / d_i)^2 / s1; times e for the x scale
        var += pi * (delta * delta) * (e / di) / di
    return f, -var / s1


def _solve_log_offset(p: list[float], gaps: list[float], radius: float) -> float:
    """Solve ``f(nu) = radius`` for ``x = log(nu - v_top)``.

    ``gaps[i] = v_top - v_i >= 0``, so ``nu - v_i = gaps[i] + exp(x)`` keeps
    full relative precision even when ``nu`` is within an ulp of ``v_top``.
    ``f`` decreases from +inf (x -> -inf) to 0 (x -> inf).
    """
    scale = max(1.0, max(gaps))
    lo, hi = -745.0, math.log(1e6 * scale)
    while _kl_at_offset(p, gaps, math.exp(hi))[0] > radius:
        hi += 5.0
        if hi > 700:
            raise NumericError("KL ball multiplier bracket failed", radius)
    x = 0.5 * (lo + hi)
    g = math.inf
    for _ in range(MAX_ITER):
        fx, slope = _kl_at_offset(p, gaps, math.exp(x))
        g = fx - radius
        if g > 0.0:
            lo = x
        else:
            hi = x
        if abs(g) <= 1e-12 * radius or hi - lo < 1e-13:
            return x
        nx = x - g / slope if slope < 0.0 and math.isfinite(slope) else 0.5 * (lo + hi)
        x = nx if lo < nx < hi else 0.5 * (lo + hi)
    if abs(g) > BALL_TOL * max(1.0, radius):
        raise NumericError("KL ball solver did not converge", abs(g))
    return x


# ---------------------------------------------------------------------------
# Exploration thresholds


@dataclass(frozen=True)
class ThresholdSpec:
    """Threshold family and the dimensions it depends on.

    ``kind`` is ``"theoretical"`` (the union-bound calibration giving
    P(E) >= 1 - delta), ``"practical"`` (``log 1/delta + log log n`` for
    rewards, ``log 1/delta + log n`` for transitions) or ``"fixed_budget"``
    (``log tau`` for both).
    """

    kind: str = "theoretical"
    delta: float = 0.1
    horizon: int = 1
    branching: int = 2
    num_actions: int = 2
    budget_episodes: int | None = None

    def __post_init__(self):
        if self.kind not in ("theoretical", "practical", "fixed_budget"):
            raise DomainError(f"unknown threshold kind {self.kind!r}")
        if not 0.0 < self.delta < 1.0 and not (self.kind == "theoretical" and self.delta == 1.0):
            raise DomainError("delta must lie in (0, 1)")
        if self.kind == "fixed_budget" and not (self.budget_episodes and self.budget_episodes >= 1):
            raise DomainError("fixed_budget thresholds need budget_episodes >= 1")
        object.__setattr__(self, "_log_union", (
            math.log(3.0) + self.horizon * math.log(self.branching * self.num_actions)
            - math.log(self.delta)))

    @property
    def log_union(self) -> float:
        """``log(3 (B K)^H / delta)``."""
        return self._log_union

    def reward(self, n: float) -> float:
        if self.kind == "theoretical":
            return self.log_union + 1.0 + math.log1p(n)
        if self.kind == "practical":
            # log log n is negative below n = e; clamp there
            return -math.log(self.delta) + math.log(math.log(max(n, math.e)))
        return math.log(self.budget_episodes)

    def transition(self, n: float) -> float:
        if self.kind == "theoretical":
            b1 = self.branching - 1
            if b1 == 0:
                return self.log_union
            return self.log_union + b1 * (1.0 + math.log1p(n / b1))
        if self.kind == "practical":
            return -math.log(self.delta) + math.log(max(n, 1.0))
        return math.log(self.budget_episodes)

    def count(self) -> float:
        return self.log_union

    def master(self, n: float) -> float:
        """Largest of the three thresholds.

        For ``B >= 2`` this equals ``log_union + (B-1) log(e (1 + n/(B-1)))``;
        for ``B = 1`` the reward threshold dominates.
        """
        return max(self.reward(n), self.transition(n), self.count())


def threshold(spec: ThresholdSpec, which: str, n: float = 0.0) -> float:
    if n < 0:
        raise DomainError("visit count must be nonnegative")
    if which == "reward":
        return spec.reward(n)
    if which == "transition":
        return spec.transition(n)
    if which == "count":
        return spec.count()
    if which == "master":
        return spec.master(n)
    raise DomainError(f"unknown threshold {which!r}")


# ---------------------------------------------------------------------------
# Time-uniform coverage simulations


def _xlogx_ratio(p_hat: np.ndarray, p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(p_hat > 0, p_hat * np.log(p_hat / p), 0.0)
    return t


def coverage_test(kind: str, trials: int, stream_length: int, delta: float, *,
                  seed: int = 0, dist: Sequence[float] | None = None,
                  mean: float = 0.3, beta_scale: float = 1.0) -> float:
    """Fraction of simulated streams that ever leave the confidence region.

    ``bounded_mean``: i.i.d. Bernoulli(``mean``) samples, violation when
    ``n kl(mean_hat_n, mean) > log(1/delta) + log(e (1 + n))``.

    ``categorical``: i.i.d. draws from ``dist`` (default uniform on 3),
    violation when ``n KL(p_hat_n, p) > log(1/delta) + (m-1) log(e (1 + n/(m-1)))``.

    ``count_martingale``: Bernoulli variables with history-dependent success
    probabilities ``p_n``, violation when ``sum X < sum p / 2 - log(1/delta)``.

    ``beta_scale`` multiplies the threshold (values below 1 make canaries).
    """
    if trials < 1 or stream_length < 1:
        raise DomainError("trials and stream_length must be >= 1")
    rng = np.random.default_rng(seed)
    n = np.arange(1, stream_length + 1, dtype=float)
    log_inv = -math.log(delta)

    if kind == "bounded_mean":
        x = rng.random((trials, stream_length)) < mean
        mu_hat = np.cumsum(x, axis=1) / n
        kl = (_xlogx_ratio(mu_hat, np.full_like(mu_hat, mean))
              + _xlogx_ratio(1 - mu_hat, np.full_like(mu_hat, 1 - mean)))
        beta = log_inv + 1.0 + np.log1p(n)
        bad = (n * kl > beta_scale * beta).any(axis=1)
    elif kind == "categorical":
        p = np.full(3, 1 / 3) if dist is None else np.asarray(dist, dtype=float)
        m = p.size
        draws = rng.choice(m, size=(trials, stream_length), p=p)
        kl = np.zeros((trials, stream_length))
        for k in range(m):
            if p[k] == 0:
                continue
            p_hat = np.cumsum(draws == k, axis=1) / n
            kl += _xlogx_ratio(p_hat, np.full_like(p_hat, p[k]))
        if m > 1:
            beta = log_inv + (m - 1) * (1.0 + np.log1p(n / (m - 1)))
        else:
            beta = np.full_like(n, log_inv)
        bad = (n * kl > beta_scale * beta + 1e-12).any(axis=1)
    elif kind == "count_martingale":
        ones = np.zeros(trials)
        p_sum = np.zeros(trials)
        bad = np.zeros(trials, dtype=bool)
        for i in range(stream_length):
            # predictable probabilities: depend on the past only
            freq = ones / max(i, 1)
            p_n = 0.05 + 0.9 * (1.0 - freq) * (0.5 + 0.5 * rng.random(trials))
            ones += rng.random(trials) < p_n
            p_sum += p_n
            bad |= ones < p_sum / 2 - beta_scale * log_inv
    else:
        raise DomainError(f"unknown coverage kind {kind!r}")
    return float(bad.mean())


@dataclass(frozen=True)
class CoverageRow:
    kind: str
    delta: float
    trials: int
    length: int
    violation_rate: float
    label: str = ""


COVERAGE_FIELDS = ("kind", "label", "delta", "trials", "length", "violation_rate")


def write_coverage_csv(rows: Iterable[CoverageRow], path: str | Path,
                       header_comment: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COVERAGE_FIELDS)
        for r in rows:
            w.writerow([r.kind, r.label, repr(r.delta), r.trials, r.length, repr(r.violation_rate)])
