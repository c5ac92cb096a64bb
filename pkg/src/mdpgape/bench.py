"""Experiment campaigns: fixed-confidence tables, eps-scaling, fixed-budget
curves and concentration coverage.

A campaign is described by a small YAML or JSON mapping::

    mode: fixed_confidence        # scaling | fixed_budget | concentration
    env: {states: 200, actions: 5, branching: 2, sparsity: 0.5}
    algo: {name: gape, params: {gamma: 0.7, delta: 0.1, thresholds: practical}}
    eps_grid: [1.0]
    replications: 50
    seed: 0

Replication ``i`` uses the MDP generated with seed ``seed + i`` and an
episode stream seeded with ``seed + i + EPISODE_SEED_OFFSET``.

Output files
------------
``results.csv``: one row per run with columns :data:`RESULT_FIELDS`.
``summary.csv``: one row per (algorithm, eps_or_budget) with columns
:data:`SUMMARY_FIELDS`. Scaling campaigns also write ``scaling.csv``
(:data:`SCALING_FIELDS`) and concentration campaigns write
``coverage.csv``. Each file starts with a ``# config: {...}`` line holding
the fully resolved campaign as JSON. Floats are written with ``repr`` so
that aggregates recomputed from ``results.csv`` match ``summary.csv``
exactly.
"""
from __future__ import annotations

import csv
import io
import json
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np
import yaml

from .baselines import BUDGET_PLANNERS, BudgetConfig, budget_split, sparse_sampling_budget
from .confidence import CoverageRow, ThresholdSpec, coverage_test, write_coverage_csv
from .errors import ConfigError
from .mdp import (ForwardModel, GeneratorConfig, exact_value_iteration, generate_random_mdp,
                  planning_horizon, simple_regret)
from .planner import GapEConfig, plan

MODES = ("fixed_confidence", "scaling", "fixed_budget", "concentration")
EPISODE_SEED_OFFSET = 1_000_000
RESULT_FIELDS = ("algorithm", "eps_or_budget", "seed", "tau", "n", "regret", "stop_reason")
SUMMARY_FIELDS = ("algorithm", "eps_or_budget", "runs", "failures", "median_n", "max_n",
                  "mean_log_n", "max_regret", "mean_regret", "ci95_low", "ci95_high",
                  "correct_rate", "n_ss")
SCALING_FIELDS = ("algorithm", "slope", "intercept", "points")


@dataclass(frozen=True)
class EnvConfig:
    states: int = 50
    actions: int = 3
    branching: int = 2
    sparsity: float = 0.5
    granularity: str = "state_action"

    def generator(self, seed: int) -> GeneratorConfig:
        return GeneratorConfig(self.states, self.actions, self.branching, self.sparsity, seed,
                               self.granularity)


PAPER_ENV = EnvConfig(200, 5, 2, 0.5)
DESK_ENV = EnvConfig(50, 3, 2, 0.5)
PAPER_PARAMS = {"gamma": 0.7, "delta": 0.1, "thresholds": "practical"}


@dataclass(frozen=True)
class Campaign:
    mode: str
    env: EnvConfig = DESK_ENV
    algorithms: tuple[str, ...] = ("gape",)
    params: Mapping[str, Any] = field(default_factory=lambda: dict(PAPER_PARAMS))
    eps_grid: tuple[float, ...] = ()
    budget_grid: tuple[int, ...] = ()
    replications: int = 50
    seed: int = 0
    output: str | None = None
    # concentration mode
    deltas: tuple[float, ...] = (0.05, 0.1)
    trials: int = 1000
    stream_length: int = 1000

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if self.mode in ("fixed_confidence", "scaling"):
            if not self.eps_grid or any(e <= 0 for e in self.eps_grid):
                raise ConfigError("eps_grid must hold positive values")
            if self.mode == "scaling" and len(set(self.eps_grid)) < 3:
                raise ConfigError("scaling needs at least 3 eps values")
            if set(self.algorithms) != {"gape"}:
                raise ConfigError("fixed-confidence campaigns run the gape planner only")
        if self.mode == "fixed_budget":
            if not self.budget_grid or any(b < 1 for b in self.budget_grid):
                raise ConfigError("budget_grid must hold positive integers")
            unknown = set(self.algorithms) - set(BUDGET_PLANNERS)
            if unknown:
                raise ConfigError(f"unknown algorithms {sorted(unknown)}")
        gamma = self.params.get("gamma", 0.7)
        if not 0.0 < gamma < 1.0:
            raise ConfigError("gamma must lie in (0, 1)")
        self.env.generator(self.seed).validate()

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Campaign":
        data = dict(data)
        known = {"mode", "env", "algo", "eps_grid", "budget_grid", "replications", "seed",
                 "output", "deltas", "trials", "stream_length"}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown campaign keys {sorted(extra)}")
        if "mode" not in data:
            raise ConfigError("campaign needs a mode")
        env = data.get("env", {})
        if env == "paper":
            env_cfg = PAPER_ENV
        elif env == "desk":
            env_cfg = DESK_ENV
        elif isinstance(env, Mapping):
            try:
                env_cfg = replace(DESK_ENV, **env)
            except TypeError as exc:
                raise ConfigError(f"bad env block: {exc}") from None
        else:
            raise ConfigError("env must be a mapping, 'paper' or 'desk'")
        algo = data.get("algo", {"name": "gape"})
        names = algo.get("name", "gape")
        names = (names,) if isinstance(names, str) else tuple(names)
        params = dict(PAPER_PARAMS)
        params.update(algo.get("params") or {})
        try:
            return cls(
                mode=data["mode"], env=env_cfg, algorithms=names, params=params,
                eps_grid=tuple(float(e) for e in data.get("eps_grid", ())),
                budget_grid=tuple(int(b) for b in data.get("budget_grid", ())),
                replications=int(data.get("replications", 50)), seed=int(data.get("seed", 0)),
                output=data.get("output"),
                deltas=tuple(float(d) for d in data.get("deltas", (0.05, 0.1))),
                trials=int(data.get("trials", 1000)),
                stream_length=int(data.get("stream_length", 1000)))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path: str | Path) -> "Campaign":
        try:
            data = yaml.safe_load(Path(path).read_text())
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
        if not isinstance(data, Mapping):
            raise ConfigError(f"{path} does not hold a mapping")
        return cls.from_dict(data)

    def resolved(self) -> dict[str, Any]:
        """Fully resolved configuration, as echoed into every output file."""
        out = asdict(self)
        out["params"] = dict(sorted(self.params.items()))
        out.pop("output")
        return out

    def config_line(self) -> str:
        return "config: " + json.dumps(self.resolved(), sort_keys=True)


@dataclass
class RunRow:
    algorithm: str
    eps_or_budget: float
    seed: int
    tau: int | None
    n: int | None
    regret: float | None
    stop_reason: str

    def cells(self) -> list[str]:
        def fmt(v):
            if v is None:
                return ""
            return repr(float(v)) if isinstance(v, float) else str(v)
        return [self.algorithm, fmt(self.eps_or_budget), str(self.seed), fmt(self.tau),
                fmt(self.n), fmt(self.regret), self.stop_reason]


@dataclass
class CampaignResult:
    campaign: Campaign
    rows: list[RunRow]
    summary: list[dict[str, Any]]
    slopes: dict[str, tuple[float, float]] = field(default_factory=dict)
    coverage: list[CoverageRow] = field(default_factory=list)


# ---------------------------------------------------------------------------
# single runs


def _episode_seed(mdp_seed: int) -> int:
    return mdp_seed + EPISODE_SEED_OFFSET


def _gape_config(params: Mapping[str, Any], eps: float, horizon: int, mdp) -> GapEConfig:
    delta = params.get("delta", 0.1)
    thr = ThresholdSpec(params.get("thresholds", "practical"), delta, horizon,
                        mdp.branching, mdp.num_actions)
    return GapEConfig(eps=eps, delta=delta, gamma=params.get("gamma", 0.7), horizon=horizon,
                      thresholds=thr, branching=mdp.branching,
                      max_episodes=int(params.get("max_episodes", 10_000_000)))


def _confidence_task(args) -> RunRow:
    env, params, eps, mdp_seed = args
    gamma = params.get("gamma", 0.7)
    try:
        mdp = generate_random_mdp(env.generator(mdp_seed))
        H = planning_horizon(eps, gamma)
        cfg = _gape_config(params, eps, H, mdp)
        rec = plan(cfg, ForwardModel(mdp, _episode_seed(mdp_seed)))
        regret = simple_regret(exact_value_iteration(mdp, H, gamma), rec.recommended_action)
        return RunRow("gape", float(eps), mdp_seed, rec.tau, rec.oracle_calls, regret,
                      rec.stop_reason)
    except (ArithmeticError, RuntimeError, ValueError):
        return RunRow("gape", float(eps), mdp_seed, None, None, None, "error")


def _budget_task(args) -> RunRow:
    env, params, algo, budget, mdp_seed = args
    gamma = params.get("gamma", 0.7)
    try:
        mdp = generate_random_mdp(env.generator(mdp_seed))
        _tau, H = budget_split(budget, gamma)
        cfg = BudgetConfig(budget, gamma, float(params.get("exploration", 1.0)), mdp_seed)
        rec = BUDGET_PLANNERS[algo](ForwardModel(mdp, _episode_seed(mdp_seed)), cfg)
        regret = simple_regret(exact_value_iteration(mdp, H, gamma), rec.recommended_action)
        return RunRow(algo, float(budget), mdp_seed, rec.tau, rec.oracle_calls, regret,
                      rec.stop_reason)
    except (ArithmeticError, RuntimeError, ValueError):
        return RunRow(algo, float(budget), mdp_seed, None, None, None, "error")


def _map(fn, tasks: list, workers: int | None) -> list:
    if workers and workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


# ---------------------------------------------------------------------------
# aggregation


def _ci95(values: list[float]) -> tuple[float, float]:
    m = statistics.fmean(values)
    if len(values) < 2:
        return m, m
    half = 1.96 * statistics.stdev(values) / math.sqrt(len(values))
    return m - half, m + half


def summarize(rows: Iterable[RunRow], mode: str, env: EnvConfig | None = None,
              gamma: float = 0.7) -> list[dict[str, Any]]:
    """Per (algorithm, eps_or_budget) aggregates, in sorted group order.

    For fixed-confidence modes with ``env`` given, ``n_ss`` holds the Sparse
    Sampling scale at the planning horizon of each eps, for reference.
    """
    groups: dict[tuple[str, float], list[RunRow]] = {}
    for r in rows:
        groups.setdefault((r.algorithm, r.eps_or_budget), []).append(r)
    out = []
    for (algo, x), grp in sorted(groups.items()):
        grp = sorted(grp, key=lambda r: r.seed)
        ok = [r for r in grp if r.stop_reason != "error"]
        ns = [r.n for r in ok]
        regs = [r.regret for r in ok]
        row: dict[str, Any] = {"algorithm": algo, "eps_or_budget": x, "runs": len(grp),
                               "failures": len(grp) - len(ok)}
        if ok:
            lo, hi = _ci95(regs)
            row.update(median_n=float(statistics.median(ns)), max_n=max(ns),
                       mean_log_n=statistics.fmean(math.log(n) for n in ns),
                       max_regret=max(regs), mean_regret=statistics.fmean(regs),
                       ci95_low=lo, ci95_high=hi)
            if mode in ("fixed_confidence", "scaling"):
                row["correct_rate"] = sum(g <= x for g in regs) / len(regs)
        if mode in ("fixed_confidence", "scaling") and env is not None:
            H = planning_horizon(x, gamma)
            row["n_ss"] = sparse_sampling_budget(H, env.branching, env.actions, x)
        out.append({k: row.get(k) for k in SUMMARY_FIELDS})
    return out


def fit_slope(eps: Iterable[float], mean_log_n: Iterable[float]) -> tuple[float, float]:
    """Least-squares fit ``mean log n = slope * log(1/eps) + intercept``."""
    x = np.log(1.0 / np.asarray(list(eps), dtype=float))
    y = np.asarray(list(mean_log_n), dtype=float)
    if x.size < 2 or np.ptp(x) == 0:
        raise ConfigError("need at least two distinct eps values")
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept)


# ---------------------------------------------------------------------------
# campaigns


def _seeds(c: Campaign) -> list[int]:
    return [c.seed + i for i in range(c.replications)]


def run_fixed_confidence(c: Campaign, workers: int | None = None) -> CampaignResult:
    if c.mode not in ("fixed_confidence", "scaling"):
        raise ConfigError(f"campaign mode {c.mode!r} is not fixed_confidence")
    params = dict(c.params)
    tasks = [(c.env, params, eps, s) for eps in c.eps_grid for s in _seeds(c)]
    rows = _map(_confidence_task, tasks, workers)
    rows.sort(key=lambda r: (r.algorithm, -r.eps_or_budget, r.seed))
    return CampaignResult(c, rows, summarize(rows, c.mode, c.env, c.params.get("gamma", 0.7)))


def run_scaling(c: Campaign, workers: int | None = None) -> CampaignResult:
    if c.mode != "scaling":
        raise ConfigError(f"campaign mode {c.mode!r} is not scaling")
    res = run_fixed_confidence(c, workers)
    pts = [(r["eps_or_budget"], r["mean_log_n"]) for r in res.summary
           if r["mean_log_n"] is not None]
    res.slopes["gape"] = fit_slope([p[0] for p in pts], [p[1] for p in pts])
    return res


def run_fixed_budget(c: Campaign, workers: int | None = None) -> CampaignResult:
    if c.mode != "fixed_budget":
        raise ConfigError(f"campaign mode {c.mode!r} is not fixed_budget")
    params = dict(c.params)
    tasks = [(c.env, params, a, b, s) for a in c.algorithms for b in c.budget_grid
             for s in _seeds(c)]
    rows = _map(_budget_task, tasks, workers)
    rows.sort(key=lambda r: (r.algorithm, r.eps_or_budget, r.seed))
    return CampaignResult(c, rows, summarize(rows, c.mode))


COVERAGE_CELLS = (
    ("categorical", "m=2", {"dist": (0.3, 0.7)}),
    ("categorical", "m=3", {"dist": (0.2, 0.3, 0.5)}),
    ("categorical", "m=5", {"dist": (0.1, 0.15, 0.2, 0.25, 0.3)}),
    ("bounded_mean", "bernoulli(0.3)", {"mean": 0.3}),
    ("count_martingale", "adaptive p_n", {}),
)


def run_concentration_suite(c: Campaign) -> CampaignResult:
    if c.mode != "concentration":
        raise ConfigError(f"campaign mode {c.mode!r} is not concentration")
    rows = []
    for j, (kind, label, kw) in enumerate(COVERAGE_CELLS):
        for k, delta in enumerate(c.deltas):
            rate = coverage_test(kind, c.trials, c.stream_length, delta,
                                 seed=c.seed + 100 * j + k, **kw)
            rows.append(CoverageRow(kind, delta, c.trials, c.stream_length, rate, label))
    return CampaignResult(c, [], [], coverage=rows)


def run_campaign(c: Campaign, workers: int | None = None) -> CampaignResult:
    if c.mode == "fixed_confidence":
        return run_fixed_confidence(c, workers)
    if c.mode == "scaling":
        return run_scaling(c, workers)
    if c.mode == "fixed_budget":
        return run_fixed_budget(c, workers)
    return run_concentration_suite(c)


# ---------------------------------------------------------------------------
# persistence


def _csv_text(header: str, fields, rows: Iterable[list[str]]) -> str:
    buf = io.StringIO()
    buf.write(f"# {header}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    w.writerows(rows)
    return buf.getvalue()


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_results(res: CampaignResult, out_dir: str | Path) -> list[Path]:
    """Write the campaign files into ``out_dir`` and return their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = res.campaign.config_line()
    written = []
    if res.campaign.mode == "concentration":
        p = out / "coverage.csv"
        write_coverage_csv(res.coverage, p, header)
        return [p]
    p = out / "results.csv"
    p.write_text(_csv_text(header, RESULT_FIELDS, (r.cells() for r in res.rows)))
    written.append(p)
    p = out / "summary.csv"
    p.write_text(_csv_text(header, SUMMARY_FIELDS,
                           ([_cell(row[k]) for k in SUMMARY_FIELDS] for row in res.summary)))
    written.append(p)
    if res.slopes:
        p = out / "scaling.csv"
        p.write_text(_csv_text(header, SCALING_FIELDS,
                               ([a, repr(s), repr(i), str(len(res.summary))]
                                for a, (s, i) in sorted(res.slopes.items()))))
        written.append(p)
    return written


def read_results(path: str | Path) -> tuple[dict[str, Any], list[RunRow]]:
    """Load ``results.csv``; returns the echoed config and the rows."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# config: "):
        raise ConfigError(f"{path} lacks a config line")
    config = json.loads(lines[0][len("# config: "):])
    reader = csv.DictReader(lines[1:])
    rows = []
    for d in reader:
        def num(v, kind):
            return None if v == "" else kind(v)
        rows.append(RunRow(d["algorithm"], float(d["eps_or_budget"]), int(d["seed"]),
                           num(d["tau"], int), num(d["n"], int), num(d["regret"], float),
                           d["stop_reason"]))
    return config, rows
