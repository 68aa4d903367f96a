"""Experiment drivers behind the CLI subcommands; each returns plain rows."""

from __future__ import annotations

import csv
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from .config import ScenarioConfig
from .env import Policy, Scenario, run_episode
from .metrics import EpisodeMetrics, aggregate, write_csv
from .model import ConfigurationError, SliceClass
from .orchestrator.scheduler import CpuSchedule, ScheduledSlice
from .policies.genetic import (
    GaResult,
    ThresholdPolicy,
    ThresholdStrategy,
    genome_hex,
    optimize,
    run_regime_shift,
)
from .policies.greedy import GreedyPolicy
from .policies.qlearning import QTable, frozen_policy, observation_space, train
from .seeding import derive_seed

POLICIES = ("greedy", "qlearning", "ga-strategy")
DEFAULT_SWEEP = tuple(round(0.1 * k, 1) for k in range(1, 10))

COMPARE_FIELDS = (
    "acceptance_pct",
    "gs_acceptance_pct",
    "be_acceptance_pct",
    "gs_drop_prob",
    "be_drop_prob",
    "normalized_utility_rate",
    "cumulative_reward",
)
COMPARE_HEADER = ("be_departure_prob", "policy", "episodes") + tuple(
    f"{f}_{stat}" for f in COMPARE_FIELDS for stat in ("mean", "std")
)
TRAJECTORY_HEADER = (
    "generation",
    "environment",
    "best_fitness",
    "mean_fitness",
    "best_ever_fitness",
    "best_genome_hex",
    "benchmark_fitness",
)
STRATEGY_HEADER = ("type_id", "name", "threshold", "cap")


def eval_seeds(seed: int, n: int) -> list[int]:
    return [derive_seed(seed, "eval", k) for k in range(n)]


def evaluate(scenario: Scenario, policy: Policy, seeds: Sequence[int], horizon: int | None = None,
             trace: list | None = None) -> list[EpisodeMetrics]:
    out = []
    for i, s in enumerate(seeds):
        out.append(run_episode(scenario, policy, s, horizon, trace if i == 0 else None))
    return out


def write_strategy(path: str | Path, scenario: Scenario, strategy: ThresholdStrategy) -> None:
    rows = [
        (t.type_id, t.name, v, scenario.physical_cap(t.type_id))
        for t, v in zip(scenario.slice_types, strategy.thresholds)
    ]
    write_csv(rows, STRATEGY_HEADER, path)


def read_strategy(path: str | Path, scenario: Scenario) -> ThresholdStrategy:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    by_type = {}
    for line, row in enumerate(rows, start=2):
        try:
            by_type[int(row["type_id"])] = int(row["threshold"])
        except (KeyError, TypeError, ValueError):
            raise ConfigurationError(f"{path}:{line}: malformed strategy row") from None
    try:
        return ThresholdStrategy(tuple(by_type[t.type_id] for t in scenario.slice_types))
    except KeyError as exc:
        raise ConfigurationError(f"{path}: no threshold for slice type {exc.args[0]}") from None


def build_policy(config: ScenarioConfig, policy_id: str, seed: int, model: str | None = None,
                 train_episodes: int | None = None, horizon: int | None = None):
    """Policy ready for evaluation plus the artefact it was built from (table or strategy)."""
    scenario = config.scenario
    if policy_id == "greedy":
        return GreedyPolicy(), None
    if policy_id == "qlearning":
        hyper = config.qlearning
        if train_episodes is not None:
            hyper = replace(hyper, episodes=train_episodes)
        if horizon is not None and hyper.train_horizon is None:
            hyper = replace(hyper, train_horizon=horizon)
        if model:
            table = QTable.from_csv(model, observation_space(scenario, hyper))
        else:
            table, _ = train(scenario, hyper, derive_seed(seed, "ql-train"))
        return frozen_policy(table, hyper), table
    if policy_id == "ga-strategy":
        if model:
            strategy = read_strategy(model, scenario)
        else:
            strategy = optimize(scenario, config.genetic, derive_seed(seed, "ga")).best_strategy
        return ThresholdPolicy(strategy), strategy
    raise ConfigurationError(f"unknown policy {policy_id!r} (expected one of {', '.join(POLICIES)})")


def compare_policies(
    config: ScenarioConfig,
    sweep: Sequence[float] = DEFAULT_SWEEP,
    n_eval: int | None = None,
    seed: int = 0,
    train_episodes: int | None = None,
    horizon: int | None = None,
) -> list[dict]:
    """Q-learning vs greedy over a sweep of best-effort departure probabilities.

    Q-learning is retrained for every sweep value; both policies are scored
    on the same evaluation seeds.
    """
    for p in sweep:
        if not 0.0 <= p <= 1.0:
            raise ConfigurationError(f"departure probability {p} outside [0, 1]")
    n_eval = config.eval_episodes if n_eval is None else n_eval
    seeds = eval_seeds(seed, n_eval)
    rows = []
    for i, p in enumerate(sweep):
        scenario = config.scenario.with_departure_prob(SliceClass.BestEffort, p)
        cfg = replace(config, scenario=scenario)
        ql, _ = build_policy(cfg, "qlearning", derive_seed(seed, "compare", i),
                             train_episodes=train_episodes, horizon=horizon)
        for name, policy in (("qlearning", ql), ("greedy", GreedyPolicy())):
            summary = aggregate(evaluate(scenario, policy, seeds, horizon))
            row = {"be_departure_prob": p, "policy": name, "episodes": n_eval}
            for f in COMPARE_FIELDS:
                row[f"{f}_mean"], row[f"{f}_std"] = summary[f]
            rows.append(row)
    return rows


def trajectory_rows(result: GaResult) -> list[tuple]:
    rows = []
    for rec in result.trajectory:
        bench = result.benchmark_fitness if rec.environment == "b" else None
        rows.append((
            rec.generation,
            rec.environment,
            rec.best_fitness,
            rec.mean_fitness,
            rec.best_ever_fitness,
            genome_hex(rec.best_genome),
            bench,
        ))
    return rows


def evolve(config: ScenarioConfig, seed: int, shift: ScenarioConfig | None = None,
           shift_at: int | None = None) -> GaResult:
    if shift is not None and shift_at is not None:
        return run_regime_shift(config.scenario, shift.scenario, shift_at, config.genetic, seed)
    return optimize(config.scenario, config.genetic, seed)


def read_slice_table(path: str | Path) -> list[ScheduledSlice]:
    """Parse ``slice_id,demand_fraction,start,end`` rows; errors name the offending line."""
    try:
        fh = Path(path).open(newline="")
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc.strerror or exc}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["slice_id", "demand_fraction", "start", "end"]:
            raise ConfigurationError(f"{path}:1: expected header slice_id,demand_fraction,start,end")
        slices = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise ConfigurationError(f"{path}:{line}: expected 4 columns, got {len(row)}")
            sid, demand, start, end = (c.strip() for c in row)
            try:
                slice_id: int | str = int(sid) if sid.lstrip("-").isdigit() else sid
                slices.append(ScheduledSlice(slice_id, float(demand), int(start), int(end)))
            except (ValueError, ConfigurationError) as exc:
                raise ConfigurationError(f"{path}:{line}: {exc}") from None
    return slices


def schedule_report(schedule: CpuSchedule, window: range) -> tuple[list[tuple], list[float]]:
    """Per-slot utilisation rows ``(slot, cpu1, ..., cpuN)`` and the per-CPU mean."""
    util = schedule.utilization(window)
    rows = [(t,) + tuple(u[i] for u in util) for i, t in enumerate(window)]
    means = [sum(u) / len(window) if len(window) else 0.0 for u in util]
    return rows, means
