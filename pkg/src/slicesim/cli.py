"""Batch experiment runner.

Subcommands: run | compare | evolve | schedule. Exit codes: 0 success,
1 usage or configuration error, 2 runtime contract violation (including an
infeasible schedule).
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from typing import Sequence

from . import experiments as ex
from .config import load_config
from .env import TRACE_HEADER, ContractViolation
from .metrics import UsageError, aggregate, write_csv
from .model import ConfigurationError, NotFoundError
from .orchestrator.scheduler import CpuSchedule, sort_key, accommodating_cpu, schedule_slices
from .policies.genetic import genome_hex
from .policies.qlearning import QTable

log = logging.getLogger("slicesim")


class Infeasible(RuntimeError):
    pass


def _prob_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def _with_overrides(cfg, args):
    if getattr(args, "horizon", None) is not None:
        cfg = replace(cfg, scenario=replace(cfg.scenario, horizon=args.horizon))
    return cfg


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _with_overrides(load_config(args.scenario), args)
    policy, artefact = ex.build_policy(cfg, args.policy, args.seed, args.model, args.train_episodes)
    if args.save_model:
        if isinstance(artefact, QTable):
            artefact.to_csv(args.save_model)
        elif artefact is not None:
            ex.write_strategy(args.save_model, cfg.scenario, artefact)
    n = args.episodes if args.episodes is not None else cfg.eval_episodes
    seeds = ex.eval_seeds(args.seed, n)
    trace: list | None = [] if args.trace else None
    metrics = ex.evaluate(cfg.scenario, policy, seeds, trace=trace)
    rows = [m.as_row() for m in metrics]
    fields = list(rows[0])
    table = [[args.policy, str(i), s] + [r[f] for f in fields] for i, (s, r) in enumerate(zip(seeds, rows))]
    summary = aggregate(metrics)
    table.append([args.policy, "mean", None] + [summary[f][0] for f in fields])
    table.append([args.policy, "std", None] + [summary[f][1] for f in fields])
    write_csv(table, ["policy", "episode", "seed"] + fields, args.out)
    if trace is not None:
        write_csv(trace, TRACE_HEADER, args.trace)
    print(
        f"{args.policy}: acceptance {summary['acceptance_pct'][0]:.2f}% "
        f"GS drop {summary['gs_drop_prob'][0]:.4f} over {n} episodes -> {args.out}"
    )
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    cfg = _with_overrides(load_config(args.scenario), args)
    rows = ex.compare_policies(cfg, args.sweep, args.episodes, args.seed, args.train_episodes)
    write_csv([[r[h] for h in ex.COMPARE_HEADER] for r in rows], ex.COMPARE_HEADER, args.out)
    for r in rows:
        print(
            f"p={r['be_departure_prob']:.2f} {r['policy']:>9}: acceptance "
            f"{r['acceptance_pct_mean']:6.2f}% GS drop {r['gs_drop_prob_mean']:.4f}"
        )
    return 0


def cmd_evolve(args: argparse.Namespace) -> int:
    cfg = load_config(args.scenario)
    overrides = {k: v for k, v in (("generations", args.generations), ("population_size", args.population)) if v is not None}
    if overrides:
        cfg = replace(cfg, genetic=replace(cfg.genetic, **overrides))
    shift = None
    if args.shift_at is not None:
        if not args.shift_scenario:
            raise UsageError("--shift-at needs --shift-scenario")
        shift = load_config(args.shift_scenario)
    result = ex.evolve(cfg, args.seed, shift, args.shift_at)
    write_csv(ex.trajectory_rows(result), ex.TRAJECTORY_HEADER, args.out)
    if args.best_out:
        ex.write_strategy(args.best_out, cfg.scenario, result.best_strategy)
    print(
        f"best strategy {list(result.best_strategy.thresholds)} "
        f"(genome {genome_hex(result.best_genome)}) fitness {result.best_fitness:.6g}"
    )
    if result.benchmark_fitness is not None:
        print(f"frozen pre-shift strategy scores {result.benchmark_fitness:.6g} after the shift")
    return 0


def cmd_schedule(args: argparse.Namespace) -> int:
    slices = ex.read_slice_table(args.slices)
    schedule = schedule_slices(slices, args.cpus)
    if schedule is None:
        print("verdict: infeasible")
        raise Infeasible(f"{args.slices}: slices cannot be placed on {args.cpus} CPUs without splitting")
    for sid in sorted(schedule.assignment, key=sort_key):
        print(f"slice {sid} -> {CpuSchedule.label(schedule.assignment[sid])}")
    span = schedule.span()
    window = range(min(span.start, args.probe_start), max(span.stop, args.probe_end)) if args.probe is not None else span
    rows, means = ex.schedule_report(schedule, window)
    for c, m in enumerate(means):
        print(f"{CpuSchedule.label(c)}: mean utilization {m:.3f}")
    if args.out:
        write_csv(rows, ["slot"] + [CpuSchedule.label(c) for c in range(args.cpus)], args.out)
    if args.probe is not None:
        cpu = accommodating_cpu(schedule, args.cpus, args.probe, (args.probe_start, args.probe_end))
        if cpu is None:
            print("verdict: reject")
        else:
            print(f"verdict: accept on {CpuSchedule.label(cpu)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slicesim", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, scenario: bool = True) -> None:
        if scenario:
            p.add_argument("--scenario", required=True, help="scenario YAML file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=scenario, help="output CSV")

    p = sub.add_parser("run", help="train (if needed) and evaluate one policy")
    common(p)
    p.add_argument("--policy", required=True, help="greedy | qlearning | ga-strategy")
    p.add_argument("--model", help="trained Q-table or strategy CSV to evaluate instead of training")
    p.add_argument("--save-model", help="write the trained Q-table or strategy here")
    p.add_argument("--episodes", type=int, help="evaluation episodes")
    p.add_argument("--train-episodes", type=int)
    p.add_argument("--horizon", type=int, help="slots per episode")
    p.add_argument("--trace", help="per-slot event trace CSV of the first evaluation episode")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="Q-learning vs greedy over BE departure probabilities")
    common(p)
    p.add_argument("--sweep", type=_prob_list, default=list(ex.DEFAULT_SWEEP))
    p.add_argument("--episodes", "--seeds", dest="episodes", type=int, help="evaluation seeds per point")
    p.add_argument("--train-episodes", type=int)
    p.add_argument("--horizon", type=int)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("evolve", help="genetic threshold-strategy optimisation")
    common(p)
    p.add_argument("--generations", type=int)
    p.add_argument("--population", type=int)
    p.add_argument("--shift-at", type=int, help="generation after which the shift scenario applies")
    p.add_argument("--shift-scenario")
    p.add_argument("--best-out", help="write the best strategy CSV here")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("schedule", help="map slices onto CPUs and probe for room")
    p.add_argument("--slices", required=True, help="CSV: slice_id,demand_fraction,start,end")
    p.add_argument("--cpus", type=int, required=True)
    p.add_argument("--out", help="per-slot utilization CSV")
    p.add_argument("--probe-demand", "--probe", dest="probe", type=float, help="CPU fraction of a new slice")
    p.add_argument("--probe-start", type=int)
    p.add_argument("--probe-end", type=int)
    p.set_defaults(func=cmd_schedule)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "schedule" and args.probe is not None:
            if args.probe_start is None or args.probe_end is None:
                raise UsageError("--probe-demand needs --probe-start and --probe-end")
        return args.func(args)
    except (ConfigurationError, UsageError, NotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ContractViolation, Infeasible) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
