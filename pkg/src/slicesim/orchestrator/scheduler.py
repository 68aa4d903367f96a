"""Mapping of slices onto CPUs over time, with no slice split across CPUs."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Hashable, Sequence

from ..model import TOL, ConfigurationError

EXACT_FALLBACK_LIMIT = 12


@dataclass(frozen=True)
class ScheduledSlice:
    slice_id: Hashable
    demand_fraction: float
    start: int
    end: int  # exclusive

    def __post_init__(self) -> None:
        if not 0.0 < self.demand_fraction <= 1.0:
            raise ConfigurationError(f"slice {self.slice_id}: demand fraction must lie in (0, 1]")
        if not self.start < self.end:
            raise ConfigurationError(f"slice {self.slice_id}: window must satisfy start < end")

    @property
    def slots(self) -> range:
        return range(self.start, self.end)


@dataclass
class CpuSchedule:
    n_cpus: int
    slices: dict[Hashable, ScheduledSlice] = field(default_factory=dict)
    assignment: dict[Hashable, int] = field(default_factory=dict)  # slice id -> 0-based cpu

    @staticmethod
    def label(cpu: int) -> str:
        return f"cpu{cpu + 1}"

    def load(self, cpu: int) -> dict[int, float]:
        out: dict[int, float] = defaultdict(float)
        for sid, c in self.assignment.items():
            if c == cpu:
                s = self.slices[sid]
                for t in s.slots:
                    out[t] += s.demand_fraction
        return out

    def span(self) -> range:
        if not self.slices:
            return range(0)
        return range(min(s.start for s in self.slices.values()), max(s.end for s in self.slices.values()))

    def utilization(self, window: range | None = None) -> list[list[float]]:
        """Per-CPU load for every slot of ``window`` (default: the schedule's span)."""
        window = self.span() if window is None else window
        loads = [self.load(c) for c in range(self.n_cpus)]
        return [[load.get(t, 0.0) for t in window] for load in loads]

    def verify(self) -> bool:
        """Recheck the no-split and per-slot capacity invariants from scratch."""
        if set(self.assignment) != set(self.slices):
            return False
        if any(not 0 <= c < self.n_cpus for c in self.assignment.values()):
            return False
        for c in range(self.n_cpus):
            totals: dict[int, float] = {}
            for sid, cpu in self.assignment.items():
                if cpu != c:
                    continue
                s = self.slices[sid]
                for t in range(s.start, s.end):
                    totals[t] = totals.get(t, 0.0) + s.demand_fraction
            if any(v > 1.0 + TOL for v in totals.values()):
                return False
        return True


def _fits(load: dict[int, float], s: ScheduledSlice) -> bool:
    return all(load.get(t, 0.0) + s.demand_fraction <= 1.0 + TOL for t in s.slots)


def _place(load: dict[int, float], s: ScheduledSlice, sign: float = 1.0) -> None:
    for t in s.slots:
        load[t] = load.get(t, 0.0) + sign * s.demand_fraction


def _first_fit_decreasing(ordered: Sequence[ScheduledSlice], n_cpus: int) -> dict | None:
    loads: list[dict[int, float]] = [{} for _ in range(n_cpus)]
    assignment = {}
    for s in ordered:
        for c in range(n_cpus):
            if _fits(loads[c], s):
                _place(loads[c], s)
                assignment[s.slice_id] = c
                break
        else:
            return None
    return assignment


def _exact(ordered: Sequence[ScheduledSlice], n_cpus: int) -> dict | None:
    loads: list[dict[int, float]] = [{} for _ in range(n_cpus)]
    assignment: dict = {}

    def search(i: int) -> bool:
        if i == len(ordered):
            return True
        s = ordered[i]
        tried_empty = False
        for c in range(n_cpus):
            empty = not any(v > TOL for v in loads[c].values())
            if empty:
                # empty CPUs are interchangeable; trying one is enough
                if tried_empty:
                    continue
                tried_empty = True
            if _fits(loads[c], s):
                _place(loads[c], s)
                assignment[s.slice_id] = c
                if search(i + 1):
                    return True
                _place(loads[c], s, -1.0)
                del assignment[s.slice_id]
        return False

    return assignment if search(0) else None


def schedule_slices(slices: Sequence[ScheduledSlice], n_cpus: int) -> CpuSchedule | None:
    """First-fit decreasing over cpu1..cpuN; exact search for small instances if that fails."""
    if n_cpus < 1:
        raise ConfigurationError("n_cpus must be >= 1")
    ids = [s.slice_id for s in slices]
    if len(set(ids)) != len(ids):
        raise ConfigurationError("duplicate slice ids")
    ordered = sorted(slices, key=lambda s: (-s.demand_fraction, sort_key(s.slice_id)))
    assignment = _first_fit_decreasing(ordered, n_cpus)
    if assignment is None and len(slices) <= EXACT_FALLBACK_LIMIT:
        assignment = _exact(ordered, n_cpus)
    if assignment is None:
        return None
    return CpuSchedule(n_cpus, {s.slice_id: s for s in slices}, assignment)


def sort_key(slice_id: Hashable) -> tuple:
    return (0, slice_id, "") if isinstance(slice_id, (int, float)) else (1, 0, str(slice_id))


def accommodating_cpu(
    schedule: CpuSchedule, n_cpus: int, new_demand_fraction: float, window: tuple[int, int]
) -> int | None:
    """Lowest CPU with enough headroom at every slot of ``window``, if any."""
    if not 0.0 < new_demand_fraction <= 1.0:
        raise ConfigurationError("demand fraction must lie in (0, 1]")
    start, end = window
    if not start < end:
        raise ConfigurationError("window must satisfy start < end")
    for c in range(n_cpus):
        load = schedule.load(c) if c < schedule.n_cpus else {}
        if all(load.get(t, 0.0) + new_demand_fraction <= 1.0 + TOL for t in range(start, end)):
            return c
    return None


def can_accommodate(
    schedule: CpuSchedule, n_cpus: int, new_demand_fraction: float, window: tuple[int, int]
) -> bool:
    return accommodating_cpu(schedule, n_cpus, new_demand_fraction, window) is not None
