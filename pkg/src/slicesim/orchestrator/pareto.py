"""Pareto dominance and non-dominated filtering of allocation candidates."""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Hashable, Sequence

from ..model import TOL, ConfigurationError, ResourceVector, SliceClass


class Sense(enum.Enum):
    MAXIMIZE = "max"
    MINIMIZE = "min"


@dataclass(frozen=True)
class ObjectiveVector:
    values: tuple[float, ...]
    senses: tuple[Sense, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "senses", tuple(self.senses))
        if len(self.values) != len(self.senses):
            raise ConfigurationError("one sense per objective value is required")

    @classmethod
    def maximize(cls, *values: float) -> "ObjectiveVector":
        return cls(values, (Sense.MAXIMIZE,) * len(values))

    def oriented(self) -> tuple[float, ...]:
        """Values flipped so that larger is better everywhere."""
        return tuple(v if s is Sense.MAXIMIZE else -v for v, s in zip(self.values, self.senses))


def dominates(a: ObjectiveVector, b: ObjectiveVector) -> bool:
    """True iff ``a`` is no worse than ``b`` everywhere and strictly better somewhere."""
    if a.senses != b.senses:
        raise ConfigurationError("objective vectors are not comparable")
    better = False
    for x, y in zip(a.oriented(), b.oriented()):
        if x < y:
            return False
        if x > y:
            better = True
    return better


def pareto_filter(candidates: Sequence[tuple[Hashable, ObjectiveVector]]) -> list[Hashable]:
    """Ids of the non-dominated candidates, in input order.

    Candidates are visited in decreasing lexicographic order of their
    oriented values, so any dominator of a candidate is visited before it
    and only the running front has to be checked.
    """
    if not candidates:
        return []
    senses = candidates[0][1].senses
    for _, vec in candidates:
        if vec.senses != senses:
            raise ConfigurationError("objective vectors are not comparable")
    oriented = [vec.oriented() for _, vec in candidates]
    order = sorted(range(len(candidates)), key=lambda i: oriented[i], reverse=True)
    front: list[int] = []
    for i in order:
        v = oriented[i]
        dominated = False
        for j in front:
            w = oriented[j]
            if w != v and all(x >= y for x, y in zip(w, v)):
                dominated = True
                break
        if not dominated:
            front.append(i)
    keep = set(front)
    return [candidates[i][0] for i in range(len(candidates)) if i in keep]


DEMO_SENSES = (Sense.MAXIMIZE, Sense.MAXIMIZE, Sense.MINIMIZE)


@dataclass(frozen=True)
class AdmissionOption:
    """One way of serving a set of pending requests: which to admit, and whether to shrink BE."""

    admitted: tuple[int, ...]
    scaled: bool
    objectives: ObjectiveVector


def admission_options(
    capacity: Sequence[float],
    active: Sequence[tuple[SliceClass, Sequence[float], float, float]],
    pending: Sequence[tuple[SliceClass, Sequence[float], float]],
) -> list[AdmissionOption]:
    """Enumerate feasible admission subsets with their objective triple.

    ``active`` rows are ``(class, demand, utility_rate, min_fraction)`` of
    running instances at full scale; ``pending`` rows are ``(class, demand,
    utility_rate)``. Each subset is tried as-is and with every elastic active
    instance shrunk to its minimum. Objectives: total utility rate (max),
    smallest relative headroom over dimensions (max), instances scaled (min).
    """
    cap = ResourceVector(capacity)
    options = []
    for r in range(len(pending) + 1):
        for subset in itertools.combinations(range(len(pending)), r):
            for scaled in (False, True):
                used = [0.0] * len(cap)
                utility = 0.0
                n_scaled = 0
                for cls, demand, rate, min_fraction in active:
                    f = min_fraction if scaled and cls is SliceClass.BestEffort else 1.0
                    n_scaled += f < 1.0
                    utility += rate * f
                    used = [u + d * f for u, d in zip(used, demand)]
                if scaled and n_scaled == 0:
                    continue
                for k in subset:
                    _, demand, rate = pending[k]
                    utility += rate
                    used = [u + d for u, d in zip(used, demand)]
                if any(u > c + TOL for u, c in zip(used, cap)):
                    continue
                headroom = min((c - u) / c for c, u in zip(cap, used))
                options.append(
                    AdmissionOption(subset, scaled, ObjectiveVector((utility, headroom, n_scaled), DEMO_SENSES))
                )
    return options
