"""Episode metrics, cross-episode aggregation and CSV emission."""

from __future__ import annotations

import csv
import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .model import SliceClass

CLASSES = (SliceClass.GuaranteedService, SliceClass.BestEffort)


class UsageError(ValueError):
    pass


@dataclass
class ClassCounts:
    generated: int = 0
    accepted: int = 0
    rejected: int = 0
    expired: int = 0
    overflow_dropped: int = 0
    queued: int = 0

    @property
    def dropped(self) -> int:
        return self.rejected + self.expired + self.overflow_dropped

    def conserved(self) -> bool:
        return self.generated == self.accepted + self.dropped + self.queued


@dataclass
class EpisodeMetrics:
    """Outcome of one episode. Requests still queued at the horizon are counted apart."""

    counts: dict[SliceClass, ClassCounts]
    cumulative_reward: float
    mean_utilization: tuple[float, ...]
    normalized_utility_rate: float
    scale_down_events: int
    horizon: int
    total_utility: float = 0.0
    dimensions: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        for cls, c in self.counts.items():
            if not c.conserved():
                raise AssertionError(f"conservation violated for {cls.short}: {c}")

    def _total(self) -> ClassCounts:
        total = ClassCounts()
        for c in self.counts.values():
            for name in ("generated", "accepted", "rejected", "expired", "overflow_dropped", "queued"):
                setattr(total, name, getattr(total, name) + getattr(c, name))
        return total

    def _get(self, cls: SliceClass | None) -> ClassCounts:
        if cls is None:
            return self._total()
        return self.counts.get(cls, ClassCounts())

    def acceptance_pct(self, cls: SliceClass | None = None) -> float:
        c = self._get(cls)
        return 100.0 * c.accepted / c.generated if c.generated else 0.0

    def dropping_prob(self, cls: SliceClass | None = None) -> float:
        c = self._get(cls)
        return c.dropped / c.generated if c.generated else 0.0

    def queued_fraction(self, cls: SliceClass | None = None) -> float:
        c = self._get(cls)
        return c.queued / c.generated if c.generated else 0.0

    def as_row(self) -> dict[str, float | int]:
        row: dict[str, float | int] = {}
        for cls in CLASSES:
            c = self._get(cls)
            p = cls.short.lower()
            row[f"{p}_generated"] = c.generated
            row[f"{p}_accepted"] = c.accepted
            row[f"{p}_rejected"] = c.rejected
            row[f"{p}_expired"] = c.expired
            row[f"{p}_overflow_dropped"] = c.overflow_dropped
            row[f"{p}_queued_at_end"] = c.queued
            row[f"{p}_acceptance_pct"] = self.acceptance_pct(cls)
            row[f"{p}_drop_prob"] = self.dropping_prob(cls)
        row["acceptance_pct"] = self.acceptance_pct()
        row["drop_prob"] = self.dropping_prob()
        row["cumulative_reward"] = self.cumulative_reward
        names = self.dimensions or tuple(f"dim{i}" for i in range(len(self.mean_utilization)))
        for name, u in zip(names, self.mean_utilization):
            row[f"mean_utilization_{name}"] = u
        row["normalized_utility_rate"] = self.normalized_utility_rate
        row["scale_down_events"] = self.scale_down_events
        return row


def aggregate(metrics: Sequence[EpisodeMetrics] | Sequence[Mapping[str, float]]) -> dict[str, tuple[float, float]]:
    """Fieldwise mean and sample standard deviation (0 for a single episode)."""
    if not metrics:
        raise UsageError("aggregate needs at least one episode")
    rows = [m.as_row() if isinstance(m, EpisodeMetrics) else dict(m) for m in metrics]
    summary = {}
    for key in rows[0]:
        values = [float(r[key]) for r in rows]
        mean = math.fsum(values) / len(values)
        std = statistics.stdev(values) if len(values) > 1 else 0.0
        summary[key] = (mean, std)
    return summary


def format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if value == 0.0:
            value = 0.0  # drop the sign of -0.0
        return f"{value:.6g}"
    return str(value)


def write_csv(rows: Iterable[Sequence[Any]], header: Sequence[str], path: str | Path) -> None:
    """Write ``header`` then ``rows``; floats use 6 significant digits."""
    header = list(header)
    rendered = []
    for i, row in enumerate(rows):
        row = list(row)
        if len(row) != len(header):
            raise UsageError(f"row {i} has {len(row)} columns, header has {len(header)}")
        rendered.append([format_value(v) for v in row])
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rendered)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
