"""Domain types shared by the simulator, the policies and the orchestrator."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

TOL = 1e-9


class ConfigurationError(ValueError):
    """Raised when inputs violate a type invariant or a precondition."""


class NotFoundError(KeyError):
    """Raised when a referenced id or profile does not exist."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class ResourceVector(tuple):
    """Immutable vector of non-negative amounts, one per resource dimension."""

    __slots__ = ()

    def __new__(cls, amounts: Iterable[float] = ()) -> "ResourceVector":
        values = tuple(float(a) for a in amounts)
        for v in values:
            if not v >= -TOL:  # also catches NaN
                raise ConfigurationError(f"resource amounts must be >= 0, got {values}")
        return super().__new__(cls, tuple(max(v, 0.0) for v in values))

    @classmethod
    def zeros(cls, n: int) -> "ResourceVector":
        return cls([0.0] * n)

    def _check(self, other: Sequence[float]) -> None:
        if len(self) != len(other):
            raise ConfigurationError(
                f"dimension mismatch: {len(self)} vs {len(other)}"
            )

    def __add__(self, other: Sequence[float]) -> "ResourceVector":  # type: ignore[override]
        self._check(other)
        return ResourceVector(a + b for a, b in zip(self, other))

    def __sub__(self, other: Sequence[float]) -> "ResourceVector":
        self._check(other)
        return ResourceVector(a - b for a, b in zip(self, other))

    def scaled(self, factor: float) -> "ResourceVector":
        return ResourceVector(a * factor for a in self)

    def le(self, other: Sequence[float], tol: float = TOL) -> bool:
        """Componentwise ``self <= other`` up to ``tol``."""
        self._check(other)
        return all(a <= b + tol for a, b in zip(self, other))

    def l1(self) -> float:
        return sum(self)

    def __repr__(self) -> str:
        return f"ResourceVector({list(self)})"


def fits(demand: Sequence[float], free: Sequence[float]) -> bool:
    """True iff ``demand <= free`` in every component."""
    if len(demand) != len(free):
        raise ConfigurationError(f"dimension mismatch: {len(demand)} vs {len(free)}")
    return all(d <= f + TOL for d, f in zip(demand, free))


class ResourcePool:
    """Capacity plus a running allocation that never exceeds it."""

    def __init__(self, capacity: Sequence[float], allocated: Sequence[float] | None = None):
        self.capacity = ResourceVector(capacity)
        self._alloc = [0.0] * len(self.capacity)
        if allocated is not None:
            self.allocate(allocated)

    @property
    def allocated(self) -> ResourceVector:
        return ResourceVector(self._alloc)

    def free(self) -> ResourceVector:
        return ResourceVector(c - a for c, a in zip(self.capacity, self._alloc))

    def free_list(self) -> list[float]:
        # hot path for the simulator; may carry -1e-15 style residue
        return [c - a for c, a in zip(self.capacity, self._alloc)]

    def allocate(self, amount: Sequence[float]) -> None:
        if len(amount) != len(self._alloc):
            raise ConfigurationError("dimension mismatch in allocate")
        new = [a + x for a, x in zip(self._alloc, amount)]
        if any(n > c + TOL for n, c in zip(new, self.capacity)):
            raise ConfigurationError(f"allocation {list(amount)} exceeds free capacity {list(self.free())}")
        self._alloc = new

    def release(self, amount: Sequence[float]) -> None:
        if len(amount) != len(self._alloc):
            raise ConfigurationError("dimension mismatch in release")
        new = [a - x for a, x in zip(self._alloc, amount)]
        if any(n < -TOL for n in new):
            raise ConfigurationError("release of more than was allocated")
        self._alloc = [n if n > 0.0 else 0.0 for n in new]

    def copy(self) -> "ResourcePool":
        pool = ResourcePool(self.capacity)
        pool._alloc = list(self._alloc)
        return pool

    def __repr__(self) -> str:
        return f"ResourcePool(capacity={list(self.capacity)}, allocated={self._alloc})"


def utilization(pool: ResourcePool) -> list[float]:
    """Allocated over capacity, per dimension."""
    if any(c <= 0 for c in pool.capacity):
        raise ConfigurationError("utilization undefined for zero-capacity dimension")
    return [a / c for a, c in zip(pool.allocated, pool.capacity)]


class SliceClass(enum.Enum):
    BestEffort = "BE"
    GuaranteedService = "GS"

    @property
    def short(self) -> str:
        return self.value

    @classmethod
    def parse(cls, text: str) -> "SliceClass":
        key = text.strip().upper()
        for member in cls:
            if key in (member.value, member.name.upper()):
                return member
        raise ConfigurationError(f"unknown slice class {text!r}")


@dataclass(frozen=True)
class SliceTypeSpec:
    type_id: int
    slice_class: SliceClass
    demand: ResourceVector
    min_fraction: float = 1.0
    utility_rate: float = 1.0
    arrival_prob: float = 0.0
    departure_prob: float = 0.0
    patience_slots: int = 0
    name: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "demand", ResourceVector(self.demand))
        if not 0.0 < self.min_fraction <= 1.0:
            raise ConfigurationError(f"type {self.type_id}: min_fraction must lie in (0, 1]")
        if self.slice_class is SliceClass.GuaranteedService and self.min_fraction != 1.0:
            raise ConfigurationError(f"type {self.type_id}: GS slices are inelastic (min_fraction must be 1.0)")
        for name in ("arrival_prob", "departure_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigurationError(f"type {self.type_id}: {name} must lie in [0, 1]")
        if self.utility_rate < 0:
            raise ConfigurationError(f"type {self.type_id}: utility_rate must be >= 0")
        if self.patience_slots < 0:
            raise ConfigurationError(f"type {self.type_id}: patience_slots must be >= 0")

    @property
    def elastic(self) -> bool:
        return self.min_fraction < 1.0


@dataclass
class SliceRequest:
    request_id: int
    type_id: int
    arrival_slot: int
    remaining_patience: int


@dataclass
class NetworkSliceInstance:
    nsi_id: int
    spec: SliceTypeSpec
    scale_fraction: float = 1.0
    admitted_slot: int = 0
    constituent_nssis: list[int] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.spec.min_fraction - TOL <= self.scale_fraction <= 1.0 + TOL:
            raise ConfigurationError(
                f"scale_fraction {self.scale_fraction} outside [{self.spec.min_fraction}, 1]"
            )

    @property
    def type_id(self) -> int:
        return self.spec.type_id

    @property
    def allocation(self) -> ResourceVector:
        return self.spec.demand.scaled(self.scale_fraction)


class Segment(enum.Enum):
    Access = "access"
    Core = "core"
    Transport = "transport"

    @classmethod
    def parse(cls, text: str) -> "Segment":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ConfigurationError(f"unknown segment {text!r}") from None


@dataclass
class NssiInstance:
    """A network slice subnet instance; ``shares`` maps attached NSI id to its load."""

    nssi_id: int
    segment: Segment
    kind_tag: str
    capacity: ResourceVector
    shareable: bool = True
    performance: float = 1.0
    shares: dict[int, ResourceVector] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.capacity = ResourceVector(self.capacity)
        self.check()

    @property
    def kind(self) -> tuple[Segment, str]:
        return (self.segment, self.kind_tag)

    @property
    def attached_nsis(self) -> set[int]:
        return set(self.shares)

    def load(self, exclude: int | None = None) -> ResourceVector:
        total = ResourceVector.zeros(len(self.capacity))
        for nsi_id, share in self.shares.items():
            if nsi_id != exclude:
                total = total + share
        return total

    def headroom(self, exclude: int | None = None) -> ResourceVector:
        load = self.load(exclude)
        return ResourceVector(max(c - l, 0.0) for c, l in zip(self.capacity, load))

    def check(self) -> None:
        if not self.load().le(self.capacity):
            raise ConfigurationError(f"NSSI {self.nssi_id} overloaded")
        if not self.shareable and len(self.shares) > 1:
            raise ConfigurationError(f"NSSI {self.nssi_id} is not shareable but has {len(self.shares)} NSIs")
