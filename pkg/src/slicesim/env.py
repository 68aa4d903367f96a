"""Slotted-time slice admission environment.

Per-slot event order is fixed:

1. departures: each active instance, in admission order, leaves with its
   type's ``departure_prob`` (one uniform draw per instance);
2. arrivals: each slice type, in ``type_id`` order, produces one request
   with probability ``arrival_prob`` (one uniform draw per type); a full
   queue drops the request on the spot;
3. the queue is served head first, the policy deciding once per request
   (at most ``max_decisions_per_slot`` decisions when that is set);
4. requests left in the queue age by one slot, those with no patience left
   expire;
5. utility accrues for every active instance in proportion to its scale.
"""

from __future__ import annotations

import enum
import functools
import itertools
import math
import random
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Sequence

from .metrics import ClassCounts, EpisodeMetrics
from .model import (
    TOL,
    ConfigurationError,
    NetworkSliceInstance,
    ResourcePool,
    ResourceVector,
    SliceClass,
    SliceRequest,
    SliceTypeSpec,
)

GS = SliceClass.GuaranteedService
BE = SliceClass.BestEffort


class Action(enum.IntEnum):
    Accept = 0
    Reject = 1
    ScaleDownAndAccept = 2


class ContractViolation(RuntimeError):
    """A policy asked for an action whose precondition does not hold."""


@dataclass(frozen=True)
class RewardParams:
    r_accept_gs: float = 2.0
    r_accept_be: float = 1.0
    r_drop_gs: float = -2.0
    r_drop_be: float = 0.0
    r_scaledown_penalty: float = -0.1

    def __post_init__(self) -> None:
        if not (self.r_accept_gs > 0 and self.r_accept_be > 0):
            raise ConfigurationError("accept rewards must be positive")
        if not self.r_accept_gs > self.r_accept_be:
            raise ConfigurationError("r_accept_gs must exceed r_accept_be")
        if not self.r_drop_gs < 0:
            raise ConfigurationError("r_drop_gs must be negative")
        if self.r_drop_be > 0 or self.r_scaledown_penalty > 0:
            raise ConfigurationError("r_drop_be and r_scaledown_penalty must be <= 0")

    def accept(self, cls: SliceClass) -> float:
        return self.r_accept_gs if cls is GS else self.r_accept_be

    def drop(self, cls: SliceClass) -> float:
        return self.r_drop_gs if cls is GS else self.r_drop_be


@dataclass(frozen=True)
class Scenario:
    dimensions: tuple[str, ...]
    capacity: ResourceVector
    slice_types: tuple[SliceTypeSpec, ...]
    rewards: RewardParams = field(default_factory=RewardParams)
    queue_capacity: int = 8
    horizon: int = 5000
    max_decisions_per_slot: int | None = None
    name: str = "scenario"

    def __post_init__(self) -> None:
        object.__setattr__(self, "dimensions", tuple(self.dimensions))
        object.__setattr__(self, "capacity", ResourceVector(self.capacity))
        types = tuple(sorted(self.slice_types, key=lambda t: t.type_id))
        object.__setattr__(self, "slice_types", types)
        if len(self.dimensions) != len(self.capacity):
            raise ConfigurationError("capacity must list one amount per dimension")
        if any(c <= 0 for c in self.capacity):
            raise ConfigurationError("capacities must be positive")
        ids = [t.type_id for t in types]
        if len(set(ids)) != len(ids):
            raise ConfigurationError(f"duplicate slice type ids {ids}")
        for t in types:
            if len(t.demand) != len(self.capacity):
                raise ConfigurationError(f"type {t.type_id}: demand has wrong dimension count")
            if t.demand.l1() <= 0:
                raise ConfigurationError(f"type {t.type_id}: demand must be non-zero")
        if self.queue_capacity < 0:
            raise ConfigurationError("queue_capacity must be >= 0")
        if self.horizon < 1:
            raise ConfigurationError("horizon must be >= 1")
        if self.max_decisions_per_slot is not None and self.max_decisions_per_slot < 1:
            raise ConfigurationError("max_decisions_per_slot must be >= 1")

    def spec(self, type_id: int) -> SliceTypeSpec:
        for t in self.slice_types:
            if t.type_id == type_id:
                return t
        raise ConfigurationError(f"unknown slice type {type_id}")

    def physical_cap(self, type_id: int) -> int:
        """Most instances of one type that fit an empty pool at full scale."""
        demand = self.spec(type_id).demand
        return min(
            math.floor(c / d + TOL) for c, d in zip(self.capacity, demand) if d > 0
        )

    def with_departure_prob(self, slice_class: SliceClass, prob: float) -> "Scenario":
        types = tuple(
            replace(t, departure_prob=prob) if t.slice_class is slice_class else t
            for t in self.slice_types
        )
        return replace(self, slice_types=types)

    def with_types(self, slice_types: Iterable[SliceTypeSpec]) -> "Scenario":
        return replace(self, slice_types=tuple(slice_types))


@functools.lru_cache(maxsize=64)
def utility_bound(scenario: Scenario) -> float:
    """Largest per-slot utility of any full-scale mix of instances that fits the pool.

    With a single type this is ``cap * utility_rate``.
    """
    types = [t for t in scenario.slice_types if t.utility_rate > 0]
    best = 0.0

    def search(i: int, free: list[float], value: float) -> None:
        nonlocal best
        if i == len(types):
            best = max(best, value)
            return
        t = types[i]
        n_max = min(math.floor(f / d + TOL) for f, d in zip(free, t.demand) if d > 0)
        # optimistic bound prunes hopeless branches
        rest = sum(
            u.utility_rate * min(math.floor(f / d + TOL) for f, d in zip(free, u.demand) if d > 0)
            for u in types[i:]
        )
        if value + rest <= best:
            return
        for n in range(n_max, -1, -1):
            search(i + 1, [f - n * d for f, d in zip(free, t.demand)], value + n * t.utility_rate)

    search(0, list(scenario.capacity), 0.0)
    return best


def sample_arrivals(
    rng: random.Random, specs: Sequence[SliceTypeSpec], slot: int, ids: Iterator[int]
) -> list[SliceRequest]:
    """One Bernoulli draw per type, in ``type_id`` order."""
    out = []
    for spec in specs:
        if rng.random() < spec.arrival_prob:
            out.append(SliceRequest(next(ids), spec.type_id, slot, spec.patience_slots))
    return out


def sample_departures(rng: random.Random, active: Iterable[NetworkSliceInstance]) -> set[int]:
    """One Bernoulli draw per active instance, in the iteration order given."""
    return {nsi.nsi_id for nsi in active if rng.random() < nsi.spec.departure_prob}


def compute_scale_down_plan(
    active: Iterable[NetworkSliceInstance],
    free: Sequence[float],
    incoming_demand: Sequence[float],
) -> list[tuple[int, float]] | None:
    """Shrink elastic instances until ``incoming_demand`` fits, or return None.

    Victims are best-effort instances, largest allocation (L1) first, ties by
    id. Each victim is reduced only as far as the remaining shortfall needs.
    """
    shortfall = [max(d - f, 0.0) for d, f in zip(incoming_demand, free)]
    if all(s <= TOL for s in shortfall):
        return []
    victims = [
        n for n in active
        if n.spec.slice_class is BE and n.scale_fraction > n.spec.min_fraction + TOL
    ]
    victims.sort(key=lambda n: (-n.allocation.l1(), n.nsi_id))
    plan = []
    for nsi in victims:
        demand = nsi.spec.demand
        needed = [s / d for s, d in zip(shortfall, demand) if s > TOL and d > 0]
        if not needed:
            continue
        room = nsi.scale_fraction - nsi.spec.min_fraction
        delta = min(max(needed), room)
        new_fraction = nsi.scale_fraction - delta
        if room - delta <= TOL:
            new_fraction = nsi.spec.min_fraction
            delta = room
        plan.append((nsi.nsi_id, new_fraction))
        shortfall = [max(s - delta * d, 0.0) for s, d in zip(shortfall, demand)]
        if all(s <= TOL for s in shortfall):
            return plan
    return None


class Policy:
    """Decision interface consulted by the environment once per queued request."""

    name = "policy"

    def start_episode(self, env: "SliceEnv") -> None:
        pass

    def decide(self, env: "SliceEnv", request: SliceRequest) -> Action:
        raise NotImplementedError

    def record(self, env: "SliceEnv", request: SliceRequest, action: Action, reward: float) -> None:
        pass

    def end_episode(self, env: "SliceEnv") -> None:
        pass


class SliceEnv:
    """Mutable environment state: pool, active instances, queue and counters."""

    def __init__(self, scenario: Scenario, seed: int, trace: list | None = None):
        self.scenario = scenario
        self.rng = random.Random(seed)
        self.slot = 0
        self.pool = ResourcePool(scenario.capacity)
        self.active: dict[int, NetworkSliceInstance] = {}
        self.queue: deque[SliceRequest] = deque()
        self.counts = {cls: ClassCounts() for cls in (GS, BE)}
        self.type_active = {t.type_id: 0 for t in scenario.slice_types}
        self.cumulative_reward = 0.0
        self.total_utility = 0.0
        self.scale_down_events = 0
        self.trace = trace
        self._util_sum = [0.0] * len(scenario.capacity)
        self._specs = {t.type_id: t for t in scenario.slice_types}
        self._request_ids = itertools.count()
        self._nsi_ids = itertools.count()

    # observation helpers

    def spec_of(self, request: SliceRequest) -> SliceTypeSpec:
        return self._specs[request.type_id]

    def free(self) -> list[float]:
        return self.pool.free_list()

    def utilization(self) -> list[float]:
        return [a / c for a, c in zip(self.pool._alloc, self.pool.capacity)]

    def fits_full(self, request: SliceRequest) -> bool:
        demand = self._specs[request.type_id].demand
        return all(d <= f + TOL for d, f in zip(demand, self.pool.free_list()))

    def scale_down_plan(self, request: SliceRequest) -> list[tuple[int, float]] | None:
        if self.fits_full(request):
            return None
        return compute_scale_down_plan(
            self.active.values(), self.pool.free_list(), self._specs[request.type_id].demand
        )

    def legal_actions(self, request: SliceRequest) -> tuple[bool, bool, bool]:
        """Legality mask in action-index order; Reject is always legal."""
        if self.fits_full(request):
            return (True, True, False)
        return (False, True, self.scale_down_plan(request) is not None)

    def scalable_be_count(self) -> int:
        return sum(
            1 for n in self.active.values()
            if n.spec.slice_class is BE and n.scale_fraction > n.spec.min_fraction + TOL
        )

    # transitions

    def _event(self, kind: str, request_id: int | None, type_id: int, nsi_id: int | None, reward: float) -> None:
        if self.trace is not None:
            self.trace.append((self.slot, kind, request_id, type_id, nsi_id, reward))

    def _drop(self, request: SliceRequest, counter: str) -> float:
        cls = self._specs[request.type_id].slice_class
        c = self.counts[cls]
        setattr(c, counter, getattr(c, counter) + 1)
        if counter != "overflow_dropped":
            c.queued -= 1
        reward = self.scenario.rewards.drop(cls)
        self.cumulative_reward += reward
        return reward

    def _admit(self, request: SliceRequest, spec: SliceTypeSpec) -> int:
        nsi = NetworkSliceInstance(next(self._nsi_ids), spec, 1.0, self.slot)
        self.pool.allocate(spec.demand)
        self.active[nsi.nsi_id] = nsi
        self.type_active[spec.type_id] += 1
        return nsi.nsi_id

    def release(self, nsi_id: int) -> None:
        nsi = self.active.pop(nsi_id)
        self.pool.release(nsi.allocation)
        self.type_active[nsi.type_id] -= 1

    def apply_action(self, request: SliceRequest, action: Action) -> float:
        """Apply a decision for the queue head and return its reward."""
        if not self.queue or self.queue[0] is not request:
            raise ContractViolation(f"request {request.request_id} is not at the queue head")
        spec = self._specs[request.type_id]
        rewards = self.scenario.rewards
        action = Action(action)
        if action is Action.Reject:
            self.queue.popleft()
            reward = self._drop(request, "rejected")
            self._event("reject", request.request_id, spec.type_id, None, reward)
            return reward
        if action is Action.Accept:
            if not self.fits_full(request):
                raise ContractViolation(
                    f"Accept for request {request.request_id} whose demand {list(spec.demand)} "
                    f"does not fit free capacity {self.free()}"
                )
            plan: list[tuple[int, float]] = []
        else:
            plan = self.scale_down_plan(request)
            if plan is None:
                raise ContractViolation(
                    f"ScaleDownAndAccept for request {request.request_id} without a feasible plan"
                )
        # all checks passed; mutate
        self.queue.popleft()
        for nsi_id, fraction in plan:
            nsi = self.active[nsi_id]
            before = nsi.allocation
            nsi.scale_fraction = fraction
            self.pool.release(before - nsi.allocation)
            self._event("scale", None, nsi.type_id, nsi_id, rewards.r_scaledown_penalty)
        nsi_id = self._admit(request, spec)
        c = self.counts[spec.slice_class]
        c.accepted += 1
        c.queued -= 1
        self.scale_down_events += len(plan)
        reward = rewards.accept(spec.slice_class) + len(plan) * rewards.r_scaledown_penalty
        self.cumulative_reward += reward
        self._event("accept", request.request_id, spec.type_id, nsi_id, reward)
        return reward

    def step(self, policy: Policy) -> float:
        """Advance one slot; returns the reward collected in it."""
        before = self.cumulative_reward
        rng = self.rng
        # 1. departures
        leaving = [nid for nid, nsi in self.active.items() if rng.random() < nsi.spec.departure_prob]
        for nid in leaving:
            type_id = self.active[nid].type_id
            self.release(nid)
            self._event("depart", None, type_id, nid, 0.0)
        # 2. arrivals
        for req in sample_arrivals(rng, self.scenario.slice_types, self.slot, self._request_ids):
            spec = self._specs[req.type_id]
            c = self.counts[spec.slice_class]
            c.generated += 1
            if len(self.queue) >= self.scenario.queue_capacity:
                reward = self._drop(req, "overflow_dropped")
                self._event("overflow", req.request_id, req.type_id, None, reward)
            else:
                c.queued += 1
                self.queue.append(req)
                self._event("arrive", req.request_id, req.type_id, None, 0.0)
        # 3. decisions
        budget = len(self.queue)
        if self.scenario.max_decisions_per_slot is not None:
            budget = min(budget, self.scenario.max_decisions_per_slot)
        for _ in range(budget):
            head = self.queue[0]
            action = policy.decide(self, head)
            reward = self.apply_action(head, action)
            policy.record(self, head, action, reward)
        # 4. ageing
        if self.queue:
            kept = deque()
            for req in self.queue:
                if req.remaining_patience <= 0:
                    reward = self._drop(req, "expired")
                    self._event("expire", req.request_id, req.type_id, None, reward)
                else:
                    req.remaining_patience -= 1
                    kept.append(req)
            self.queue = kept
        # 5. utility
        self.total_utility += sum(n.spec.utility_rate * n.scale_fraction for n in self.active.values())
        for i, u in enumerate(self.utilization()):
            self._util_sum[i] += u
        self.slot += 1
        return self.cumulative_reward - before

    def metrics(self) -> EpisodeMetrics:
        slots = max(self.slot, 1)
        bound = utility_bound(self.scenario)
        rate = self.total_utility / slots / bound if bound > 0 else 0.0
        return EpisodeMetrics(
            counts={cls: replace(c) for cls, c in self.counts.items()},
            cumulative_reward=self.cumulative_reward,
            mean_utilization=tuple(u / slots for u in self._util_sum),
            normalized_utility_rate=rate,
            scale_down_events=self.scale_down_events,
            horizon=self.slot,
            total_utility=self.total_utility,
            dimensions=self.scenario.dimensions,
        )


def run_episode(
    scenario: Scenario,
    policy: Policy,
    seed: int,
    horizon: int | None = None,
    trace: list | None = None,
) -> EpisodeMetrics:
    horizon = scenario.horizon if horizon is None else horizon
    if horizon < 1:
        raise ConfigurationError("horizon must be >= 1")
    env = SliceEnv(scenario, seed, trace=trace)
    policy.start_episode(env)
    for _ in range(horizon):
        env.step(policy)
    policy.end_episode(env)
    return env.metrics()


TRACE_HEADER = ("slot", "event", "request_id", "type_id", "nsi_id", "reward")
