"""NSI / NSSI sharing decisions for allocation and requirement updates.

Both procedures are decision ladders evaluated on an inventory snapshot;
the first rung that applies wins and ties always go to the lowest id.
Decisions are pure; ``apply_allocation`` and ``apply_update`` return a new
inventory with the decision carried out.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

from ..model import (
    ConfigurationError,
    NotFoundError,
    NssiInstance,
    ResourceVector,
    Segment,
)

Kind = tuple[Segment, str]


@dataclass(frozen=True)
class NetworkRequirements:
    demand: ResourceVector
    required_nssi_kinds: tuple[Kind, ...]
    sharing_allowed: bool = True
    performance_floor: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "demand", ResourceVector(self.demand))
        kinds = tuple(dict.fromkeys((Segment(s) if not isinstance(s, Segment) else s, str(k))
                                    for s, k in self.required_nssi_kinds))
        object.__setattr__(self, "required_nssi_kinds", kinds)

    def merged(self, other: "NetworkRequirements") -> "NetworkRequirements":
        """Requirements of an NSI after it starts serving ``other`` as well."""
        return NetworkRequirements(
            self.demand + other.demand,
            self.required_nssi_kinds + other.required_nssi_kinds,
            self.sharing_allowed and other.sharing_allowed,
            max(self.performance_floor, other.performance_floor),
        )


@dataclass(frozen=True)
class NssiTemplate:
    segment: Segment
    kind_tag: str
    capacity: ResourceVector
    performance: float = 1.0
    shareable: bool = True

    @property
    def kind(self) -> Kind:
        return (self.segment, self.kind_tag)


@dataclass
class NsiRecord:
    nsi_id: int
    requirements: NetworkRequirements
    nssi_ids: list[int]


@dataclass(frozen=True)
class PolicyFlags:
    allow_nsi_sharing: bool = True
    allow_nssi_sharing: bool = True


@dataclass
class Inventory:
    nsis: dict[int, NsiRecord]
    nssis: dict[int, NssiInstance]
    templates: dict[Kind, NssiTemplate]
    free_capacity: ResourceVector  # infrastructure left for new NSSIs

    def copy(self) -> "Inventory":
        return copy.deepcopy(self)

    def check(self) -> None:
        for nssi in self.nssis.values():
            nssi.check()
        for nsi in self.nsis.values():
            for nid in nsi.nssi_ids:
                if nsi.nsi_id not in self.nssis[nid].shares:
                    raise ConfigurationError(f"NSI {nsi.nsi_id} lists NSSI {nid} but is not attached")

    def performance(self, nsi_id: int) -> float:
        ids = self.nsis[nsi_id].nssi_ids
        return min((self.nssis[n].performance for n in ids), default=0.0)

    def kinds_of(self, nsi_id: int) -> dict[Kind, int]:
        return {self.nssis[n].kind: n for n in self.nsis[nsi_id].nssi_ids}

    def _next_nsi_id(self) -> int:
        return max(self.nsis, default=0) + 1

    def _next_nssi_id(self) -> int:
        return max(self.nssis, default=0) + 1


@dataclass(frozen=True)
class SliceBlueprint:
    template_id: str
    constituent_kinds: tuple[Kind, ...]
    reused_nssi_ids: tuple[int, ...]
    new_nssi_specs: tuple[Kind, ...]

    def __post_init__(self) -> None:
        if len(self.reused_nssi_ids) + len(self.new_nssi_specs) != len(self.constituent_kinds):
            raise ConfigurationError("blueprint does not cover its constituent kinds")


@dataclass(frozen=True)
class ReuseNsi:
    nsi_id: int


@dataclass(frozen=True)
class CreateNsi:
    blueprint: SliceBlueprint


@dataclass(frozen=True)
class Infeasible:
    reason: str = ""


AllocationDecision = Union[ReuseNsi, CreateNsi, Infeasible]


@dataclass(frozen=True)
class NssiStep:
    """One NSSI-level action of a reconfiguration plan.

    ``op`` is one of ``grow`` (enlarge this NSI's share on an existing
    NSSI), ``replace`` (move off ``nssi_id`` onto a new unshared NSSI),
    ``attach`` (join an existing NSSI for a newly required kind) or
    ``create`` (new NSSI for a newly required kind).
    """

    op: str
    kind: Kind
    nssi_id: int | None = None


@dataclass(frozen=True)
class NoChange:
    pass


@dataclass(frozen=True)
class Reconfigure:
    plan: tuple[NssiStep, ...]


@dataclass(frozen=True)
class Migrate:
    target: Union[ReuseNsi, CreateNsi]


UpdateDecision = Union[NoChange, Reconfigure, Migrate, Infeasible]


def translate_service_request(
    service_profile_id: str, catalog: Mapping[str, NetworkRequirements]
) -> NetworkRequirements:
    """Service profile to network requirements, by catalog lookup."""
    try:
        return catalog[service_profile_id]
    except KeyError:
        raise NotFoundError(f"unknown service profile {service_profile_id!r}") from None


def _check_kinds(req: NetworkRequirements, inventory: Inventory) -> None:
    for kind in req.required_nssi_kinds:
        if kind not in inventory.templates:
            raise ConfigurationError(f"unknown NSSI kind {kind[0].value}/{kind[1]}")


def _nsi_sharing_ok(inventory: Inventory, nsi_ids: Sequence[int]) -> bool:
    return all(inventory.nsis[n].requirements.sharing_allowed for n in nsi_ids if n in inventory.nsis)


def _joinable(
    nssi: NssiInstance,
    req: NetworkRequirements,
    inventory: Inventory,
    flags: PolicyFlags,
    exclude: int | None = None,
) -> bool:
    """Can an NSI with requirements ``req`` take a share of ``nssi``?"""
    others = [n for n in nssi.shares if n != exclude]
    if others:
        if not (nssi.shareable and flags.allow_nssi_sharing and req.sharing_allowed):
            return False
        if not _nsi_sharing_ok(inventory, others):
            return False
    return nssi.performance >= req.performance_floor and req.demand.le(nssi.headroom(exclude))


def _new_nssi_ok(kind: Kind, req: NetworkRequirements, inventory: Inventory) -> bool:
    t = inventory.templates[kind]
    return t.performance >= req.performance_floor and req.demand.le(t.capacity)


def _pool_covers(kinds: Sequence[Kind], inventory: Inventory) -> bool:
    need = ResourceVector.zeros(len(inventory.free_capacity))
    for kind in kinds:
        need = need + inventory.templates[kind].capacity
    return need.le(inventory.free_capacity)


def _reusable_nsi(nsi_id: int, req: NetworkRequirements, inventory: Inventory, flags: PolicyFlags) -> bool:
    nsi = inventory.nsis[nsi_id]
    if not (flags.allow_nsi_sharing and req.sharing_allowed and nsi.requirements.sharing_allowed):
        return False
    kinds = inventory.kinds_of(nsi_id)
    if any(k not in kinds for k in req.required_nssi_kinds):
        return False
    if inventory.performance(nsi_id) < req.performance_floor:
        return False
    return all(req.demand.le(inventory.nssis[n].headroom()) for n in nsi.nssi_ids)


def allocate_nsi(
    requirements: NetworkRequirements,
    inventory: Inventory,
    policy_flags: PolicyFlags = PolicyFlags(),
    exclude_nsi: int | None = None,
) -> AllocationDecision:
    """Reuse a compatible NSI, else build one from shared or new NSSIs, else Infeasible."""
    _check_kinds(requirements, inventory)
    for nsi_id in sorted(inventory.nsis):
        if nsi_id != exclude_nsi and _reusable_nsi(nsi_id, requirements, inventory, policy_flags):
            return ReuseNsi(nsi_id)
    reused: list[int] = []
    new: list[Kind] = []
    for kind in requirements.required_nssi_kinds:
        match = next(
            (
                n.nssi_id
                for n in sorted(inventory.nssis.values(), key=lambda n: n.nssi_id)
                if n.kind == kind and _joinable(n, requirements, inventory, policy_flags)
            ),
            None,
        )
        if match is not None:
            reused.append(match)
        elif _new_nssi_ok(kind, requirements, inventory):
            new.append(kind)
        else:
            return Infeasible(f"no NSSI can serve {kind[0].value}/{kind[1]}")
    if not _pool_covers(new, inventory):
        return Infeasible("not enough infrastructure capacity for new NSSIs")
    reused_kinds = [inventory.nssis[n].kind for n in reused]
    template_id = "+".join(f"{s.value}/{k}" for s, k in requirements.required_nssi_kinds)
    return CreateNsi(SliceBlueprint(template_id, tuple(reused_kinds) + tuple(new), tuple(reused), tuple(new)))


def update_requirements(
    nsi_id: int,
    new_requirements: NetworkRequirements,
    inventory: Inventory,
    policy_flags: PolicyFlags = PolicyFlags(),
) -> UpdateDecision:
    """Keep, reconfigure, migrate, or give up on an NSI whose requirements changed."""
    if nsi_id not in inventory.nsis:
        raise NotFoundError(f"unknown NSI {nsi_id}")
    _check_kinds(new_requirements, inventory)
    req = new_requirements
    nsi = inventory.nsis[nsi_id]
    kinds = inventory.kinds_of(nsi_id)

    def sharing_ok(nssi: NssiInstance) -> bool:
        return req.sharing_allowed or set(nssi.shares) <= {nsi_id}

    constituents = [inventory.nssis[n] for n in sorted(nsi.nssi_ids)]
    supported = (
        all(k in kinds for k in req.required_nssi_kinds)
        and all(n.performance >= req.performance_floor for n in constituents)
        and all(req.demand.le(n.shares[nsi_id]) for n in constituents)
        and all(sharing_ok(n) for n in constituents)
    )
    if supported:
        return NoChange()

    plan: list[NssiStep] = []
    new_kinds: list[Kind] = []
    feasible = True
    for nssi in constituents:
        fine = nssi.performance >= req.performance_floor and sharing_ok(nssi)
        if fine and req.demand.le(nssi.shares[nsi_id]):
            continue
        if fine and req.demand.le(nssi.headroom(exclude=nsi_id)):
            plan.append(NssiStep("grow", nssi.kind, nssi.nssi_id))
        elif nssi.kind in inventory.templates and _new_nssi_ok(nssi.kind, req, inventory):
            plan.append(NssiStep("replace", nssi.kind, nssi.nssi_id))
            new_kinds.append(nssi.kind)
        else:
            feasible = False
            break
    if feasible:
        for kind in req.required_nssi_kinds:
            if kind in kinds:
                continue
            match = next(
                (
                    n.nssi_id
                    for n in sorted(inventory.nssis.values(), key=lambda n: n.nssi_id)
                    if n.kind == kind and _joinable(n, req, inventory, policy_flags, exclude=nsi_id)
                ),
                None,
            )
            if match is not None:
                plan.append(NssiStep("attach", kind, match))
            elif _new_nssi_ok(kind, req, inventory):
                plan.append(NssiStep("create", kind))
                new_kinds.append(kind)
            else:
                feasible = False
                break
    if feasible and _pool_covers(new_kinds, inventory):
        return Reconfigure(tuple(plan))

    target = allocate_nsi(req, inventory, policy_flags, exclude_nsi=nsi_id)
    if isinstance(target, (ReuseNsi, CreateNsi)):
        return Migrate(target)
    return Infeasible("no reconfiguration or alternative NSI satisfies the new requirements")


def _new_nssi(inventory: Inventory, kind: Kind, shareable: bool | None = None) -> NssiInstance:
    t = inventory.templates[kind]
    inventory.free_capacity = inventory.free_capacity - t.capacity
    nssi = NssiInstance(
        inventory._next_nssi_id(),
        t.segment,
        t.kind_tag,
        t.capacity,
        t.shareable if shareable is None else shareable,
        t.performance,
    )
    inventory.nssis[nssi.nssi_id] = nssi
    return nssi


def apply_allocation(
    inventory: Inventory, requirements: NetworkRequirements, decision: AllocationDecision
) -> tuple[Inventory, int]:
    """Carry out an allocation decision on a copy of ``inventory``; returns it and the NSI id."""
    inv = inventory.copy()
    if isinstance(decision, ReuseNsi):
        nsi = inv.nsis[decision.nsi_id]
        for n in nsi.nssi_ids:
            share = inv.nssis[n].shares[nsi.nsi_id]
            inv.nssis[n].shares[nsi.nsi_id] = share + requirements.demand
        nsi.requirements = nsi.requirements.merged(requirements)
        inv.check()
        return inv, nsi.nsi_id
    if isinstance(decision, CreateNsi):
        nsi_id = inv._next_nsi_id()
        ids = list(decision.blueprint.reused_nssi_ids)
        for kind in decision.blueprint.new_nssi_specs:
            ids.append(_new_nssi(inv, kind).nssi_id)
        for n in ids:
            inv.nssis[n].shares[nsi_id] = requirements.demand
        inv.nsis[nsi_id] = NsiRecord(nsi_id, requirements, sorted(ids))
        inv.check()
        return inv, nsi_id
    raise ConfigurationError("cannot apply an infeasible allocation")


def apply_update(
    inventory: Inventory, nsi_id: int, new_requirements: NetworkRequirements, decision: UpdateDecision
) -> Inventory:
    """Carry out an update decision on a copy of ``inventory``."""
    req = new_requirements
    if isinstance(decision, NoChange):
        inv = inventory.copy()
        inv.nsis[nsi_id].requirements = req
        return inv
    if isinstance(decision, Reconfigure):
        inv = inventory.copy()
        nsi = inv.nsis[nsi_id]
        for step in decision.plan:
            if step.op == "grow":
                inv.nssis[step.nssi_id].shares[nsi_id] = req.demand
            elif step.op == "replace":
                del inv.nssis[step.nssi_id].shares[nsi_id]
                nsi.nssi_ids.remove(step.nssi_id)
                fresh = _new_nssi(inv, step.kind, shareable=False)
                fresh.shares[nsi_id] = req.demand
                nsi.nssi_ids.append(fresh.nssi_id)
            elif step.op == "attach":
                inv.nssis[step.nssi_id].shares[nsi_id] = req.demand
                nsi.nssi_ids.append(step.nssi_id)
            elif step.op == "create":
                fresh = _new_nssi(inv, step.kind)
                fresh.shares[nsi_id] = req.demand
                nsi.nssi_ids.append(fresh.nssi_id)
            else:
                raise ConfigurationError(f"unknown plan step {step.op!r}")
        nsi.nssi_ids.sort()
        nsi.requirements = req
        inv.check()
        return inv
    if isinstance(decision, Migrate):
        inv = inventory.copy()
        for n in inv.nsis.pop(nsi_id).nssi_ids:
            del inv.nssis[n].shares[nsi_id]
        inv, _ = apply_allocation(inv, req, decision.target)
        return inv
    raise ConfigurationError("cannot apply an infeasible update")


def describe_decision(decision: AllocationDecision | UpdateDecision) -> dict:
    """Plain-data rendering of a decision, e.g. for fixtures and reports."""
    name = type(decision).__name__
    if isinstance(decision, ReuseNsi):
        return {"decision": name, "nsi": decision.nsi_id}
    if isinstance(decision, CreateNsi):
        bp = decision.blueprint
        return {
            "decision": name,
            "reused": list(bp.reused_nssi_ids),
            "new": [[s.value, k] for s, k in bp.new_nssi_specs],
        }
    if isinstance(decision, Reconfigure):
        return {"decision": name, "plan": [[st.op, st.kind[0].value, st.kind[1], st.nssi_id] for st in decision.plan]}
    if isinstance(decision, Migrate):
        return {"decision": name, "target": describe_decision(decision.target)}
    return {"decision": name}
