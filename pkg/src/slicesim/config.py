"""Scenario files: YAML documents validated against a strict schema.

Unknown keys anywhere are rejected. Every block except ``resources`` and
``slice_types`` is optional and falls back to the defaults below.

.. code-block:: yaml

    name: REF-A
    resources:
      dimensions: [cpu, bandwidth, access]
      capacity: [10, 10, 10]
    slice_types:
      - {id: 0, class: GS, demand: [2, 1, 1], utility_rate: 3,
         arrival_prob: 0.4, departure_prob: 0.05, patience_slots: 3}
    rewards: {r_accept_gs: 2, r_accept_be: 1, r_drop_gs: -2, r_drop_be: 0,
              r_scaledown_penalty: -0.1}
    queue_capacity: 8              # requests
    horizon: 5000                  # slots
    max_decisions_per_slot: null   # null = serve the whole queue every slot
    qlearning: {gamma: 0.95, episodes: 20, ...}
    genetic: {population_size: 32, generations: 100, ...}
    evaluation: {episodes: 10}
    orchestrator: {pool_capacity: [...], templates: [...], nssis: [...],
                   nsis: [...], catalog: {...}, policy: {...}}
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .env import RewardParams, Scenario
from .model import ConfigurationError, NssiInstance, ResourceVector, Segment, SliceClass, SliceTypeSpec
from .orchestrator.sharing import Inventory, NetworkRequirements, NsiRecord, NssiTemplate, PolicyFlags
from .policies.genetic import GaParams
from .policies.qlearning import QlHyperparams


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ResourcesModel(_Strict):
    dimensions: list[str] = Field(default_factory=lambda: ["cpu", "bandwidth", "access"])
    capacity: list[float]


class SliceTypeModel(_Strict):
    id: int
    name: str = ""
    slice_class: Literal["GS", "BE"] = Field(alias="class")
    demand: list[float]
    min_fraction: float = 1.0
    utility_rate: float = 1.0
    arrival_prob: float
    departure_prob: float
    patience_slots: int = 0


class RewardsModel(_Strict):
    r_accept_gs: float = 2.0
    r_accept_be: float = 1.0
    r_drop_gs: float = -2.0
    r_drop_be: float = 0.0
    r_scaledown_penalty: float = -0.1


class QlModel(_Strict):
    alpha: float = 0.5
    alpha_decay_visits: Optional[float] = 1000.0
    gamma: float = 0.95
    epsilon_start: float = 0.3
    epsilon_end: float = 0.01
    episodes: int = 20
    levels: int = 4
    queue_clamp: int = 5
    train_horizon: Optional[int] = None
    q_init: float = 0.0


class GaModel(_Strict):
    population_size: int = 32
    crossover_prob: float = 0.9
    mutation_prob_per_bit: Optional[float] = None
    elite_count: int = 2
    generations: int = 100
    fitness_seeds: int = 3
    fitness_horizon: Optional[int] = None


class EvaluationModel(_Strict):
    episodes: int = Field(10, ge=1)


class RequirementsModel(_Strict):
    demand: list[float]
    kinds: list[tuple[str, str]]
    sharing_allowed: bool = True
    performance_floor: float = 0.0


class TemplateModel(_Strict):
    segment: str
    kind: str
    capacity: list[float]
    performance: float = 1.0
    shareable: bool = True


class NssiModel(TemplateModel):
    id: int


class NsiModel(_Strict):
    id: int
    requirements: RequirementsModel
    nssis: list[int]


class PolicyFlagsModel(_Strict):
    allow_nsi_sharing: bool = True
    allow_nssi_sharing: bool = True


class OrchestratorModel(_Strict):
    pool_capacity: list[float]
    templates: list[TemplateModel] = Field(default_factory=list)
    nssis: list[NssiModel] = Field(default_factory=list)
    nsis: list[NsiModel] = Field(default_factory=list)
    catalog: dict[str, RequirementsModel] = Field(default_factory=dict)
    policy: PolicyFlagsModel = Field(default_factory=PolicyFlagsModel)


class SharingCaseModel(_Strict):
    name: str
    inventory: OrchestratorModel
    op: Literal["allocate", "update"]
    nsi: Optional[int] = None
    request: RequirementsModel
    expect: dict


class SharingFixtureModel(_Strict):
    model_config = ConfigDict(extra="allow")
    cases: list[SharingCaseModel]


class ScenarioModel(_Strict):
    name: str = "scenario"
    resources: ResourcesModel
    slice_types: list[SliceTypeModel]
    rewards: RewardsModel = Field(default_factory=RewardsModel)
    queue_capacity: int = 8
    horizon: int = 5000
    max_decisions_per_slot: Optional[int] = None
    qlearning: QlModel = Field(default_factory=QlModel)
    genetic: GaModel = Field(default_factory=GaModel)
    evaluation: EvaluationModel = Field(default_factory=EvaluationModel)
    orchestrator: Optional[OrchestratorModel] = None


@dataclass
class OrchestratorConfig:
    inventory: Inventory
    catalog: dict[str, NetworkRequirements]
    flags: PolicyFlags


@dataclass
class ScenarioConfig:
    scenario: Scenario
    qlearning: QlHyperparams
    genetic: GaParams
    eval_episodes: int = 10
    orchestrator: OrchestratorConfig | None = None
    source: str = ""
    extras: dict = field(default_factory=dict)


def _requirements(m: RequirementsModel) -> NetworkRequirements:
    return NetworkRequirements(
        ResourceVector(m.demand),
        tuple((Segment.parse(s), k) for s, k in m.kinds),
        m.sharing_allowed,
        m.performance_floor,
    )


def _orchestrator(m: OrchestratorModel, n_dims: int) -> OrchestratorConfig:
    def vec(values: list[float], what: str) -> ResourceVector:
        if len(values) != n_dims:
            raise ConfigurationError(f"orchestrator: {what} needs {n_dims} amounts")
        return ResourceVector(values)

    templates = {}
    for t in m.templates:
        tpl = NssiTemplate(Segment.parse(t.segment), t.kind, vec(t.capacity, f"template {t.kind}"),
                           t.performance, t.shareable)
        templates[tpl.kind] = tpl
    nssis = {}
    for n in m.nssis:
        if n.id in nssis:
            raise ConfigurationError(f"orchestrator: duplicate NSSI id {n.id}")
        nssis[n.id] = NssiInstance(n.id, Segment.parse(n.segment), n.kind, vec(n.capacity, f"NSSI {n.id}"),
                                   n.shareable, n.performance)
    nsis = {}
    for rec in m.nsis:
        req = _requirements(rec.requirements)
        vec(list(req.demand), f"NSI {rec.id} demand")
        for nid in rec.nssis:
            if nid not in nssis:
                raise ConfigurationError(f"orchestrator: NSI {rec.id} references unknown NSSI {nid}")
            nssis[nid].shares[rec.id] = req.demand
        nsis[rec.id] = NsiRecord(rec.id, req, sorted(rec.nssis))
    inventory = Inventory(nsis, nssis, templates, vec(m.pool_capacity, "pool_capacity"))
    inventory.check()
    catalog = {}
    for key, req in m.catalog.items():
        catalog[key] = _requirements(req)
        vec(list(catalog[key].demand), f"catalog entry {key}")
    flags = PolicyFlags(m.policy.allow_nsi_sharing, m.policy.allow_nssi_sharing)
    return OrchestratorConfig(inventory, catalog, flags)


@dataclass
class SharingCase:
    name: str
    inventory: Inventory
    flags: PolicyFlags
    op: str
    nsi_id: int | None
    requirements: NetworkRequirements
    expect: dict


def _read_yaml(path: Path) -> dict:
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc.strerror or exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: invalid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: top level must be a mapping")
    return data


def _validation_error(source: str, exc: ValidationError) -> ConfigurationError:
    first = exc.errors()[0]
    where = ".".join(str(p) for p in first["loc"])
    return ConfigurationError(f"{source}: {where}: {first['msg']}")


def load_sharing_cases(path: str | Path) -> list[SharingCase]:
    """Decision-table fixtures: inventory, request and the expected decision per case.

    Top-level keys other than ``cases`` are free-form (handy as YAML anchors).
    """
    path = Path(path)
    try:
        m = SharingFixtureModel.model_validate(_read_yaml(path))
    except ValidationError as exc:
        raise _validation_error(str(path), exc) from None
    cases = []
    for c in m.cases:
        try:
            orch = _orchestrator(c.inventory, len(c.inventory.pool_capacity))
        except ConfigurationError as exc:
            raise ConfigurationError(f"{path}: case {c.name}: {exc}") from None
        if c.op == "update" and c.nsi is None:
            raise ConfigurationError(f"{path}: case {c.name}: update needs an nsi")
        cases.append(SharingCase(c.name, orch.inventory, orch.flags, c.op, c.nsi, _requirements(c.request), c.expect))
    return cases


def build_config(data: dict, source: str = "<memory>") -> ScenarioConfig:
    """Validate a parsed document and build the domain objects it describes."""
    try:
        m = ScenarioModel.model_validate(data)
    except ValidationError as exc:
        raise _validation_error(source, exc) from None
    try:
        types = tuple(
            SliceTypeSpec(
                t.id, SliceClass.parse(t.slice_class), ResourceVector(t.demand), t.min_fraction,
                t.utility_rate, t.arrival_prob, t.departure_prob, t.patience_slots, t.name,
            )
            for t in m.slice_types
        )
        scenario = Scenario(
            tuple(m.resources.dimensions),
            ResourceVector(m.resources.capacity),
            types,
            RewardParams(**m.rewards.model_dump()),
            m.queue_capacity,
            m.horizon,
            m.max_decisions_per_slot,
            m.name,
        )
        ql = QlHyperparams(**m.qlearning.model_dump())
        ga = GaParams(**m.genetic.model_dump())
        orch = _orchestrator(m.orchestrator, len(scenario.capacity)) if m.orchestrator else None
    except ConfigurationError as exc:
        raise ConfigurationError(f"{source}: {exc}") from None
    return ScenarioConfig(scenario, ql, ga, m.evaluation.episodes, orch, source)


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    return build_config(_read_yaml(path), str(path))


def bundled(name: str) -> Path:
    """Path of a scenario or fixture shipped with the package."""
    return Path(str(importlib.resources.files("slicesim") / "data" / name))
