from .pareto import AdmissionOption, ObjectiveVector, Sense, admission_options, dominates, pareto_filter
from .scheduler import CpuSchedule, ScheduledSlice, accommodating_cpu, can_accommodate, schedule_slices
from .sharing import (
    CreateNsi,
    Infeasible,
    Inventory,
    Migrate,
    NetworkRequirements,
    NoChange,
    NsiRecord,
    NssiStep,
    NssiTemplate,
    PolicyFlags,
    Reconfigure,
    ReuseNsi,
    SliceBlueprint,
    allocate_nsi,
    apply_allocation,
    apply_update,
    describe_decision,
    translate_service_request,
    update_requirements,
)

__all__ = [
    "AdmissionOption",
    "CpuSchedule",
    "CreateNsi",
    "Infeasible",
    "Inventory",
    "Migrate",
    "NetworkRequirements",
    "NoChange",
    "NsiRecord",
    "NssiStep",
    "NssiTemplate",
    "ObjectiveVector",
    "PolicyFlags",
    "Reconfigure",
    "ReuseNsi",
    "ScheduledSlice",
    "Sense",
    "SliceBlueprint",
    "accommodating_cpu",
    "admission_options",
    "allocate_nsi",
    "apply_allocation",
    "apply_update",
    "can_accommodate",
    "describe_decision",
    "dominates",
    "pareto_filter",
    "schedule_slices",
    "translate_service_request",
    "update_requirements",
]
