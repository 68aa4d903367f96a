import pytest

from slicesim.config import bundled, load_config
from slicesim.env import Scenario
from slicesim.model import ResourceVector, SliceClass, SliceTypeSpec

GS = SliceClass.GuaranteedService
BE = SliceClass.BestEffort


class ScriptedRandom:
    """Stands in for ``random.Random`` and replays a fixed list of uniforms."""

    def __init__(self, values):
        self.values = list(values)
        self.used = 0

    def random(self):
        value = self.values[self.used]
        self.used += 1
        return value

    @property
    def exhausted(self):
        return self.used == len(self.values)


def spec(type_id, cls, demand, arrival=0.5, departure=0.5, min_fraction=1.0, utility=1.0, patience=0):
    return SliceTypeSpec(type_id, cls, ResourceVector(demand), min_fraction, utility, arrival, departure, patience)


def scenario(capacity, types, **kw):
    dims = tuple(f"d{i}" for i in range(len(capacity)))
    return Scenario(dims, ResourceVector(capacity), tuple(types), **kw)


@pytest.fixture(scope="session")
def ref_a():
    return load_config(bundled("ref_a.yaml"))


@pytest.fixture(scope="session")
def toy_ga():
    return load_config(bundled("toy_ga.yaml"))


@pytest.fixture(scope="session")
def toy_ga_shift():
    return load_config(bundled("toy_ga_shift.yaml"))


def pytest_terminal_summary(terminalreporter):
    module = __import__("sys").modules.get("test_acceptance")
    if module and module.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(module.RESULTS, key=lambda s: int(s.split(":")[0][3:])):
            terminalreporter.write_line(line)
