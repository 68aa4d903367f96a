import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slicesim.config import bundled
from slicesim.experiments import read_slice_table, schedule_report
from slicesim.model import ConfigurationError
from slicesim.orchestrator.scheduler import (
    CpuSchedule,
    _first_fit_decreasing,
    ScheduledSlice,
    accommodating_cpu,
    can_accommodate,
    schedule_slices,
)


def independent_check(schedule, slices, n_cpus):
    assert set(schedule.assignment) == {s.slice_id for s in slices}
    for c in range(n_cpus):
        mine = [s for s in slices if schedule.assignment[s.slice_id] == c]
        for t in {t for s in mine for t in range(s.start, s.end)}:
            assert sum(s.demand_fraction for s in mine if s.start <= t < s.end) <= 1 + 1e-9


def test_two_halves_share_one_cpu():
    s = schedule_slices([ScheduledSlice(1, 0.5, 0, 4), ScheduledSlice(2, 0.5, 2, 6)], 1)
    assert s.assignment == {1: 0, 2: 0}


def test_two_overlapping_sixties_do_not_fit_one_cpu():
    assert schedule_slices([ScheduledSlice(1, 0.6, 0, 4), ScheduledSlice(2, 0.6, 2, 6)], 1) is None


def test_exact_fallback_finds_what_first_fit_misses():
    # FFD pairs the two 0.4 slices and strands the last 0.3; the only packing is
    # {.5, .5}, {.4, .3, .3}, {.4, .3, .3}
    slices = [
        ScheduledSlice("a", 0.5, 0, 2),
        ScheduledSlice("b", 0.5, 0, 2),
        ScheduledSlice("c", 0.4, 0, 2),
        ScheduledSlice("d", 0.4, 0, 2),
        ScheduledSlice("e", 0.3, 0, 2),
        ScheduledSlice("f", 0.3, 0, 2),
        ScheduledSlice("g", 0.3, 0, 2),
        ScheduledSlice("h", 0.3, 0, 2),
    ]
    ordered = sorted(slices, key=lambda s: (-s.demand_fraction, s.slice_id))
    assert _first_fit_decreasing(ordered, 3) is None
    sched = schedule_slices(slices, 3)
    assert sched is not None and sched.verify()
    independent_check(sched, slices, 3)


def test_slice_validation():
    with pytest.raises(ConfigurationError):
        ScheduledSlice(1, 0.0, 0, 1)
    with pytest.raises(ConfigurationError):
        ScheduledSlice(1, 0.5, 3, 3)
    with pytest.raises(ConfigurationError):
        schedule_slices([ScheduledSlice(1, 0.5, 0, 1), ScheduledSlice(1, 0.5, 0, 1)], 2)


def test_figure5_fixture():
    slices = read_slice_table(bundled("cpu_windows.csv"))
    sched = schedule_slices(slices, 4)
    independent_check(sched, slices, 4)
    # slices 2 and 3 run in disjoint windows and share a CPU
    assert sched.assignment[2] == sched.assignment[3]
    _, means = schedule_report(sched, range(0, 16))
    assert all(m < 0.5 for m in means)
    assert can_accommodate(sched, 4, 0.2, (0, 16))
    assert CpuSchedule.label(accommodating_cpu(sched, 4, 0.2, (0, 16))) == "cpu1"


def test_busy_fixture_rejects_probe():
    slices = read_slice_table(bundled("cpu_windows_busy.csv"))
    sched = schedule_slices(slices, 4)
    assert not can_accommodate(sched, 4, 0.2, (0, 16))


def test_no_splitting_across_cpus():
    sched = schedule_slices([ScheduledSlice(1, 0.85, 0, 4), ScheduledSlice(2, 0.85, 0, 4)], 2)
    # 15% free on each CPU is 30% in total, but no single CPU has 20%
    assert not can_accommodate(sched, 2, 0.2, (0, 4))
    assert can_accommodate(sched, 2, 0.15, (0, 4))


def test_empty_schedule_accepts_on_cpu1():
    sched = schedule_slices([], 2)
    assert accommodating_cpu(sched, 2, 0.2, (0, 16)) == 0


def test_probe_validation():
    sched = schedule_slices([], 1)
    with pytest.raises(ConfigurationError):
        can_accommodate(sched, 1, 1.5, (0, 2))
    with pytest.raises(ConfigurationError):
        can_accommodate(sched, 1, 0.5, (2, 2))


slice_st = st.builds(
    lambda d, start, length: (d / 20, start, start + length),
    st.integers(1, 20),
    st.integers(0, 10),
    st.integers(1, 6),
)


@settings(max_examples=60, deadline=None)
@given(st.lists(slice_st, max_size=10), st.integers(1, 4))
def test_any_schedule_satisfies_capacity(rows, n_cpus):
    slices = [ScheduledSlice(i, d, a, b) for i, (d, a, b) in enumerate(rows)]
    sched = schedule_slices(slices, n_cpus)
    if sched is not None:
        assert sched.verify()
        independent_check(sched, slices, n_cpus)
    elif n_cpus ** len(slices) <= 5000:
        assert not any(feasible(slices, combo, n_cpus) for combo in itertools.product(range(n_cpus), repeat=len(slices)))


def feasible(slices, combo, n_cpus):
    for c in range(n_cpus):
        mine = [s for s, k in zip(slices, combo) if k == c]
        for t in {t for s in mine for t in range(s.start, s.end)}:
            if sum(s.demand_fraction for s in mine if s.start <= t < s.end) > 1 + 1e-9:
                return False
    return True


def test_read_slice_table_names_bad_line(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("slice_id,demand_fraction,start,end\n1,0.5,0,2\n2,abc,0,2\n")
    with pytest.raises(ConfigurationError, match=r"s\.csv:3"):
        read_slice_table(p)
    p.write_text("id,d,s,e\n")
    with pytest.raises(ConfigurationError, match=r":1:"):
        read_slice_table(p)
