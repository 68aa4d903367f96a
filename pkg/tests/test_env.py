import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slicesim.env import (
    Action,
    ContractViolation,
    Policy,
    RewardParams,
    SliceEnv,
    compute_scale_down_plan,
    run_episode,
    sample_arrivals,
    sample_departures,
    utility_bound,
)
from slicesim.model import ConfigurationError, NetworkSliceInstance, SliceRequest
from slicesim.policies.greedy import GreedyPolicy

from conftest import BE, GS, ScriptedRandom, scenario, spec


class RandomLegalPolicy(Policy):
    def __init__(self, seed):
        self.rng = random.Random(seed)

    def decide(self, env, request):
        legal = [a for a, ok in zip(Action, env.legal_actions(request)) if ok]
        return self.rng.choice(legal)


class Always(Policy):
    def __init__(self, action):
        self.action = action

    def decide(self, env, request):
        return self.action


def instance(nsi_id, demand, fraction=1.0, min_fraction=0.5, cls=BE):
    return NetworkSliceInstance(nsi_id, spec(0, cls, demand, min_fraction=min_fraction if cls is BE else 1.0), fraction, 0)


# sampling


def test_arrivals_certain_and_impossible():
    types = [spec(0, GS, [1], arrival=1.0), spec(1, BE, [1], arrival=1.0)]
    ids = iter(range(10))
    reqs = sample_arrivals(random.Random(0), types, 3, ids)
    assert [(r.request_id, r.type_id, r.arrival_slot) for r in reqs] == [(0, 0, 3), (1, 1, 3)]
    none = [spec(0, GS, [1], arrival=0.0), spec(1, BE, [1], arrival=0.0)]
    assert sample_arrivals(random.Random(0), none, 0, ids) == []


def test_arrival_rate_matches_bernoulli_mean():
    rng = random.Random(7)
    ids = iter(range(10**6))
    types = [spec(0, GS, [1], arrival=0.3)]
    hits = sum(len(sample_arrivals(rng, types, t, ids)) for t in range(10**5))
    assert abs(hits / 10**5 - 0.3) < 0.01


def test_departures_certain_and_impossible():
    always = [NetworkSliceInstance(i, spec(0, GS, [1], departure=1.0), 1.0, 0) for i in range(3)]
    never = [NetworkSliceInstance(i, spec(0, GS, [1], departure=0.0), 1.0, 0) for i in range(3)]
    assert sample_departures(random.Random(0), always) == {0, 1, 2}
    assert sample_departures(random.Random(0), never) == set()


def test_birth_death_occupancy():
    # one slot of room; a departure and an arrival in the same slot keep it full
    p, q = 0.3, 0.2
    sc = scenario([1], [spec(0, GS, [1], arrival=p, departure=q)])
    m = run_episode(sc, GreedyPolicy(), seed=3, horizon=200_000)
    assert abs(m.mean_utilization[0] - p / (p + q * (1 - p))) < 0.01


# scale-down planning


def test_scale_down_single_victim_exact():
    plan = compute_scale_down_plan([instance(5, [4])], [2], [3])
    assert plan == [(5, 0.75)]


def test_scale_down_without_elastic_victims():
    assert compute_scale_down_plan([instance(1, [4], cls=GS)], [0], [2]) is None
    assert compute_scale_down_plan([], [1], [2]) is None


def test_scale_down_insufficient():
    assert compute_scale_down_plan([instance(1, [4]), instance(2, [2])], [0], [5]) is None


def test_scale_down_victim_order_and_partial_shrink():
    # largest allocation first, ties by id; the second victim only gives what is still missing
    active = [instance(3, [2]), instance(1, [4]), instance(2, [4])]
    plan = compute_scale_down_plan(active, [0], [3])
    assert plan == [(1, 0.5), (2, 0.75)]


def test_scale_down_not_needed():
    assert compute_scale_down_plan([instance(1, [4])], [3], [3]) == []


def test_scale_down_multi_dimension():
    active = [instance(1, [4, 2])]
    plan = compute_scale_down_plan(active, [1, 1], [2, 1.5])
    # shortfall [1, 0.5] needs delta max(1/4, 0.5/2) = 0.25
    assert plan == [(1, 0.75)]


# actions


def _env_with_head(sc, seed=0):
    env = SliceEnv(sc, seed)
    env.rng = ScriptedRandom([0.0] * len(sc.slice_types))
    for req in sample_arrivals(env.rng, sc.slice_types, 0, env._request_ids):
        env.counts[sc.spec(req.type_id).slice_class].generated += 1
        env.counts[sc.spec(req.type_id).slice_class].queued += 1
        env.queue.append(req)
    return env


def test_accept_and_reject_rewards():
    rewards = RewardParams()
    sc = scenario([10], [spec(0, GS, [2], arrival=1.0), spec(1, BE, [1], arrival=1.0, min_fraction=0.5)])
    env = _env_with_head(sc)
    gs, be = env.queue[0], env.queue[1]
    assert env.apply_action(gs, Action.Accept) == rewards.r_accept_gs
    assert env.apply_action(be, Action.Reject) == rewards.r_drop_be
    env = _env_with_head(sc)
    assert env.apply_action(env.queue[0], Action.Reject) == rewards.r_drop_gs < 0


def test_scale_down_reward_counts_victims():
    sc = scenario([4], [spec(0, GS, [2], arrival=1.0), spec(1, BE, [2], min_fraction=0.5)])
    env = SliceEnv(sc, 0)
    be = sc.spec(1)
    for i in range(2):
        env.active[i] = NetworkSliceInstance(i, be, 1.0, 0)
        env.pool.allocate(be.demand)
    env._nsi_ids = iter(range(2, 100))
    req = SliceRequest(0, 0, 0, 0)
    env.queue.append(req)
    env.counts[GS].generated = env.counts[GS].queued = 1
    assert env.legal_actions(req) == (False, True, True)
    reward = env.apply_action(req, Action.ScaleDownAndAccept)
    assert reward == pytest.approx(2 + 2 * -0.1)
    assert sorted(n.scale_fraction for n in env.active.values()) == [0.5, 0.5, 1.0]
    assert env.scale_down_events == 2
    assert abs(env.pool.allocated[0] - 4.0) < 1e-9


def test_illegal_accept_is_a_contract_violation_and_atomic():
    sc = scenario([1], [spec(0, GS, [2], arrival=1.0)])
    env = _env_with_head(sc)
    head = env.queue[0]
    with pytest.raises(ContractViolation):
        env.apply_action(head, Action.Accept)
    with pytest.raises(ContractViolation):
        env.apply_action(head, Action.ScaleDownAndAccept)
    assert list(env.queue) == [head]
    assert env.counts[GS].accepted == 0 and list(env.pool.allocated) == [0]


def test_only_queue_head_can_be_decided():
    sc = scenario([10], [spec(0, GS, [1], arrival=1.0), spec(1, GS, [1], arrival=1.0)])
    env = _env_with_head(sc)
    with pytest.raises(ContractViolation):
        env.apply_action(env.queue[1], Action.Accept)


def test_policy_contract_violation_propagates_from_step():
    sc = scenario([1], [spec(0, GS, [2], arrival=1.0)])
    with pytest.raises(ContractViolation):
        run_episode(sc, Always(Action.Accept), seed=0, horizon=5)


# slot loop


def test_null_slot():
    sc = scenario([4], [spec(0, GS, [1], arrival=0.0)])
    env = SliceEnv(sc, 0)
    assert env.step(GreedyPolicy()) == 0.0
    assert env.slot == 1 and not env.queue and not env.active


def test_zero_queue_capacity_drops_everything():
    sc = scenario([4], [spec(0, GS, [1], arrival=1.0)], queue_capacity=0)
    m = run_episode(sc, GreedyPolicy(), seed=0, horizon=10)
    assert m.counts[GS].overflow_dropped == 10 and m.counts[GS].accepted == 0
    assert m.cumulative_reward == 10 * -2.0


def test_scripted_five_slot_trace():
    # Hand simulation, one decision per slot, capacity 4, queue of 2.
    #   type 0: GS demand 2, utility 3, patience 1
    #   type 1: BE demand 2, utility 1, patience 0
    #   type 2: BE demand 1, utility 1, patience 1
    # Draws per slot: one per active instance (admission order), then one per type.
    # slot 0: r0(t0) r1(t1) queued, r2(t2) overflows; accept r0 -> nsi0; r1 expires
    # slot 1: nsi0 stays; r3(t2) accepted -> nsi1
    # slot 2: both stay; r4(t0) rejected (needs 2, 1 free); r5(t1) expires
    # slot 3: nsi0 leaves; r6(t2) accepted -> nsi2
    # slot 4: both stay; r7(t0) accepted -> nsi3; r8(t2) ages to patience 0
    draws = [
        0.1, 0.2, 0.3,
        0.9, 0.6, 0.7, 0.1,
        0.8, 0.9, 0.2, 0.3, 0.9,
        0.4, 0.95, 0.9, 0.9, 0.2,
        0.6, 0.7, 0.1, 0.8, 0.3,
    ]
    sc = scenario(
        [4],
        [
            spec(0, GS, [2], utility=3, patience=1),
            spec(1, BE, [2], min_fraction=0.5, utility=1, patience=0),
            spec(2, BE, [1], min_fraction=0.5, utility=1, patience=1),
        ],
        queue_capacity=2,
        max_decisions_per_slot=1,
    )
    trace = []
    env = SliceEnv(sc, 0, trace=trace)
    env.rng = ScriptedRandom(draws)
    rewards = [env.step(GreedyPolicy()) for _ in range(5)]
    assert env.rng.exhausted
    assert rewards == [2, 1, -2, 1, 2]
    m = env.metrics()
    gs, be = m.counts[GS], m.counts[BE]
    assert (gs.generated, gs.accepted, gs.rejected, gs.expired, gs.overflow_dropped, gs.queued) == (3, 2, 1, 0, 0, 0)
    assert (be.generated, be.accepted, be.rejected, be.expired, be.overflow_dropped, be.queued) == (6, 2, 0, 2, 1, 1)
    assert m.cumulative_reward == 4
    assert m.total_utility == 18
    assert m.mean_utilization[0] == pytest.approx(0.7)
    assert m.normalized_utility_rate == pytest.approx(18 / 5 / 6)
    assert [r.request_id for r in env.queue] == [8] and env.queue[0].remaining_patience == 0
    assert [e[1] for e in trace if e[0] == 0] == ["arrive", "arrive", "overflow", "accept", "expire"]
    assert sorted(env.active) == [1, 2, 3]


def test_run_episode_rejects_empty_horizon():
    sc = scenario([4], [spec(0, GS, [1])])
    with pytest.raises(ConfigurationError):
        run_episode(sc, GreedyPolicy(), seed=0, horizon=0)


def test_no_arrivals_means_nothing_happens():
    sc = scenario([4], [spec(0, GS, [1], arrival=0.0), spec(1, BE, [1], arrival=0.0, min_fraction=0.5)])
    m = run_episode(sc, GreedyPolicy(), seed=0, horizon=50)
    assert all(c.generated == 0 and c.accepted == 0 for c in m.counts.values())
    assert m.total_utility == 0 and m.normalized_utility_rate == 0


def test_same_seed_same_metrics(ref_a):
    a = run_episode(ref_a.scenario, RandomLegalPolicy(1), seed=11, horizon=300)
    b = run_episode(ref_a.scenario, RandomLegalPolicy(1), seed=11, horizon=300)
    assert a == b and a.as_row() == b.as_row()


def test_release_all_returns_pool_to_zero(ref_a):
    env = SliceEnv(ref_a.scenario, 4)
    policy = RandomLegalPolicy(4)
    for _ in range(200):
        env.step(policy)
    for nsi_id in list(env.active):
        env.release(nsi_id)
    assert all(abs(a) <= 1e-9 for a in env.pool.allocated)


def test_utility_bound_single_type_is_saturation():
    sc = scenario([10, 10], [spec(0, GS, [3, 2], utility=2)])
    assert utility_bound(sc) == 3 * 2


def test_reward_params_orderings():
    with pytest.raises(ConfigurationError):
        RewardParams(r_accept_gs=1, r_accept_be=1)
    with pytest.raises(ConfigurationError):
        RewardParams(r_drop_gs=0)


def check_invariants(env):
    total = [0.0] * len(env.scenario.capacity)
    for nsi in env.active.values():
        assert nsi.spec.min_fraction - 1e-9 <= nsi.scale_fraction <= 1.0
        if nsi.spec.slice_class is GS:
            assert nsi.scale_fraction == 1.0
        total = [t + a for t, a in zip(total, nsi.allocation)]
    for t, a, c in zip(total, env.pool.allocated, env.scenario.capacity):
        assert abs(t - a) <= 1e-6 and a <= c + 1e-9
    for c in env.counts.values():
        assert c.conserved()
        assert c.queued >= 0
    assert len(env.queue) <= env.scenario.queue_capacity


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2**32), st.floats(min_value=0.05, max_value=0.95))
def test_random_policy_keeps_invariants(seed, be_departure):
    from slicesim.config import bundled, load_config

    sc = load_config(bundled("ref_a.yaml")).scenario.with_departure_prob(BE, be_departure)
    env = SliceEnv(sc, seed)
    policy = RandomLegalPolicy(seed)
    for _ in range(200):
        env.step(policy)
        check_invariants(env)
