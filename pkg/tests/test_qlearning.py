import random
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slicesim.env import Action, Policy, SliceEnv, run_episode
from slicesim.model import SliceClass, SliceRequest
from slicesim.policies.qlearning import (
    ExplicitMDP,
    Observation,
    ObservationSpace,
    QlHyperparams,
    QLearningPolicy,
    QTable,
    frozen_policy,
    level,
    observation_space,
    observe,
    q_update,
    select_action,
    train,
    train_on_mdp,
)

from conftest import BE, GS, scenario, spec

ALL = (True, True, True)


def value_iteration(mdp, gamma, tol=1e-12):
    q = np.zeros((mdp.n_states, mdp.n_actions))
    while True:
        v = q.max(axis=1)
        new = np.array(
            [
                [mdp.rewards[s][a] + gamma * sum(p * v[n] for p, n in mdp.transitions[s][a]) for a in range(mdp.n_actions)]
                for s in range(mdp.n_states)
            ]
        )
        if np.abs(new - q).max() < tol:
            return new
        q = new


def three_state_mdp():
    # deterministic ring with a tempting self-loop in state 0
    return ExplicitMDP(
        transitions=[
            [[(1.0, 0)], [(1.0, 1)]],
            [[(1.0, 2)], [(1.0, 0)]],
            [[(1.0, 0)], [(1.0, 2)]],
        ],
        rewards=[[1.0, 0.0], [0.0, 2.0], [5.0, -1.0]],
    )


# observation


def test_level_binning():
    assert level(0.0, 4) == 0
    assert level(1.0, 4) == 3
    assert level(0.49, 4) == 1
    assert level(0.5, 4) == 2


def test_zero_observation():
    sc = scenario([10, 10], [spec(0, GS, [2, 1]), spec(1, BE, [1, 2], min_fraction=0.5)])
    env = SliceEnv(sc, 0)
    req = SliceRequest(0, 0, 0, 0)
    env.queue.append(req)
    obs = observe(env, req)
    assert obs == Observation((0, 0), 0, 0, GS, 0)


def test_observation_counts_queue_behind_head():
    sc = scenario([10], [spec(0, GS, [2]), spec(1, BE, [1], min_fraction=0.5)])
    env = SliceEnv(sc, 0)
    reqs = [SliceRequest(i, t, 0, 0) for i, t in enumerate([1, 0, 0, 1, 0, 0, 0, 0, 0])]
    env.queue.extend(reqs)
    obs = observe(env, reqs[0], levels=4, queue_clamp=5)
    assert (obs.queue_gs, obs.queue_be, obs.head_class) == (5, 1, BE)


def test_observation_index_is_a_bijection():
    space = ObservationSpace(2, 3, 2)
    seen = set()
    for o0 in range(3):
        for o1 in range(3):
            for qg in range(3):
                for qb in range(3):
                    for h in (GS, BE):
                        for b in range(3):
                            seen.add(space.index(Observation((o0, o1), qg, qb, h, b)))
    assert seen == set(range(space.size))


# action selection


def test_select_action_tie_goes_to_lowest_index():
    table = QTable(1)
    assert select_action(table, 0, 0.0, random.Random(0), ALL) is Action.Accept


def test_select_action_masked_exploration():
    table = QTable(1)
    rng = random.Random(0)
    assert all(
        select_action(table, 0, 1.0, rng, (False, True, False)) is Action.Reject for _ in range(50)
    )


def test_select_action_argmax():
    table = QTable(1)
    table.values[0] = [1.0, 3.0, 2.0]
    assert select_action(table, 0, 0.0, random.Random(0), ALL) is Action.Reject
    assert select_action(table, 0, 0.0, random.Random(0), (True, False, True)) is Action.ScaleDownAndAccept


def test_exploration_is_uniform_over_legal():
    table = QTable(1)
    rng = random.Random(3)
    picks = [select_action(table, 0, 1.0, rng, (True, True, False)) for _ in range(4000)]
    assert abs(picks.count(Action.Accept) / 4000 - 0.5) < 0.03
    assert Action.ScaleDownAndAccept not in picks


# backups


def test_q_update_examples():
    t = QTable(2)
    q_update(t, 0, 0, 5.0, 1, 1.0, 0.0)
    assert t.values[0, 0] == 5.0

    t = QTable(2)
    t.values[0, 1] = 1.0
    t.values[1] = [2.0, 0.0, -1.0]
    q_update(t, 0, 1, 0.0, 1, 0.5, 0.9)
    assert t.values[0, 1] == pytest.approx(1.4)

    before = t.values.copy()
    q_update(t, 0, 1, 9.0, 1, 0.0, 0.9)
    assert np.array_equal(t.values, before)


def test_terminal_backup_ignores_future():
    t = QTable(2)
    t.values[1] = [100.0, 100.0, 100.0]
    q_update(t, 0, 0, 1.0, None, 1.0, 0.9)
    assert t.values[0, 0] == 1.0


def test_hyperparameter_schedules():
    h = QlHyperparams(alpha=0.5, alpha_decay_visits=1000, epsilon_start=0.3, epsilon_end=0.01, episodes=11)
    assert h.alpha_at(0) == 0.5 and h.alpha_at(1000) == 0.25
    assert h.epsilon_at(0) == 0.3 and h.epsilon_at(10) == pytest.approx(0.01)
    with pytest.raises(ValueError):
        QlHyperparams(gamma=1.0)


# training


def test_zero_episodes_returns_initial_table(ref_a):
    hyper = replace(ref_a.qlearning, episodes=0, q_init=0.25)
    table, curve = train(ref_a.scenario, hyper, seed=1)
    assert curve == [] and np.all(table.values == 0.25)


def test_training_is_deterministic(ref_a):
    hyper = replace(ref_a.qlearning, episodes=2, train_horizon=300)
    a, ca = train(ref_a.scenario, hyper, seed=5)
    b, cb = train(ref_a.scenario, hyper, seed=5)
    assert ca == cb and np.array_equal(a.values, b.values)


def test_explicit_mdp_converges_to_value_iteration():
    mdp = three_state_mdp()
    gamma = 0.9
    q_star = value_iteration(mdp, gamma)
    hyper = QlHyperparams(alpha=1.0, alpha_decay_visits=1000, gamma=gamma)
    table = train_on_mdp(mdp, 300_000, hyper, seed=2)
    q = table.values[:, :2]
    assert np.abs(q - q_star).max() < 1e-6
    assert [table.greedy_action(s) for s in range(3)] == list(q_star.argmax(axis=1))


def test_csv_round_trip(tmp_path, ref_a):
    hyper = replace(ref_a.qlearning, episodes=1, train_horizon=200)
    table, _ = train(ref_a.scenario, hyper, seed=1)
    path = tmp_path / "q.csv"
    table.to_csv(path)
    back = QTable.from_csv(path, observation_space(ref_a.scenario, hyper))
    assert np.array_equal(back.values, table.values)


class CheckingPolicy(Policy):
    """Wraps a policy and asserts every action it emits is legal."""

    def __init__(self, inner):
        self.inner = inner

    def start_episode(self, env):
        self.inner.start_episode(env)

    def decide(self, env, request):
        action = self.inner.decide(env, request)
        assert env.legal_actions(request)[action]
        return action

    def record(self, env, request, action, reward):
        self.inner.record(env, request, action, reward)

    def end_episode(self, env):
        self.inner.end_episode(env)


@settings(max_examples=10, deadline=None)
@given(st.integers(min_value=0, max_value=2**32), st.floats(min_value=0.0, max_value=1.0))
def test_policy_never_emits_illegal_actions(seed, epsilon):
    from slicesim.config import bundled, load_config

    cfg = load_config(bundled("ref_a.yaml"))
    hyper = cfg.qlearning
    space = observation_space(cfg.scenario, hyper)
    learner = QLearningPolicy(QTable(space.size, 0.0, space), hyper, random.Random(seed), epsilon=epsilon, learning=True)
    run_episode(cfg.scenario, CheckingPolicy(learner), seed, horizon=200)
    noisy = QTable(space.size, 0.0, space)
    noisy.values[:] = np.random.default_rng(seed).normal(size=noisy.values.shape)
    run_episode(cfg.scenario, CheckingPolicy(frozen_policy(noisy, hyper)), seed, horizon=200)
