"""Tabular Q-learning congestion controller.

The agent is consulted once per queued request. States discretise pool
occupancy, queue composition, the class of the request being decided and
how many best-effort instances could still be shrunk. Actions are
Accept / Reject / ScaleDownAndAccept; illegal actions are masked out.
"""

from __future__ import annotations

import csv
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from ..env import Action, Policy, Scenario, SliceEnv, run_episode
from ..model import TOL, ConfigurationError, SliceClass, SliceRequest
from ..seeding import derive_seed, stream

N_ACTIONS = len(Action)


@dataclass(frozen=True)
class QlHyperparams:
    alpha: float = 0.5
    alpha_decay_visits: float | None = 1000.0  # alpha / (1 + visits / this); None keeps alpha fixed
    gamma: float = 0.95
    epsilon_start: float = 0.3
    epsilon_end: float = 0.01
    episodes: int = 20
    levels: int = 4
    queue_clamp: int = 5
    train_horizon: int | None = None
    q_init: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigurationError("alpha must lie in (0, 1]")
        if self.alpha_decay_visits is not None and self.alpha_decay_visits <= 0:
            raise ConfigurationError("alpha_decay_visits must be positive")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigurationError("gamma must lie in [0, 1)")
        for name in ("epsilon_start", "epsilon_end"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1]")
        if self.episodes < 0:
            raise ConfigurationError("episodes must be >= 0")
        if self.levels < 1 or self.queue_clamp < 0:
            raise ConfigurationError("levels must be >= 1 and queue_clamp >= 0")
        if self.train_horizon is not None and self.train_horizon < 1:
            raise ConfigurationError("train_horizon must be >= 1")

    def alpha_at(self, visits: int) -> float:
        if self.alpha_decay_visits is None:
            return self.alpha
        return self.alpha / (1.0 + visits / self.alpha_decay_visits)

    def epsilon_at(self, episode: int) -> float:
        if self.episodes <= 1:
            return self.epsilon_start
        frac = episode / (self.episodes - 1)
        return self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac


class Observation(NamedTuple):
    occupancy: tuple[int, ...]
    queue_gs: int
    queue_be: int
    head_class: SliceClass
    be_active_level: int


class ObservationSpace:
    """Mixed-radix enumeration of every discretised observation."""

    def __init__(self, n_dims: int, levels: int, queue_clamp: int):
        self.n_dims = n_dims
        self.levels = levels
        self.queue_clamp = queue_clamp
        self.radices = [levels] * n_dims + [queue_clamp + 1, queue_clamp + 1, 2, levels]
        self.size = math.prod(self.radices)

    def index(self, obs: Observation) -> int:
        digits = list(obs.occupancy) + [
            obs.queue_gs,
            obs.queue_be,
            1 if obs.head_class is SliceClass.BestEffort else 0,
            obs.be_active_level,
        ]
        idx = 0
        for d, r in zip(digits, self.radices):
            if not 0 <= d < r:
                raise ValueError(f"observation digit {d} outside [0, {r})")
            idx = idx * r + d
        return idx

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ObservationSpace) and self.radices == other.radices


def level(u: float, levels: int) -> int:
    return min(int(math.floor(u * levels + TOL)), levels - 1) if u > 0 else 0


def observe(env: SliceEnv, request: SliceRequest, levels: int = 4, queue_clamp: int = 5) -> Observation:
    occupancy = tuple(level(u, levels) for u in env.utilization())
    n_gs = n_be = 0
    for i, req in enumerate(env.queue):
        if i == 0 and req is request:
            continue
        if env.spec_of(req).slice_class is SliceClass.GuaranteedService:
            n_gs += 1
        else:
            n_be += 1
    be_caps = [
        env.scenario.physical_cap(t.type_id)
        for t in env.scenario.slice_types
        if t.slice_class is SliceClass.BestEffort
    ]
    ref = max(be_caps, default=0)
    be_level = level(env.scalable_be_count() / ref, levels) if ref else 0
    return Observation(
        occupancy,
        min(n_gs, queue_clamp),
        min(n_be, queue_clamp),
        env.spec_of(request).slice_class,
        be_level,
    )


class QTable:
    """Dense state-action table; action columns follow ``Action`` order."""

    def __init__(self, n_states: int, q_init: float = 0.0, space: ObservationSpace | None = None):
        self.values = np.full((n_states, N_ACTIONS), float(q_init))
        self.visits = np.zeros((n_states, N_ACTIONS), dtype=np.int64)
        self.space = space

    @property
    def n_states(self) -> int:
        return self.values.shape[0]

    def index(self, obs: Observation | int) -> int:
        if isinstance(obs, Observation):
            if self.space is None:
                raise ValueError("table has no observation space")
            return self.space.index(obs)
        return int(obs)

    def copy(self) -> "QTable":
        other = QTable(self.n_states, space=self.space)
        other.values = self.values.copy()
        other.visits = self.visits.copy()
        return other

    def greedy_action(self, s: int, mask: Sequence[bool] = (True,) * N_ACTIONS) -> Action:
        row = self.values[s]
        best = None
        for a in range(N_ACTIONS):
            if mask[a] and (best is None or row[a] > row[best]):
                best = a
        return Action(best)

    def to_csv(self, path: str | Path) -> None:
        """Write every ``(state_index, action, value)`` triple."""
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["state_index", "action", "value"])
            for s in range(self.n_states):
                for a in range(N_ACTIONS):
                    writer.writerow([s, Action(a).name, repr(float(self.values[s, a]))])

    @classmethod
    def from_csv(cls, path: str | Path, space: ObservationSpace | None = None) -> "QTable":
        entries: dict[tuple[int, int], float] = {}
        with Path(path).open(newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["state_index", "action", "value"]:
                raise ConfigurationError(f"{path}: not a Q-table CSV")
            for line, row in enumerate(reader, start=2):
                try:
                    key = (int(row["state_index"]), int(Action[row["action"]]))
                    entries[key] = float(row["value"])
                except (KeyError, ValueError):
                    raise ConfigurationError(f"{path}:{line}: malformed Q-table row") from None
        n_states = 1 + max((s for s, _ in entries), default=-1)
        if len(entries) != n_states * N_ACTIONS:
            raise ConfigurationError(f"{path}: table is missing entries")
        if space is not None and space.size != n_states:
            raise ConfigurationError(f"{path}: table has {n_states} states, scenario needs {space.size}")
        table = cls(n_states, space=space)
        for (s, a), v in entries.items():
            table.values[s, a] = v
        return table


def select_action(
    qtable: QTable,
    obs: Observation | int,
    epsilon: float,
    rng: random.Random,
    legality_mask: Sequence[bool],
) -> Action:
    """Epsilon-greedy over legal actions; ties go to the lowest action index."""
    legal = [a for a in range(N_ACTIONS) if legality_mask[a]]
    if not legal:
        raise ValueError("no legal action")
    if epsilon > 0 and rng.random() < epsilon:
        return Action(legal[rng.randrange(len(legal))])
    return qtable.greedy_action(qtable.index(obs), legality_mask)


def q_update(
    qtable: QTable, s: int, a: int, r: float, s_next: int | None, alpha: float, gamma: float
) -> None:
    """One Bellman backup; ``s_next=None`` marks a terminal transition."""
    future = 0.0 if s_next is None else float(qtable.values[s_next].max())
    q = qtable.values[s, a]
    qtable.values[s, a] = q + alpha * (r + gamma * future - q)


class QLearningPolicy(Policy):
    """Table-driven controller; learns from its own decisions when ``learning`` is set."""

    name = "qlearning"

    def __init__(
        self,
        qtable: QTable,
        hyper: QlHyperparams,
        rng: random.Random | None = None,
        epsilon: float = 0.0,
        learning: bool = False,
    ):
        self.qtable = qtable
        self.hyper = hyper
        self.rng = rng or random.Random(0)
        self.epsilon = epsilon
        self.learning = learning
        self._pending: tuple[int, int] | None = None
        self._pending_reward = 0.0
        self._reward_scale = 0.0

    def decide(self, env: SliceEnv, request: SliceRequest) -> Action:
        s = self.qtable.index(observe(env, request, self.hyper.levels, self.hyper.queue_clamp))
        mask = env.legal_actions(request)
        if self.learning and self._pending is not None:
            self._backup(s)
        action = select_action(self.qtable, s, self.epsilon, self.rng, mask)
        if self.learning:
            self._pending = (s, int(action))
        return action

    def record(self, env: SliceEnv, request: SliceRequest, action: Action, reward: float) -> None:
        self._pending_reward = reward

    def end_episode(self, env: SliceEnv) -> None:
        # the last decision of an episode has no successor; it is not backed up
        self._pending = None

    def _backup(self, s_next: int | None) -> None:
        s, a = self._pending
        visits = int(self.qtable.visits[s, a])
        r = self._pending_reward
        q_update(self.qtable, s, a, r, s_next, self.hyper.alpha_at(visits), self.hyper.gamma)
        self.qtable.visits[s, a] = visits + 1
        self._reward_scale = max(self._reward_scale, abs(r))
        bound = self._reward_scale / (1.0 - self.hyper.gamma) + abs(self.hyper.q_init)
        assert abs(self.qtable.values[s, a]) <= bound + 1e-9, "Q-value escaped its bound"
        self._pending = None


def observation_space(scenario: Scenario, hyper: QlHyperparams) -> ObservationSpace:
    return ObservationSpace(len(scenario.capacity), hyper.levels, hyper.queue_clamp)


def train(scenario: Scenario, hyper: QlHyperparams, seed: int) -> tuple[QTable, list[float]]:
    """Learn a table over ``hyper.episodes`` episodes; returns it with per-episode rewards."""
    space = observation_space(scenario, hyper)
    table = QTable(space.size, hyper.q_init, space)
    policy = QLearningPolicy(table, hyper, stream(seed, "ql-explore"), learning=True)
    curve = []
    horizon = hyper.train_horizon or scenario.horizon
    for episode in range(hyper.episodes):
        policy.epsilon = hyper.epsilon_at(episode)
        metrics = run_episode(scenario, policy, derive_seed(seed, "ql-train", episode), horizon)
        curve.append(metrics.cumulative_reward)
    return table, curve


def frozen_policy(table: QTable, hyper: QlHyperparams) -> QLearningPolicy:
    return QLearningPolicy(table, hyper, epsilon=0.0, learning=False)


@dataclass
class ExplicitMDP:
    """Finite MDP given by tables: ``transitions[s][a]`` is a list of ``(prob, s_next)``."""

    transitions: list[list[list[tuple[float, int]]]]
    rewards: list[list[float]]

    @property
    def n_states(self) -> int:
        return len(self.rewards)

    @property
    def n_actions(self) -> int:
        return len(self.rewards[0])

    def sample(self, s: int, a: int, rng: random.Random) -> int:
        u = rng.random()
        acc = 0.0
        for p, nxt in self.transitions[s][a]:
            acc += p
            if u < acc:
                return nxt
        return self.transitions[s][a][-1][1]


def train_on_mdp(
    mdp: ExplicitMDP,
    steps: int,
    hyper: QlHyperparams,
    seed: int,
    epsilon: float = 1.0,
    start: int = 0,
) -> QTable:
    """Run Q-learning directly on an explicit MDP (continuing task, no resets)."""
    if mdp.n_actions > N_ACTIONS:
        raise ConfigurationError("at most three actions are supported")
    table = QTable(mdp.n_states, hyper.q_init)
    table.values[:, mdp.n_actions:] = -np.inf
    mask = [a < mdp.n_actions for a in range(N_ACTIONS)]
    rng = stream(seed, "mdp-explore")
    env_rng = stream(seed, "mdp-transitions")
    s = start
    for _ in range(steps):
        a = int(select_action(table, s, epsilon, rng, mask))
        s_next = mdp.sample(s, a, env_rng)
        visits = int(table.visits[s, a])
        q_update(table, s, a, mdp.rewards[s][a], s_next, hyper.alpha_at(visits), hyper.gamma)
        table.visits[s, a] = visits + 1
        s = s_next
    return table
