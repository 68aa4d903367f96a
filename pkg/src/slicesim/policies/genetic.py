"""Genetic search over per-type admission thresholds.

A strategy caps how many instances of each slice type may be active at
once. Strategies are encoded as fixed-width big-endian bit strings and
evolved with roulette selection, one-point crossover, bit-flip mutation and
elitism. Fitness is the long-run utility rate normalised by the best
full-scale mix the pool can hold.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Callable, Sequence

from ..env import Action, Policy, Scenario, SliceEnv, run_episode, utility_bound
from ..model import ConfigurationError, SliceRequest
from ..seeding import derive_seed, stream

Genome = tuple[int, ...]


@dataclass(frozen=True)
class ThresholdStrategy:
    thresholds: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "thresholds", tuple(int(t) for t in self.thresholds))
        if any(t < 0 for t in self.thresholds):
            raise ConfigurationError("thresholds must be non-negative")


class GenomeLayout:
    """Bit layout for one scenario: ``ceil(log2(cap + 1))`` bits per slice type."""

    def __init__(self, caps: Sequence[int]):
        self.caps = tuple(int(c) for c in caps)
        self.widths = tuple(max(c, 0).bit_length() for c in self.caps)
        self.length = sum(self.widths)

    @classmethod
    def for_scenario(cls, scenario: Scenario) -> "GenomeLayout":
        return cls([scenario.physical_cap(t.type_id) for t in scenario.slice_types])

    def encode(self, strategy: ThresholdStrategy) -> Genome:
        if len(strategy.thresholds) != len(self.caps):
            raise ConfigurationError("strategy has the wrong number of thresholds")
        bits: list[int] = []
        for value, cap, width in zip(strategy.thresholds, self.caps, self.widths):
            if value > cap:
                raise ConfigurationError(f"threshold {value} exceeds cap {cap}")
            bits.extend((value >> (width - 1 - i)) & 1 for i in range(width))
        return tuple(bits)

    def decode(self, genome: Sequence[int]) -> ThresholdStrategy:
        if len(genome) != self.length:
            raise ConfigurationError(f"genome has {len(genome)} bits, layout needs {self.length}")
        values = []
        pos = 0
        for cap, width in zip(self.caps, self.widths):
            v = 0
            for bit in genome[pos:pos + width]:
                v = (v << 1) | (1 if bit else 0)
            values.append(min(v, cap))
            pos += width
        return ThresholdStrategy(tuple(values))

    def all_strategies(self) -> list[ThresholdStrategy]:
        out = [()]
        for cap in self.caps:
            out = [prefix + (v,) for prefix in out for v in range(cap + 1)]
        return [ThresholdStrategy(t) for t in out]


def genome_hex(genome: Sequence[int]) -> str:
    if not genome:
        return ""
    value = int("".join(str(b) for b in genome), 2)
    return format(value, f"0{math.ceil(len(genome) / 4)}x")


def strategy_decide(strategy: ThresholdStrategy, env: SliceEnv, request: SliceRequest) -> Action:
    """Accept while the type is under its threshold and the demand fits at full scale."""
    index = env.scenario.slice_types.index(env.spec_of(request))
    if env.type_active[request.type_id] < strategy.thresholds[index] and env.fits_full(request):
        return Action.Accept
    return Action.Reject


class ThresholdPolicy(Policy):
    name = "ga-strategy"

    def __init__(self, strategy: ThresholdStrategy):
        self.strategy = strategy
        self._slot_of: dict[int, int] = {}

    def start_episode(self, env: SliceEnv) -> None:
        if len(self.strategy.thresholds) != len(env.scenario.slice_types):
            raise ConfigurationError("strategy does not match the scenario's slice types")
        self._slot_of = {t.type_id: i for i, t in enumerate(env.scenario.slice_types)}

    def decide(self, env: SliceEnv, request: SliceRequest) -> Action:
        limit = self.strategy.thresholds[self._slot_of[request.type_id]]
        if env.type_active[request.type_id] < limit and env.fits_full(request):
            return Action.Accept
        return Action.Reject


def fitness(
    strategy: ThresholdStrategy, scenario: Scenario, fitness_seeds: Sequence[int], horizon: int
) -> float:
    """Mean normalised utility rate of ``strategy`` over one episode per seed."""
    if horizon < 1:
        raise ConfigurationError("horizon must be >= 1")
    bound = utility_bound(scenario)
    if bound <= 0:
        raise ConfigurationError("scenario admits no positive utility")
    total = 0.0
    for seed in fitness_seeds:
        m = run_episode(scenario, ThresholdPolicy(strategy), seed, horizon)
        total += m.total_utility / horizon / bound
    return total / len(fitness_seeds)


class FitnessEvaluator:
    """Caches fitness per strategy; the seed list is shared by every genome."""

    def __init__(self, scenario: Scenario, seeds: Sequence[int], horizon: int):
        self.scenario = scenario
        self.seeds = tuple(seeds)
        self.horizon = horizon
        self.cache: dict[tuple[int, ...], float] = {}

    def __call__(self, strategy: ThresholdStrategy) -> float:
        key = strategy.thresholds
        if key not in self.cache:
            self.cache[key] = fitness(strategy, self.scenario, self.seeds, self.horizon)
        return self.cache[key]


@dataclass(frozen=True)
class GaParams:
    population_size: int = 32
    crossover_prob: float = 0.9
    mutation_prob_per_bit: float | None = None  # None means 1 / genome length
    elite_count: int = 2
    generations: int = 100
    fitness_seeds: int = 3
    fitness_horizon: int | None = None

    def __post_init__(self) -> None:
        if self.population_size < 2 or self.population_size % 2:
            raise ConfigurationError("population_size must be an even integer >= 2")
        if not 0.0 <= self.crossover_prob <= 1.0:
            raise ConfigurationError("crossover_prob must lie in [0, 1]")
        if self.mutation_prob_per_bit is not None and not 0.0 <= self.mutation_prob_per_bit <= 1.0:
            raise ConfigurationError("mutation_prob_per_bit must lie in [0, 1]")
        if not 1 <= self.elite_count < self.population_size:
            raise ConfigurationError("elite_count must satisfy 1 <= elite_count < population_size")
        if self.generations < 0:
            raise ConfigurationError("generations must be >= 0")
        if self.fitness_seeds < 1:
            raise ConfigurationError("fitness_seeds must be >= 1")
        if self.fitness_horizon is not None and self.fitness_horizon < 1:
            raise ConfigurationError("fitness_horizon must be >= 1")

    def mutation_rate(self, length: int) -> float:
        if self.mutation_prob_per_bit is not None:
            return self.mutation_prob_per_bit
        return 1.0 / length if length else 0.0


def crossover(a: Genome, b: Genome, cut: int) -> tuple[Genome, Genome]:
    return a[:cut] + b[cut:], b[:cut] + a[cut:]


def mutate(genome: Genome, rate: float, rng: random.Random) -> Genome:
    if rate <= 0:
        return genome
    return tuple(1 - g if rng.random() < rate else g for g in genome)


def rank_order(population: Sequence[Genome], fitnesses: Sequence[float]) -> list[int]:
    """Indices by fitness descending, ties by genome in lexicographic order."""
    return sorted(range(len(population)), key=lambda i: (-fitnesses[i], population[i]))


def evolve_generation(
    population: Sequence[Genome],
    fitnesses: Sequence[float],
    rng: random.Random,
    params: GaParams,
) -> list[Genome]:
    """Elites carried over verbatim, the rest bred by roulette, crossover and mutation."""
    if len(population) != params.population_size or len(fitnesses) != len(population):
        raise ConfigurationError("population does not match population_size")
    length = len(population[0])
    rate = params.mutation_rate(length)
    order = rank_order(population, fitnesses)
    nxt = [tuple(population[i]) for i in order[: params.elite_count]]
    weights = list(fitnesses) if sum(fitnesses) > 0 else None
    while len(nxt) < params.population_size:
        a, b = rng.choices(population, weights=weights, k=2)
        if length >= 2 and rng.random() < params.crossover_prob:
            a, b = crossover(tuple(a), tuple(b), rng.randint(1, length - 1))
        for child in (a, b):
            if len(nxt) < params.population_size:
                nxt.append(mutate(tuple(child), rate, rng))
    return nxt


@dataclass
class GenerationRecord:
    generation: int
    best_fitness: float
    mean_fitness: float
    best_ever_fitness: float
    best_genome: Genome
    environment: str = "a"


@dataclass
class GaResult:
    best_strategy: ThresholdStrategy
    best_fitness: float
    best_genome: Genome
    trajectory: list[GenerationRecord]
    layout: GenomeLayout
    benchmark_strategy: ThresholdStrategy | None = None
    benchmark_fitness: float | None = None
    extras: dict = field(default_factory=dict)


def fitness_seed_list(seed: int, params: GaParams) -> list[int]:
    return [derive_seed(seed, "ga-fitness", k) for k in range(params.fitness_seeds)]


def _evolve(
    layout: GenomeLayout,
    params: GaParams,
    seed: int,
    evaluator_for: Callable[[int], tuple[FitnessEvaluator, str]],
    on_shift: Callable[[Genome, float], None] | None = None,
) -> GaResult:
    init_rng = stream(seed, "ga-init")
    rng = stream(seed, "ga-evolve")
    population = [
        tuple(init_rng.randrange(2) for _ in range(layout.length))
        for _ in range(params.population_size)
    ]
    trajectory: list[GenerationRecord] = []
    best_genome: Genome | None = None
    best_fit = -math.inf
    current_env = None
    for gen in range(params.generations + 1):
        if gen > 0:
            population = evolve_generation(population, fitnesses, rng, params)
        evaluator, env_label = evaluator_for(gen)
        if current_env is not None and env_label != current_env:
            if on_shift is not None:
                on_shift(best_genome, best_fit)
            best_genome, best_fit = None, -math.inf
        current_env = env_label
        fitnesses = [evaluator(layout.decode(g)) for g in population]
        top = rank_order(population, fitnesses)[0]
        if fitnesses[top] > best_fit:
            best_fit, best_genome = fitnesses[top], population[top]
        trajectory.append(
            GenerationRecord(
                gen,
                fitnesses[top],
                math.fsum(fitnesses) / len(fitnesses),
                best_fit,
                population[top],
                env_label,
            )
        )
    return GaResult(layout.decode(best_genome), best_fit, best_genome, trajectory, layout)


def optimize(scenario: Scenario, params: GaParams, seed: int, evaluator: FitnessEvaluator | None = None) -> GaResult:
    layout = GenomeLayout.for_scenario(scenario)
    if evaluator is None:
        horizon = params.fitness_horizon or scenario.horizon
        evaluator = FitnessEvaluator(scenario, fitness_seed_list(seed, params), horizon)
    return _evolve(layout, params, seed, lambda gen: (evaluator, "a"))


def run_regime_shift(
    scenario_a: Scenario,
    scenario_b: Scenario,
    shift_generation: int,
    params: GaParams,
    seed: int,
) -> GaResult:
    """Evolve under ``scenario_a``, then keep evolving the same population under ``scenario_b``.

    Generations ``0..shift_generation`` are scored in environment a, later
    ones in b. The best strategy found before the shift is frozen and scored
    in b as a static benchmark.
    """
    layout = GenomeLayout.for_scenario(scenario_a)
    if GenomeLayout.for_scenario(scenario_b).widths != layout.widths or len(scenario_a.slice_types) != len(
        scenario_b.slice_types
    ):
        raise ConfigurationError("shift scenarios must share slice types and genome layout")
    seeds = fitness_seed_list(seed, params)
    eval_a = FitnessEvaluator(scenario_a, seeds, params.fitness_horizon or scenario_a.horizon)
    eval_b = FitnessEvaluator(scenario_b, seeds, params.fitness_horizon or scenario_b.horizon)
    frozen: dict = {}

    def evaluator_for(gen: int) -> tuple[FitnessEvaluator, str]:
        return (eval_b, "b") if gen > shift_generation else (eval_a, "a")

    def on_shift(genome: Genome, fit: float) -> None:
        frozen["genome"] = genome
        frozen["fitness_a"] = fit

    result = _evolve(layout, params, seed, evaluator_for, on_shift)
    if frozen:
        bench = layout.decode(frozen["genome"])
        result.benchmark_strategy = bench
        result.benchmark_fitness = eval_b(bench)
        result.extras["benchmark_fitness_a"] = frozen["fitness_a"]
    return result


def brute_force_optimum(evaluator: FitnessEvaluator, layout: GenomeLayout) -> tuple[ThresholdStrategy, float]:
    """Exhaustive search over every threshold vector the layout can express."""
    best, best_fit = None, -math.inf
    for strategy in layout.all_strategies():
        f = evaluator(strategy)
        if f > best_fit:
            best, best_fit = strategy, f
    return best, best_fit
