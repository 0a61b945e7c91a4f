"""Genetic merging of two compatible genomes.

The population starts as scalar blends of the two parents, then each
generation runs tournament selection, blend crossover, sparse Gaussian
mutation and single-elite replacement.  All randomness comes from named
streams of ``GaConfig.seed`` and is consumed on the calling thread; fitness
calls are the only work that may run on a pool.
"""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, NamedTuple, Optional, Sequence

import numpy as np

from .errors import ConfigError, FitnessEvaluationError
from .genome import Genome, require_compatible
from .rng import stream

FitnessFn = Callable[[Genome], float]


@dataclass(frozen=True)
class GaConfig:
    population_size: int = 20
    generations: int = 20
    parents_per_generation: int = 4
    mutation_rate: float = 0.02
    mutation_sigma: float = 0.01
    tournament_size: int = 3
    elite_count: int = 1
    seed: int = 0
    seed_endpoints: bool = True

    def __post_init__(self):
        n = self.population_size
        if n < 2:
            raise ConfigError("population_size must be at least 2")
        if self.generations < 1:
            raise ConfigError("generations must be positive")
        k = self.parents_per_generation
        if k < 2 or k % 2 or k > n:
            raise ConfigError("parents_per_generation must be even, >= 2 and <= population_size")
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise ConfigError("mutation_rate must lie in [0, 1]")
        if not self.mutation_sigma >= 0.0:
            raise ConfigError("mutation_sigma must be non-negative")
        if not 1 <= self.tournament_size <= n:
            raise ConfigError("tournament_size must lie in [1, population_size]")
        if not 1 <= self.elite_count < n:
            raise ConfigError("elite_count must lie in [1, population_size)")
        if self.seed_endpoints and n < 2:
            raise ConfigError("seed_endpoints needs population_size >= 2")


@dataclass
class Individual:
    genome: Genome
    fitness: Optional[float] = None


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    best_fitness: float
    mean_fitness: float
    best_individual_id: int


class GaStreams:
    """The four independent generators a GA run consumes."""

    def __init__(self, seed):
        self.init = stream(seed, "init")
        self.selection = stream(seed, "selection")
        self.crossover = stream(seed, "crossover")
        self.mutation = stream(seed, "mutation")


class MegaResult(NamedTuple):
    genome: Genome
    fitness: float
    history: List[GenerationRecord]


def blend(a: Genome, b: Genome, weight: float) -> Genome:
    """``weight * a + (1 - weight) * b``, kept inside the per-coordinate hull of ``a`` and ``b``."""
    require_compatible(a, b)
    x, y = a.values, b.values
    out = weight * x + (1.0 - weight) * y
    # rounding may overshoot an endpoint by an ulp; clamp restores exact convexity
    np.clip(out, np.minimum(x, y), np.maximum(x, y), out=out)
    return Genome(out, a.manifest)


def init_population(theta1: Genome, theta2: Genome, cfg: GaConfig, rng) -> List[Individual]:
    require_compatible(theta1, theta2, "parent genomes")
    pop = []
    if cfg.seed_endpoints:
        pop.append(Individual(theta1))
        pop.append(Individual(theta2))
    while len(pop) < cfg.population_size:
        alpha = rng.random()
        pop.append(Individual(blend(theta1, theta2, alpha)))
    return pop


def resolve_workers(workers=None) -> int:
    """Worker count from the argument or ``MEGA_THREADS`` (0 = one per CPU)."""
    if workers is None:
        raw = os.environ.get("MEGA_THREADS", "1")
        try:
            workers = int(raw)
        except ValueError:
            raise ConfigError(f"MEGA_THREADS must be an integer, got {raw!r}") from None
    if workers < 0:
        raise ConfigError("worker count must be >= 0")
    if workers == 0:
        workers = os.cpu_count() or 1
    return workers


def evaluate(population: Sequence[Individual], fitness_fn: FitnessFn, workers=1) -> List[float]:
    """Fill every missing fitness; cached values are left alone."""
    pending = [i for i, ind in enumerate(population) if ind.fitness is None]

    def run(i):
        try:
            return float(fitness_fn(population[i].genome))
        except Exception as exc:
            raise FitnessEvaluationError(i, exc) from exc

    workers = resolve_workers(workers)
    if workers > 1 and len(pending) > 1:
        with ThreadPoolExecutor(max_workers=min(workers, len(pending))) as pool:
            results = list(pool.map(run, pending))
    else:
        results = [run(i) for i in pending]
    for i, f in zip(pending, results):
        population[i].fitness = f
    return [ind.fitness for ind in population]


def _fitness_vector(population):
    if any(ind.fitness is None for ind in population):
        raise ValueError("every individual must be evaluated before selection")
    return np.array([ind.fitness for ind in population], dtype=np.float64)


def tournament_select(population: Sequence[Individual], t: int, k: int, rng) -> List[int]:
    """Indices of ``k`` tournament winners; a winner may repeat across rounds."""
    fit = _fitness_vector(population)
    n = len(population)
    if not 1 <= t <= n:
        raise ValueError(f"tournament size {t} outside [1, {n}]")
    winners = []
    for _ in range(k):
        entrants = np.sort(rng.choice(n, size=t, replace=False))
        # argmax picks the first maximum; entrants are sorted, so ties go to the lower index
        winners.append(int(entrants[np.argmax(fit[entrants])]))
    return winners


def crossover(parent_a: Genome, parent_b: Genome, rng) -> Genome:
    return blend(parent_a, parent_b, rng.random())


def mutate(child: Genome, p_mut: float, sigma: float, rng) -> Genome:
    """Add N(0, sigma^2) to each coordinate with probability ``p_mut``.

    One uniform per coordinate decides the mask, then one normal per masked
    coordinate in ascending coordinate order.
    """
    mask = rng.random(len(child)) < p_mut
    hits = int(np.count_nonzero(mask))
    if hits == 0:
        return child
    values = child.values.copy()
    values[mask] += rng.normal(0.0, sigma, size=hits)
    return child.with_values(values)


def _best_index(population):
    fit = _fitness_vector(population)
    return int(np.argmax(fit))


def _record(generation, population):
    fit = _fitness_vector(population)
    best = int(np.argmax(fit))
    return GenerationRecord(generation, float(fit[best]), float(np.mean(fit)), best)


def step_generation(population, cfg: GaConfig, fitness_fn: FitnessFn, rng: GaStreams,
                    generation=1, workers=1):
    """One generation: select, breed, mutate, keep the elite(s), evaluate offspring."""
    fit = _fitness_vector(population)
    parents = tournament_select(population, cfg.tournament_size, cfg.parents_per_generation,
                                rng.selection)
    # stable sort: equal fitness keeps the lower index first
    elite_idx = np.argsort(-fit, kind="stable")[: cfg.elite_count]
    new_pop = [Individual(population[i].genome, population[i].fitness) for i in elite_idx]
    while len(new_pop) < cfg.population_size:
        i, j = rng.crossover.choice(len(parents), size=2, replace=False)
        child = crossover(population[parents[i]].genome, population[parents[j]].genome,
                          rng.crossover)
        child = mutate(child, cfg.mutation_rate, cfg.mutation_sigma, rng.mutation)
        new_pop.append(Individual(child))
    evaluate(new_pop, fitness_fn, workers)
    return new_pop, _record(generation, new_pop)


def run_mega(theta1: Genome, theta2: Genome, cfg: GaConfig, fitness_fn: FitnessFn,
             workers=1, on_generation=None) -> MegaResult:
    """Evolve blends of ``theta1`` and ``theta2``; return the best genome ever seen.

    ``history`` holds one record per generation, describing the population
    after that generation's update.
    """
    require_compatible(theta1, theta2, "parent genomes")
    rng = GaStreams(cfg.seed)
    population = init_population(theta1, theta2, cfg, rng.init)
    evaluate(population, fitness_fn, workers)
    b = _best_index(population)
    best, best_fit = population[b].genome, population[b].fitness
    history = []
    for g in range(1, cfg.generations + 1):
        population, record = step_generation(population, cfg, fitness_fn, rng, g, workers)
        history.append(record)
        if record.best_fitness > best_fit:
            best = population[record.best_individual_id].genome
            best_fit = record.best_fitness
        if on_generation is not None:
            on_generation(record)
    return MegaResult(best, best_fit, history)


def history_csv(history: Sequence[GenerationRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["generation", "best_fitness", "mean_fitness"])
    for r in history:
        w.writerow([r.generation, repr(r.best_fitness), repr(r.mean_fitness)])
    return buf.getvalue()


def read_history_csv(text: str) -> List[GenerationRecord]:
    rows = list(csv.DictReader(io.StringIO(text)))
    return [
        GenerationRecord(int(r["generation"]), float(r["best_fitness"]), float(r["mean_fitness"]), -1)
        for r in rows
    ]
