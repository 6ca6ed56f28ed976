"""Genetic-algorithm solver: PMX crossover, three mutations, tournament selection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..compat import CompatibilityTable, Direction
from ..puzzlegen import GridSpec, random_permutation


@dataclass(frozen=True)
class GaConfig:
    population: int = 100
    generations: int = 1000
    early_stop_patience: int = 100
    mutation_rate: float = 0.01
    crossover_rate: float = 0.8
    tournament_size: int = 3
    elitism_ratio: float = 0.1

    def __post_init__(self):
        for name in ("mutation_rate", "crossover_rate", "elitism_ratio"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0,1], got {v}")
        if self.population <= self.tournament_size:
            raise ValueError("population must exceed tournament size")
        if self.generations < 1 or self.early_stop_patience < 1:
            raise ValueError("generations and patience must be >= 1")


@dataclass(frozen=True, eq=False)
class GaResult:
    permutation: np.ndarray
    best_fitness: float
    generations: int
    fitness_trace: np.ndarray  # best-so-far per generation, non-decreasing


def layout_fitness(perm: np.ndarray, table: CompatibilityTable, k: int) -> float:
    """Negative sum of dissimilarities over adjacent grid pairs."""
    place = np.empty(k * k, dtype=np.int64)
    place[perm] = np.arange(k * k)  # piece sitting at each slot
    cells = place.reshape(k, k)
    total = table.D[Direction.RIGHT, cells[:, :-1], cells[:, 1:]].sum()
    total += table.D[Direction.DOWN, cells[:-1, :], cells[1:, :]].sum()
    return -float(total)


def pmx_crossover(
    parent1: np.ndarray, parent2: np.ndarray, cut1: int, cut2: int
) -> np.ndarray:
    """Partially mapped crossover; always yields a valid permutation.

    The child copies parent1's segment [cut1, cut2); every other slot takes
    parent2's entry, chased through the segment's value mapping until it no
    longer conflicts.
    """
    n = len(parent1)
    if not 0 <= cut1 < cut2 <= n:
        raise ValueError("need 0 <= cut1 < cut2 <= len")
    child = np.array(parent2, dtype=np.int64)
    child[cut1:cut2] = parent1[cut1:cut2]
    seg_pos = {int(v): i for i, v in enumerate(parent1[cut1:cut2], start=cut1)}
    for pos in list(range(cut1)) + list(range(cut2, n)):
        v = int(parent2[pos])
        while v in seg_pos:
            v = int(parent2[seg_pos[v]])
        child[pos] = v
    return child


def _mutate(perm: np.ndarray, rng: np.random.Generator) -> None:
    """One of swap / inversion / scramble, chosen uniformly; in place."""
    n = len(perm)
    if n < 2:
        return
    kind = int(rng.integers(0, 3))
    a, b = sorted(int(x) for x in rng.choice(n, size=2, replace=False))
    if kind == 0:
        perm[a], perm[b] = perm[b], perm[a]
    elif kind == 1:
        perm[a : b + 1] = perm[a : b + 1][::-1]
    else:
        seg = perm[a : b + 1].copy()
        order = random_permutation(len(seg), rng)
        perm[a : b + 1] = seg[order]


def _tournament(fitness: np.ndarray, size: int, rng: np.random.Generator) -> int:
    drawn = rng.integers(0, len(fitness), size=size)
    vals = fitness[drawn]
    return int(drawn[int(np.argmax(vals))])


def ga_solve(
    table: CompatibilityTable,
    grid: GridSpec,
    config: GaConfig,
    rng: np.random.Generator,
) -> GaResult:
    """Evolve piece-to-slot permutations; returns the best individual ever seen.

    Elitism copies the top slice unchanged each generation, so the best-so-far
    fitness trace is non-decreasing. Stops early after `early_stop_patience`
    generations without strict improvement.
    """
    n = grid.n_pieces
    pop = [random_permutation(n, rng) for _ in range(config.population)]
    fitness = np.array([layout_fitness(p, table, grid.k) for p in pop])
    n_elite = int(config.population * config.elitism_ratio)

    best_idx = int(np.argmax(fitness))
    best_perm = pop[best_idx].copy()
    best_fit = float(fitness[best_idx])
    trace = [best_fit]
    stale = 0
    gens = 0
    for _ in range(config.generations):
        gens += 1
        order = np.argsort(-fitness, kind="stable")
        nxt = [pop[int(i)].copy() for i in order[:n_elite]]
        while len(nxt) < config.population:
            i = _tournament(fitness, config.tournament_size, rng)
            j = _tournament(fitness, config.tournament_size, rng)
            if rng.random() < config.crossover_rate:
                cuts = rng.choice(n + 1, size=2, replace=False)
                c1, c2 = int(cuts.min()), int(cuts.max())
                child = pmx_crossover(pop[i], pop[j], c1, c2)
            else:
                child = pop[i].copy()
            if rng.random() < config.mutation_rate:
                _mutate(child, rng)
            nxt.append(child)
        pop = nxt
        fitness = np.array([layout_fitness(p, table, grid.k) for p in pop])
        gen_best = int(np.argmax(fitness))
        if float(fitness[gen_best]) > best_fit:
            best_fit = float(fitness[gen_best])
            best_perm = pop[gen_best].copy()
            stale = 0
        else:
            stale += 1
        trace.append(best_fit)
        if stale >= config.early_stop_patience:
            break
    return GaResult(
        permutation=best_perm,
        best_fitness=best_fit,
        generations=gens,
        fitness_trace=np.array(trace),
    )
