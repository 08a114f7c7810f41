"""NSGA-II design of ``(omega, phi, p1, p2)`` against the two asymptotic BERs.

Genes live in ``[0, 1]``.  A genome is decoded by clipping and normalizing
each weight block and scaling ``(p1, p2)`` back onto the simplex when their
sum exceeds one; the raw genes are what the variation operators act on.

Environmental selection is the usual elitist (mu + lambda) fill by
non-domination rank with crowding-distance truncation, except that an
overflowing first front is truncated to its hypervolume-maximal subset.
That keeps the first-front hypervolume non-decreasing from one generation
to the next.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import analysis
from .codec import CodeEnsemble
from .degree import new_distribution

log = logging.getLogger(__name__)

REFERENCE_POINT = (1.0, 1.0)
_ETA_TIE_TOL = 1e-12


class AllZeroBlock(ValueError):
    """A genome weight block has no positive mass after clipping."""


class EmptyFront(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Genome:
    omega_weights: np.ndarray
    phi_weights: np.ndarray
    p1_raw: float
    p2_raw: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "omega_weights", np.asarray(self.omega_weights, dtype=float))
        object.__setattr__(self, "phi_weights", np.asarray(self.phi_weights, dtype=float))
        object.__setattr__(self, "p1_raw", float(self.p1_raw))
        object.__setattr__(self, "p2_raw", float(self.p2_raw))

    @property
    def dimension(self) -> int:
        return len(self.omega_weights) + len(self.phi_weights) + 2

    def to_vector(self) -> np.ndarray:
        return np.concatenate((self.omega_weights, self.phi_weights, [self.p1_raw, self.p2_raw]))

    @classmethod
    def from_vector(cls, x: np.ndarray, b1: int, b2: int) -> "Genome":
        x = np.asarray(x, dtype=float)
        if len(x) != b1 + b2 + 2:
            raise ValueError(f"expected {b1 + b2 + 2} genes, got {len(x)}")
        return cls(x[:b1].copy(), x[b1:b1 + b2].copy(), x[-2], x[-1])


def _normalized_block(weights: np.ndarray, name: str) -> np.ndarray:
    w = np.clip(weights, 0.0, None)
    total = math.fsum(w)
    if not total > 0:
        raise AllZeroBlock(f"{name} weights have no positive mass")
    return w / total


def repair(g: Genome) -> Genome:
    """Feasible genome: nonnegative blocks summing to one, ``p1 + p2 <= 1``."""
    p1, p2 = max(g.p1_raw, 0.0), max(g.p2_raw, 0.0)
    if p1 + p2 > 1.0:
        s = p1 + p2
        p1, p2 = p1 / s, p2 / s
    return Genome(
        _normalized_block(g.omega_weights, "omega"),
        _normalized_block(g.phi_weights, "phi"),
        p1,
        p2,
    )


def repair_and_decode(g: Genome, rho: float, k: Optional[int], gamma: float) -> CodeEnsemble:
    r = repair(g)
    return CodeEnsemble(
        rho=rho,
        omega=new_distribution(r.omega_weights),
        phi=new_distribution(r.phi_weights),
        p1=r.p1_raw,
        p2=r.p2_raw,
        gamma=gamma,
        k=k,
    )


@dataclass(frozen=True, eq=False)
class DesignPoint:
    genome: Genome
    ber1: float
    ber2: float
    converged: bool = True

    @property
    def eta(self) -> float:
        if self.ber1 > 0:
            return self.ber2 / self.ber1
        return math.inf

    @property
    def objectives(self) -> tuple[float, float]:
        return (self.ber1, self.ber2)


def evaluate(g: Genome, rho: float, k: Optional[int], gamma: float) -> DesignPoint:
    return evaluate_many([g], rho, k, gamma)[0]


def evaluate_many(
    genomes: Sequence[Genome],
    rho: float,
    k: Optional[int],
    gamma: float,
    tol: float = analysis.DEFAULT_TOL,
    max_iter: int = analysis.DEFAULT_MAX_ITER,
) -> list[DesignPoint]:
    """Objectives for a batch of genomes, solved in one vectorized iteration."""
    ensembles = [repair_and_decode(g, rho, k, gamma) for g in genomes]
    fps = analysis.fixed_points([analysis.build_coefficients(e) for e in ensembles], tol, max_iter)
    return [DesignPoint(g, fp.ber1, fp.ber2, fp.converged) for g, fp in zip(genomes, fps)]


def _objective_array(points) -> np.ndarray:
    if len(points) and isinstance(points[0], DesignPoint):
        return np.array([p.objectives for p in points], dtype=float)
    return np.asarray(points, dtype=float).reshape(len(points), -1)


def dominates(a, b) -> bool:
    a, b = np.asarray(a), np.asarray(b)
    return bool(np.all(a <= b) and np.any(a < b))


def nondominated_sort(points) -> list[list[int]]:
    """Partition point indices into successive non-dominated fronts.

    ``points`` is a sequence of :class:`DesignPoint` or an ``(n, m)`` array of
    objectives to minimize.  Indices within a front are ascending.
    """
    f = _objective_array(points)
    n = len(f)
    if n == 0:
        raise ValueError("nothing to sort")
    le = np.all(f[:, None, :] <= f[None, :, :], axis=2)
    lt = np.any(f[:, None, :] < f[None, :, :], axis=2)
    dom = le & lt  # dom[i, j]: i dominates j
    counts = dom.sum(axis=0)
    fronts = []
    current = np.flatnonzero(counts == 0)
    while current.size:
        fronts.append(current.tolist())
        counts = counts - dom[current].sum(axis=0)
        counts[current] = -1
        current = np.flatnonzero(counts == 0)
    return fronts


def crowding_distance(points) -> np.ndarray:
    """Crowding distance of each member of one front.

    Boundary points of every objective get ``inf``; interior points sum the
    gap between their neighbors normalized by the objective's range.
    """
    f = _objective_array(points)
    n, m = f.shape
    dist = np.zeros(n)
    if n <= 2:
        dist[:] = np.inf
        return dist
    for j in range(m):
        order = np.argsort(f[:, j], kind="stable")
        col = f[order, j]
        dist[order[0]] = dist[order[-1]] = np.inf
        span = col[-1] - col[0]
        if span > 0:
            dist[order[1:-1]] += (col[2:] - col[:-2]) / span
    return dist


def hypervolume(points, reference: tuple[float, float] = REFERENCE_POINT) -> float:
    """Area dominated by a set of 2-objective points, bounded by ``reference``."""
    f = _objective_array(points)
    if len(f) == 0:
        return 0.0
    f = f[np.all(f < np.asarray(reference), axis=1)]
    if len(f) == 0:
        return 0.0
    f = f[np.lexsort((f[:, 1], f[:, 0]))]
    # staircase: keep the points that lower f2 while sweeping f1 upward
    stairs = [f[0]]
    for x, y in f[1:]:
        if y < stairs[-1][1]:
            stairs.append((x, y))
    stairs = np.array(stairs)
    right = np.append(stairs[1:, 0], reference[0])
    area = math.fsum((right - stairs[:, 0]) * (reference[1] - stairs[:, 1]))
    return float(area)


def hypervolume_subset(points, size: int, reference: tuple[float, float] = REFERENCE_POINT) -> list[int]:
    """Indices of a ``size``-subset of a non-dominated set with maximal hypervolume.

    Exact dynamic program over the staircase ordering; ``O(size * n^2)``.
    """
    f = _objective_array(points)
    n = len(f)
    if size >= n:
        return list(range(n))
    order = np.lexsort((-f[:, 1], f[:, 0]))
    x = np.minimum(f[order, 0], reference[0])
    h = np.clip(reference[1] - f[order, 1], 0.0, None)
    later = np.triu(np.ones((n, n), dtype=bool), k=1)
    widths = np.clip(x[None, :] - x[:, None], 0.0, None)
    value = h * (reference[0] - x)  # best area with j leftmost and one point chosen
    choices = []
    for _ in range(size - 1):
        cand = np.where(later, h[:, None] * widths + value[None, :], -np.inf)
        nxt = np.argmax(cand, axis=1)
        value = cand[np.arange(n), nxt]
        choices.append(nxt)
    j = int(np.argmax(value))
    picked = [j]
    for nxt in reversed(choices):
        j = int(nxt[j])
        picked.append(j)
    return sorted(int(order[i]) for i in picked)


@dataclass
class ParetoFront:
    """Mutually non-dominated design points, sorted by ``ber1`` ascending."""

    points: list[DesignPoint]
    hypervolume_history: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.points = sorted(self.points, key=lambda p: (p.ber1, -p.ber2))
        f = _objective_array(self.points)
        if len(f) and len(nondominated_sort(f)) > 1:
            raise ValueError("front contains dominated points")

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def objectives(self) -> np.ndarray:
        return _objective_array(self.points)

    def hypervolume(self) -> float:
        return hypervolume(self.points)


def select_by_eta(front: ParetoFront | Sequence[DesignPoint], target_eta: float) -> DesignPoint:
    """Point whose ``ber2/ber1`` is closest to ``target_eta`` in log space.

    Ties (within 1e-12) go to the smaller ``ber1``.
    """
    points = list(front)
    if not points:
        raise EmptyFront("cannot select from an empty front")
    if not target_eta > 0:
        raise ValueError("target eta must be positive")

    def distance(p: DesignPoint) -> float:
        if p.ber1 <= 0 or p.ber2 <= 0:
            return math.inf
        return abs(math.log(p.ber2) - math.log(p.ber1) - math.log(target_eta))

    best = points[0]
    best_d = distance(best)
    for p in points[1:]:
        d = distance(p)
        if d < best_d - _ETA_TIE_TOL or (abs(d - best_d) <= _ETA_TIE_TOL and p.ber1 < best.ber1):
            best, best_d = p, d
    return best


@dataclass(frozen=True)
class Problem:
    rho: float = 1.0
    gamma: float = 1.05
    b1: int = 100
    b2: int = 100
    k: Optional[int] = None

    @property
    def dimension(self) -> int:
        return self.b1 + self.b2 + 2


@dataclass(frozen=True)
class GAConfig:
    population: int = 100
    generations: int = 200
    crossover_prob: float = 0.9
    sbx_eta: float = 15.0
    mutation_eta: float = 20.0
    mutation_prob: Optional[float] = None  # per gene; None means 1 / dimension
    tol: float = analysis.DEFAULT_TOL
    max_iter: int = analysis.DEFAULT_MAX_ITER

    def __post_init__(self) -> None:
        if self.population < 2 or self.population % 2:
            raise ValueError("population must be an even number >= 2")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")


def _stream(seed: int, tag: int, a: int, b: int) -> np.random.Generator:
    return np.random.default_rng([seed, tag, a, b])


def sbx(p1: np.ndarray, p2: np.ndarray, eta: float, rng: np.random.Generator, lo=0.0, hi=1.0):
    """Bounded simulated binary crossover, each gene swapped with probability 1/2."""
    c1, c2 = p1.copy(), p2.copy()
    n = len(p1)
    u = rng.random(n)
    swap = rng.random(n) < 0.5
    for i in np.flatnonzero((rng.random(n) < 0.5) & (np.abs(p1 - p2) > 1e-14)):
        y1, y2 = min(p1[i], p2[i]), max(p1[i], p2[i])
        span = y2 - y1
        out = []
        for bound_gap in (y1 - lo, hi - y2):
            beta = 1.0 + 2.0 * bound_gap / span
            alpha = 2.0 - beta ** -(eta + 1.0)
            if u[i] <= 1.0 / alpha:
                betaq = (u[i] * alpha) ** (1.0 / (eta + 1.0))
            else:
                betaq = (1.0 / (2.0 - u[i] * alpha)) ** (1.0 / (eta + 1.0))
            out.append(betaq)
        a = 0.5 * ((y1 + y2) - out[0] * span)
        b = 0.5 * ((y1 + y2) + out[1] * span)
        a, b = min(max(a, lo), hi), min(max(b, lo), hi)
        if swap[i]:
            a, b = b, a
        c1[i], c2[i] = a, b
    return c1, c2


def polynomial_mutation(x: np.ndarray, eta: float, prob: float, rng: np.random.Generator, lo=0.0, hi=1.0):
    """Bounded polynomial mutation applied gene-wise with probability ``prob``."""
    y = x.copy()
    n = len(x)
    mutate = rng.random(n) < prob
    u = rng.random(n)
    span = hi - lo
    power = 1.0 / (eta + 1.0)
    for i in np.flatnonzero(mutate):
        d1 = (y[i] - lo) / span
        d2 = (hi - y[i]) / span
        if u[i] < 0.5:
            val = 2.0 * u[i] + (1.0 - 2.0 * u[i]) * (1.0 - d1) ** (eta + 1.0)
            dq = val ** power - 1.0
        else:
            val = 2.0 * (1.0 - u[i]) + 2.0 * (u[i] - 0.5) * (1.0 - d2) ** (eta + 1.0)
            dq = 1.0 - val ** power
        y[i] = min(max(y[i] + dq * span, lo), hi)
    return y


def _rank_and_crowding(f: np.ndarray):
    rank = np.empty(len(f), dtype=np.int64)
    crowd = np.empty(len(f))
    for r, front in enumerate(nondominated_sort(f)):
        rank[front] = r
        crowd[front] = crowding_distance(f[front])
    return rank, crowd


def _environmental_selection(f: np.ndarray, size: int) -> np.ndarray:
    chosen: list[int] = []
    for r, front in enumerate(nondominated_sort(f)):
        room = size - len(chosen)
        if room <= 0:
            break
        if len(front) <= room:
            chosen.extend(front)
        elif r == 0:
            sub = hypervolume_subset(f[front], room)
            chosen.extend(front[i] for i in sub)
        else:
            crowd = crowding_distance(f[front])
            order = np.argsort(-crowd, kind="stable")
            chosen.extend(front[i] for i in order[:room])
    return np.array(chosen, dtype=np.int64)


def _tournament(rank, crowd, count, rng) -> np.ndarray:
    a = rng.integers(0, len(rank), count)
    b = rng.integers(0, len(rank), count)
    a_wins = (rank[a] < rank[b]) | ((rank[a] == rank[b]) & (crowd[a] > crowd[b]))
    b_wins = (rank[b] < rank[a]) | ((rank[a] == rank[b]) & (crowd[b] > crowd[a]))
    coin = rng.random(count) < 0.5
    return np.where(a_wins, a, np.where(b_wins, b, np.where(coin, a, b)))


def _first_front(points: list[DesignPoint]) -> list[DesignPoint]:
    front = [points[i] for i in nondominated_sort(points)[0]]
    seen, unique = set(), []
    for p in front:
        if p.objectives not in seen:
            seen.add(p.objectives)
            unique.append(p)
    return unique


def evolve(
    problem: Problem,
    config: GAConfig = GAConfig(),
    seed: int = 0,
    on_generation: Optional[Callable[[int, list[DesignPoint]], None]] = None,
) -> ParetoFront:
    """Run NSGA-II and return the final first front.

    Deterministic in ``seed``.  ``on_generation(gen, population)`` is called
    after the initial evaluation (gen 0) and after every generation.  The
    returned front carries the first-front hypervolume of every generation.
    """
    dim = problem.dimension
    pm = config.mutation_prob if config.mutation_prob is not None else 1.0 / dim
    n = config.population

    def decode(x):
        return Genome.from_vector(x, problem.b1, problem.b2)

    def score(xs):
        return evaluate_many([decode(x) for x in xs], problem.rho, problem.k, problem.gamma,
                             config.tol, config.max_iter)

    genes = np.array([_stream(seed, 0, i, 0).random(dim) for i in range(n)])
    points = score(genes)
    f = _objective_array(points)
    history = [hypervolume(f[nondominated_sort(f)[0]])]
    if on_generation:
        on_generation(0, points)

    for gen in range(1, config.generations + 1):
        rank, crowd = _rank_and_crowding(f)
        parents = _tournament(rank, crowd, n, _stream(seed, 1, gen, 0))
        children = []
        for pair in range(n // 2):
            rng = _stream(seed, 2, gen, pair)
            a, b = genes[parents[2 * pair]], genes[parents[2 * pair + 1]]
            if rng.random() < config.crossover_prob:
                a, b = sbx(a, b, config.sbx_eta, rng)
            children.append(polynomial_mutation(a, config.mutation_eta, pm, rng))
            children.append(polynomial_mutation(b, config.mutation_eta, pm, rng))
        children = np.array(children)
        # an all-zero weight block is undecodable; reseed such genes uniformly
        for c in children:
            for block in (slice(0, problem.b1), slice(problem.b1, problem.b1 + problem.b2)):
                if not np.any(c[block] > 0):
                    c[block] = 1.0
        merged_genes = np.vstack((genes, children))
        merged_points = points + score(children)
        merged_f = np.vstack((f, _objective_array(merged_points[n:])))
        keep = _environmental_selection(merged_f, n)
        genes = merged_genes[keep]
        points = [merged_points[i] for i in keep]
        f = merged_f[keep]
        history.append(hypervolume(f[nondominated_sort(f)[0]]))
        if on_generation:
            on_generation(gen, points)
        if gen % 25 == 0:
            log.info("generation %d: first-front hypervolume %.6f", gen, history[-1])

    return ParetoFront(_first_front(points), history)


def point_record(point: DesignPoint, rho: float, gamma: float) -> dict:
    """JSON-ready description of a design point's decoded ensemble."""
    e = repair_and_decode(point.genome, rho, None, gamma)
    return {
        "rho": rho,
        "gamma": gamma,
        "p1": e.p1,
        "p2": e.p2,
        "p3": e.p3,
        "omega": {str(d): p for d, p in e.omega.as_dict().items()},
        "phi": {str(d): p for d, p in e.phi.as_dict().items()},
        "ber1": point.ber1,
        "ber2": point.ber2,
        "eta": point.eta,
        "converged": point.converged,
    }
