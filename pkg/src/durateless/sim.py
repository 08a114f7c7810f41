"""Monte Carlo evaluation of finite-length DU-rateless codes."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from . import analysis
from .codec import CodeEnsemble, empirical_ber, generate_received, peel_decode

log = logging.getLogger(__name__)

ANALYTICAL_FLOOR = 1e-3
RELATIVE_SLACK = 0.25
SIGMAS = 3.0


@dataclass(frozen=True)
class TrialBatchResult:
    ensemble: CodeEnsemble
    k: int
    trials: int
    ber1_mean: float
    ber2_mean: float
    ber1_stderr: float
    ber2_stderr: float
    seed: int


@dataclass(frozen=True)
class ComparisonRow:
    gamma: float
    k: int
    trials: int
    ber1_mean: float
    ber1_stderr: float
    ber2_mean: float
    ber2_stderr: float
    analytical_ber1: float
    analytical_ber2: float
    z1: float
    z2: float
    pass1: Optional[bool]  # None when the analytical rate is below the floor
    pass2: Optional[bool]


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent stream for one trial; adding trials never reshuffles old ones."""
    return np.random.default_rng([seed, trial])


def run_trial(ensemble: CodeEnsemble, seed: int, trial: int, check: bool = False) -> tuple[float, float]:
    rng = trial_rng(seed, trial)
    payloads1 = rng.integers(0, 2, ensemble.n1, dtype=np.uint8)
    payloads2 = rng.integers(0, 2, ensemble.n2, dtype=np.uint8)
    graph = generate_received(ensemble, payloads1, payloads2, rng)
    peel_decode(graph)
    if check:
        ok1 = np.asarray(graph.decoded1)[graph.recovered1] == payloads1[graph.recovered1]
        ok2 = np.asarray(graph.decoded2)[graph.recovered2] == payloads2[graph.recovered2]
        if not (ok1.all() and ok2.all()):
            raise AssertionError(f"peeling recovered a wrong value in trial {trial}")
    return empirical_ber(graph)


def _run_chunk(args) -> list[tuple[float, float]]:
    ensemble, seed, trials, check = args
    return [run_trial(ensemble, seed, t, check) for t in trials]


def _mean_stderr(values: np.ndarray) -> tuple[float, float]:
    mean = float(values.mean())
    if len(values) < 2:
        return mean, 0.0
    return mean, float(values.std(ddof=1) / math.sqrt(len(values)))


def run_trials(
    ensemble: CodeEnsemble,
    k: int,
    trials: int,
    seed: int,
    workers: int = 1,
    check: bool = False,
) -> TrialBatchResult:
    """Encode, relay and peel ``trials`` times at block length ``k``.

    BER is averaged over per-trial error fractions; the standard error is the
    sample standard deviation across trials over ``sqrt(trials)``.  Results
    depend only on ``(ensemble, k, trials, seed)``, not on ``workers``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    ensemble = replace(ensemble, k=k, p3=None)
    started = time.perf_counter()
    if workers > 1 and trials > 1:
        chunks = [list(range(trials))[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_run_chunk, [(ensemble, seed, c, check) for c in chunks]))
        by_trial = {}
        for chunk, part in zip(chunks, parts):
            by_trial.update(zip(chunk, part))
        bers = np.array([by_trial[t] for t in range(trials)])
    else:
        bers = np.array(_run_chunk((ensemble, seed, range(trials), check)))
    log.info("%d trials at k=%d, gamma=%g in %.2fs", trials, k, ensemble.gamma, time.perf_counter() - started)
    m1, s1 = _mean_stderr(bers[:, 0])
    m2, s2 = _mean_stderr(bers[:, 1])
    return TrialBatchResult(ensemble, k, trials, m1, m2, s1, s2, seed)


def sweep_gamma(
    ensemble: CodeEnsemble,
    k: int,
    gamma_grid: Sequence[float],
    trials: int,
    seed: int,
    workers: int = 1,
) -> list[TrialBatchResult]:
    """:func:`run_trials` per overhead, rows sorted by overhead.

    Every overhead reuses the base seed, so a row never depends on which other
    overheads are in the grid.
    """
    out = []
    for gamma in sorted(float(g) for g in gamma_grid):
        if not gamma > 0:
            raise ValueError(f"overheads must be positive, got {gamma}")
        e = replace(ensemble, gamma=gamma, p3=None)
        out.append(run_trials(e, k, trials, seed, workers))
    return out


def _z(empirical: float, analytical: float, stderr: float) -> float:
    diff = empirical - analytical
    if diff == 0:
        return 0.0
    if stderr == 0:
        return math.copysign(math.inf, diff)
    return diff / stderr


def _passes(empirical: float, analytical: float, stderr: float) -> Optional[bool]:
    if analytical <= ANALYTICAL_FLOOR:
        return None
    return abs(empirical - analytical) <= max(SIGMAS * stderr, RELATIVE_SLACK * analytical)


def compare_with_analysis(
    batch: TrialBatchResult,
    analytical_ensemble: Optional[CodeEnsemble] = None,
) -> ComparisonRow:
    """Set the empirical BERs beside the asymptotic fixed point.

    A source passes when the gap is within ``max(3 stderr, 0.25 analytical)``;
    sources whose analytical BER is at most 1e-3 get ``None``.  The analytical
    side defaults to the simulated ensemble.
    """
    target = analytical_ensemble if analytical_ensemble is not None else batch.ensemble
    fp = analysis.fixed_point(target)
    return ComparisonRow(
        gamma=batch.ensemble.gamma,
        k=batch.k,
        trials=batch.trials,
        ber1_mean=batch.ber1_mean,
        ber1_stderr=batch.ber1_stderr,
        ber2_mean=batch.ber2_mean,
        ber2_stderr=batch.ber2_stderr,
        analytical_ber1=fp.ber1,
        analytical_ber2=fp.ber2,
        z1=_z(batch.ber1_mean, fp.ber1, batch.ber1_stderr),
        z2=_z(batch.ber2_mean, fp.ber2, batch.ber2_stderr),
        pass1=_passes(batch.ber1_mean, fp.ber1, batch.ber1_stderr),
        pass2=_passes(batch.ber2_mean, fp.ber2, batch.ber2_stderr),
    )
