"""Finite check-node degree distributions.

A :class:`DegreeDistribution` stores probabilities densely over degrees
``1..B``; ``probs[i]`` is the mass at degree ``i + 1``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np

RawWeights = Union[Mapping[int, float], Mapping[str, float], Sequence[float], np.ndarray]

# Normalization is skipped for inputs already this close to 1 so that
# serialized distributions reload bit-exactly.
_NORMALIZED_TOL = 1e-12


class DegreeError(ValueError):
    """Base class for invalid degree distributions."""


class AllZeroError(DegreeError):
    pass


class NegativeWeightError(DegreeError):
    pass


class NonFiniteError(DegreeError):
    pass


@dataclass(frozen=True, eq=False)
class DegreeDistribution:
    """Probability mass over check-node degrees ``1..max_degree``.

    Build instances with :func:`new_distribution`; the constructor assumes
    ``probs`` is already validated and normalized.
    """

    probs: np.ndarray
    _cdf: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        probs = np.array(self.probs, dtype=float)
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        cdf = np.cumsum(probs)
        cdf[-1] = 1.0
        cdf.setflags(write=False)
        object.__setattr__(self, "_cdf", cdf)

    @property
    def max_degree(self) -> int:
        return len(self.probs)

    @property
    def degrees(self) -> np.ndarray:
        return np.arange(1, len(self.probs) + 1)

    def __getitem__(self, degree: int) -> float:
        if 1 <= degree <= len(self.probs):
            return float(self.probs[degree - 1])
        return 0.0

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DegreeDistribution):
            return NotImplemented
        return np.array_equal(self.probs, other.probs)

    def __hash__(self) -> int:
        return hash(self.probs.tobytes())

    def as_dict(self) -> dict[int, float]:
        """Nonzero entries as ``{degree: probability}``."""
        return {int(d): float(p) for d, p in zip(self.degrees, self.probs) if p > 0}

    def to_json(self) -> str:
        return json.dumps({str(d): p for d, p in self.as_dict().items()})

    @classmethod
    def from_json(cls, text: str) -> "DegreeDistribution":
        return new_distribution(json.loads(text))

    def padded(self, length: int) -> np.ndarray:
        """Probabilities zero-padded to ``length`` degrees."""
        out = np.zeros(length)
        out[: len(self.probs)] = self.probs
        return out


def _dense_weights(raw: RawWeights) -> np.ndarray:
    if isinstance(raw, Mapping):
        if not raw:
            raise AllZeroError("empty degree map")
        items = {}
        for key, weight in raw.items():
            degree = int(key)
            if degree < 1:
                raise DegreeError(f"degree must be >= 1, got {key!r}")
            items[degree] = items.get(degree, 0.0) + float(weight)
        dense = np.zeros(max(items))
        for degree, weight in items.items():
            dense[degree - 1] = weight
        return dense
    dense = np.asarray(raw, dtype=float).ravel()
    if dense.size == 0:
        raise AllZeroError("empty weight vector")
    return dense.copy()


def new_distribution(raw: RawWeights) -> DegreeDistribution:
    """Validate raw weights and normalize them to a distribution.

    ``raw`` is either a mapping from degree (int or numeric string) to
    weight, or a sequence whose entry ``i`` is the weight of degree ``i + 1``.
    Trailing zero-weight degrees are dropped; interior zeros are kept.

    Raises:
        NonFiniteError: a weight is NaN or infinite.
        NegativeWeightError: a weight is negative.
        AllZeroError: no weight is strictly positive.
    """
    weights = _dense_weights(raw)
    if not np.all(np.isfinite(weights)):
        raise NonFiniteError("degree weights must be finite")
    if np.any(weights < 0):
        raise NegativeWeightError("degree weights must be nonnegative")
    positive = np.flatnonzero(weights > 0)
    if positive.size == 0:
        raise AllZeroError("degree weights have no positive mass")
    weights = weights[: positive[-1] + 1]
    total = math.fsum(weights)
    if abs(total - 1.0) > _NORMALIZED_TOL:
        weights = weights / total
    return DegreeDistribution(weights)


def mean_degree(d: DegreeDistribution) -> float:
    return float(np.dot(d.degrees, d.probs))


def edge_perspective(d: DegreeDistribution) -> np.ndarray:
    """Edge-perspective vector ``beta`` indexed ``0..B-1``.

    ``beta[i]`` is the probability that a uniformly chosen edge lands on a
    check node with ``i`` other edges, i.e. ``(i+1) d_{i+1} / mean``.
    """
    weighted = d.degrees * d.probs
    return weighted / weighted.sum()


def convolve(a: DegreeDistribution, b: DegreeDistribution) -> DegreeDistribution:
    """Distribution of the sum of independent draws from ``a`` and ``b``.

    The result is indexed from degree 1 like every distribution, so degree 1
    always carries zero mass here.
    """
    # np.convolve of the 1-based vectors gives mass at degrees 2..Ba+Bb
    mass = np.concatenate(([0.0], np.convolve(a.probs, b.probs)))
    return DegreeDistribution(mass)


def sample_degree(d: DegreeDistribution, rng: np.random.Generator) -> int:
    """Draw one degree by inverse CDF."""
    return int(np.searchsorted(d._cdf, rng.random(), side="right")) + 1


def sample_degrees(d: DegreeDistribution, rng: np.random.Generator, size: int) -> np.ndarray:
    """Vectorized :func:`sample_degree`; same stream semantics per draw."""
    return np.searchsorted(d._cdf, rng.random(size), side="right") + 1


def robust_soliton(k: int, c: float, delta: float) -> DegreeDistribution:
    """Robust soliton distribution for a single LT source of ``k`` symbols.

    Ideal soliton ``1/k, 1/(i(i-1))`` plus the spike component
    ``R/(ik)`` for ``i < k/R`` and ``R ln(R/delta)/k`` at ``i = k/R``,
    with ``R = c ln(k/delta) sqrt(k)``.
    """
    if k < 2 or not c > 0 or not 0 < delta < 1:
        raise DegreeError(f"invalid robust soliton parameters k={k}, c={c}, delta={delta}")
    degrees = np.arange(1, k + 1, dtype=float)
    ideal = np.empty(k)
    ideal[0] = 1.0 / k
    ideal[1:] = 1.0 / (degrees[1:] * (degrees[1:] - 1.0))

    ripple = c * math.log(k / delta) * math.sqrt(k)
    spike_at = min(max(int(round(k / ripple)), 1), k)
    tau = np.zeros(k)
    tau[: spike_at - 1] = ripple / (degrees[: spike_at - 1] * k)
    # R < delta makes the log negative; the spike then carries no mass
    tau[spike_at - 1] = max(ripple * math.log(ripple / delta) / k, 0.0)
    return new_distribution(ideal + tau)
