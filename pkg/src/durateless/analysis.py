"""Asymptotic bit error rates from the two-tree And-Or recursion.

Each source's unrecovered probability evolves as

    y1' = exp(-a1 * S1(1 - y1) * (pp1 + pp3 * T2(1 - y2)))
    y2' = exp(-a2 * S2(1 - y2) * (pp2 + pp4 * T1(1 - y1)))

where ``S`` is the edge-perspective generating function of a source's own
distribution, ``T`` the node-perspective function of the other source's
distribution, ``a`` the Poisson mean of variable-node degrees, and ``pp``
the relay weights conditioned on the edge's source.  The combined-check
term is the Cauchy product ``S1 * T2`` rather than an explicit double sum.

The recursion is vectorized over rows so the optimizer can evaluate a whole
population at once; the scalar API is the one-row case of the same code.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .codec import CodeEnsemble
from .degree import edge_perspective, mean_degree

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10_000


@dataclass(frozen=True)
class AndOrCoefficients:
    beta1: np.ndarray  # edge perspective of omega, indexed 0..B1-1
    beta2: np.ndarray  # edge perspective of phi, indexed 0..B2-1
    beta3: np.ndarray  # phi_i, indexed 0..B2 (entry 0 is zero)
    beta4: np.ndarray  # omega_i, indexed 0..B1 (entry 0 is zero)
    alpha1: float
    alpha2: float
    pp1: float
    pp2: float
    pp3: float
    pp4: float


class FixedPointState(NamedTuple):
    y1: float
    y2: float
    iterations: int = 0
    converged: bool = False


class FixedPoint(NamedTuple):
    ber1: float
    ber2: float
    iterations: int
    converged: bool


def _conditional(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def build_coefficients(ensemble: CodeEnsemble) -> AndOrCoefficients:
    """Tree coefficients for ``ensemble``.

    When the relay never touches a source (``p2 = 1`` or ``p1 = 1``), its
    conditional weights are 0/0; they are set to zero, which together with a
    zero Poisson mean pins that source's error rate at 1.
    """
    e = ensemble
    mu1, mu2 = mean_degree(e.omega), mean_degree(e.phi)
    alpha1 = (1.0 - e.p2) * mu1 * e.gamma * (1.0 + e.rho) / e.rho
    alpha2 = (1.0 - e.p1) * mu2 * e.gamma * (1.0 + e.rho)
    return AndOrCoefficients(
        beta1=edge_perspective(e.omega),
        beta2=edge_perspective(e.phi),
        beta3=np.concatenate(([0.0], e.phi.probs)),
        beta4=np.concatenate(([0.0], e.omega.probs)),
        alpha1=max(alpha1, 0.0),
        alpha2=max(alpha2, 0.0),
        pp1=_conditional(e.p1, 1.0 - e.p2),
        pp3=_conditional(e.p3, 1.0 - e.p2),
        pp2=_conditional(e.p2, 1.0 - e.p1),
        pp4=_conditional(e.p3, 1.0 - e.p1),
    )


@dataclass
class _Stacked:
    """Row-stacked coefficients, zero-padded to a common length."""

    beta1: np.ndarray
    beta2: np.ndarray
    beta3: np.ndarray
    beta4: np.ndarray
    alpha1: np.ndarray
    alpha2: np.ndarray
    pp1: np.ndarray
    pp2: np.ndarray
    pp3: np.ndarray
    pp4: np.ndarray

    @classmethod
    def from_coefficients(cls, coeffs: Sequence[AndOrCoefficients]) -> "_Stacked":
        def pad(name):
            rows = [getattr(c, name) for c in coeffs]
            out = np.zeros((len(rows), max(len(r) for r in rows)))
            for i, r in enumerate(rows):
                out[i, : len(r)] = r
            return out

        def col(name):
            return np.array([getattr(c, name) for c in coeffs], dtype=float)

        return cls(
            *(pad(n) for n in ("beta1", "beta2", "beta3", "beta4")),
            *(col(n) for n in ("alpha1", "alpha2", "pp1", "pp2", "pp3", "pp4")),
        )

    def take(self, rows: np.ndarray) -> "_Stacked":
        return _Stacked(**{k: v[rows] for k, v in vars(self).items()})


def _series(coeffs: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Row-wise ``sum_i coeffs[r, i] * x[r] ** i``."""
    powers = x[:, None] ** np.arange(coeffs.shape[1])
    return np.einsum("ij,ij->i", coeffs, powers)


def _step(c: _Stacked, y1: np.ndarray, y2: np.ndarray):
    x1, x2 = 1.0 - y1, 1.0 - y2
    s1 = _series(c.beta1, x1)
    s2 = _series(c.beta2, x2)
    t2 = _series(c.beta3, x2)
    t1 = _series(c.beta4, x1)
    y1n = np.exp(-c.alpha1 * s1 * (c.pp1 + c.pp3 * t2))
    y2n = np.exp(-c.alpha2 * s2 * (c.pp2 + c.pp4 * t1))
    return y1n, y2n


def cross_term(coeffs: AndOrCoefficients, y1: float, y2: float) -> tuple[float, float]:
    """Combined-check recovery terms ``(pp3 S1 T2, pp4 S2 T1)`` at ``(y1, y2)``."""
    c = _Stacked.from_coefficients([coeffs])
    x1, x2 = np.array([1.0 - y1]), np.array([1.0 - y2])
    first = coeffs.pp3 * _series(c.beta1, x1) * _series(c.beta3, x2)
    second = coeffs.pp4 * _series(c.beta2, x2) * _series(c.beta4, x1)
    return float(first[0]), float(second[0])


def iterate_once(coeffs: AndOrCoefficients, state: FixedPointState) -> FixedPointState:
    c = _Stacked.from_coefficients([coeffs])
    y1, y2 = _step(c, np.array([state.y1]), np.array([state.y2]))
    return FixedPointState(float(y1[0]), float(y2[0]), state.iterations + 1, False)


def iterates(coeffs: AndOrCoefficients, max_iter: int = DEFAULT_MAX_ITER) -> Iterator[FixedPointState]:
    """Yield the iterate sequence from ``(1, 1)``, starting with the initial state."""
    state = FixedPointState(1.0, 1.0)
    yield state
    for _ in range(max_iter):
        state = iterate_once(coeffs, state)
        yield state


def _solve(c: _Stacked, tol: float, max_iter: int):
    n = len(c.alpha1)
    y1, y2 = np.ones(n), np.ones(n)
    iterations = np.zeros(n, dtype=np.int64)
    converged = np.zeros(n, dtype=bool)
    active = np.arange(n)
    sub = c
    for it in range(1, max_iter + 1):
        if active.size == 0:
            break
        n1, n2 = _step(sub, y1[active], y2[active])
        change = np.maximum(np.abs(n1 - y1[active]), np.abs(n2 - y2[active]))
        y1[active], y2[active] = n1, n2
        iterations[active] = it
        done = change < tol
        if done.any():
            converged[active[done]] = True
            keep = ~done
            active = active[keep]
            sub = sub.take(keep)
    return y1, y2, iterations, converged


def fixed_points(
    coeffs: Sequence[AndOrCoefficients],
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> list[FixedPoint]:
    """Fixed points of many coefficient sets, iterated together."""
    if not coeffs:
        return []
    y1, y2, its, conv = _solve(_Stacked.from_coefficients(coeffs), tol, max_iter)
    return [
        FixedPoint(float(a), float(b), int(i), bool(ok))
        for a, b, i, ok in zip(y1, y2, its, conv)
    ]


def fixed_point(
    ensemble: CodeEnsemble,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> FixedPoint:
    """Asymptotic ``(BER1, BER2)`` of ``ensemble``.

    Iterates from ``(1, 1)`` until the largest change drops below ``tol``.
    If ``max_iter`` is reached first the last iterate is returned with
    ``converged=False``; by monotonicity it bounds the true rates from above.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    result = fixed_points([build_coefficients(ensemble)], tol, max_iter)[0]
    if not result.converged:
        log.warning("fixed point not converged after %d iterations", max_iter)
    return result


def ber_curve(
    ensemble: CodeEnsemble,
    gamma_grid: Sequence[float],
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> list[tuple[float, float, float, int, bool]]:
    """Rows ``(gamma, ber1, ber2, iterations, converged)`` over ``gamma_grid``."""
    rows = []
    for gamma in gamma_grid:
        if not gamma > 0:
            raise ValueError(f"overheads must be positive, got {gamma}")
        fp = fixed_point(replace(ensemble, gamma=float(gamma), p3=None), tol, max_iter)
        rows.append((float(gamma), fp.ber1, fp.ber2, fp.iterations, fp.converged))
    return rows

