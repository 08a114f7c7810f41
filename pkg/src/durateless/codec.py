"""Source encoding, the three-way relay, and the peeling decoder.

Received output symbols are stored in compressed-row form: for check ``c``
its source-1 neighbors are ``idx1[ptr1[c]:ptr1[c+1]]`` and likewise for
source 2.  :class:`CheckNode` is the per-check view of the same data.
"""

from __future__ import annotations

import csv
import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, TextIO

import numpy as np

from .degree import DegreeDistribution, sample_degree, sample_degrees

P_SUM_TOL = 1e-12


class EnsembleError(ValueError):
    """Invalid DU-rateless code parameters."""


class DegreeExceedsBlock(EnsembleError):
    """A degree distribution reaches past its source block length."""


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class CodeEnsemble:
    """Parameter set ``(rho k, k, omega, phi, p1, p2, p3, gamma)``.

    ``k`` may be left as ``None`` for asymptotic work, which never needs a
    block length.  ``p3`` defaults to ``1 - p1 - p2``.
    """

    rho: float
    omega: DegreeDistribution
    phi: DegreeDistribution
    p1: float
    p2: float
    gamma: float
    k: Optional[int] = None
    p3: Optional[float] = None

    def __post_init__(self) -> None:
        if not 0 < self.rho <= 1:
            raise EnsembleError(f"rho must be in (0, 1], got {self.rho}")
        if not (math.isfinite(self.gamma) and self.gamma >= 0):
            raise EnsembleError(f"gamma must be a finite nonnegative number, got {self.gamma}")
        p3 = 1.0 - self.p1 - self.p2 if self.p3 is None else self.p3
        if -P_SUM_TOL < p3 < 0:
            p3 = 0.0
        object.__setattr__(self, "p3", float(p3))
        for name in ("p1", "p2", "p3"):
            value = getattr(self, name)
            if not 0 <= value <= 1:
                raise EnsembleError(f"{name} must be in [0, 1], got {value}")
        if abs(self.p1 + self.p2 + self.p3 - 1.0) > P_SUM_TOL:
            raise EnsembleError("p1 + p2 + p3 must equal 1")
        if self.k is not None:
            if self.k < 1 or self.n1 < 1:
                raise EnsembleError(f"rho*k must round to a positive integer (k={self.k})")
            if self.omega.max_degree > self.n1:
                raise DegreeExceedsBlock(
                    f"omega max degree {self.omega.max_degree} exceeds source-1 block {self.n1}"
                )
            if self.phi.max_degree > self.n2:
                raise DegreeExceedsBlock(
                    f"phi max degree {self.phi.max_degree} exceeds source-2 block {self.n2}"
                )

    @property
    def n1(self) -> int:
        """Source-1 block length ``round(rho k)``."""
        return round_half_up(self.rho * self._require_k())

    @property
    def n2(self) -> int:
        return self._require_k()

    @property
    def n_received(self) -> int:
        """Output symbols collected at the destination, ``(1 + rho) gamma k``."""
        return round_half_up((1.0 + self.rho) * self.gamma * self._require_k())

    def _require_k(self) -> int:
        if self.k is None:
            raise EnsembleError("this operation needs a block length k")
        return self.k


@dataclass(frozen=True)
class CheckNode:
    source1: frozenset
    source2: frozenset
    value: int = 0

    @property
    def kind(self) -> str:
        if self.source1 and self.source2:
            return "combined"
        return "forwarded-1" if self.source1 else "forwarded-2"

    @property
    def degree(self) -> int:
        return len(self.source1) + len(self.source2)


def _uniform_subsets(block_len: int, sizes: np.ndarray, rng: np.random.Generator):
    """Uniform random subsets of ``range(block_len)``, one per entry of ``sizes``.

    Floyd's algorithm vectorized over all rows sharing a size.  Returns
    ``(ptr, idx)`` with each row's indices sorted.
    """
    sizes = np.asarray(sizes, dtype=np.int64)
    ptr = np.zeros(len(sizes) + 1, dtype=np.int64)
    np.cumsum(sizes, out=ptr[1:])
    idx = np.empty(ptr[-1], dtype=np.int64)
    for d in np.unique(sizes):
        d = int(d)
        if d == 0:
            continue
        if d > block_len:
            raise DegreeExceedsBlock(f"degree {d} exceeds block length {block_len}")
        rows = np.flatnonzero(sizes == d)
        chosen = np.empty((len(rows), d), dtype=np.int64)
        for col, j in enumerate(range(block_len - d, block_len)):
            t = rng.integers(0, j + 1, size=len(rows))
            taken = (chosen[:, :col] == t[:, None]).any(axis=1)
            chosen[:, col] = np.where(taken, j, t)
        chosen.sort(axis=1)
        positions = ptr[rows][:, None] + np.arange(d)
        idx[positions] = chosen
    return ptr, idx


def encode_symbol(block_len: int, dist: DegreeDistribution, rng: np.random.Generator) -> np.ndarray:
    """Neighbor indices of one encoded symbol: a uniform ``d``-subset, ``d ~ dist``."""
    if dist.max_degree > block_len:
        raise DegreeExceedsBlock(f"max degree {dist.max_degree} exceeds block length {block_len}")
    d = sample_degree(dist, rng)
    _, idx = _uniform_subsets(block_len, np.array([d]), rng)
    return idx


def relay_step(
    ensemble: CodeEnsemble,
    rng: np.random.Generator,
    payloads1: Optional[np.ndarray] = None,
    payloads2: Optional[np.ndarray] = None,
) -> CheckNode:
    """One relay output: forward source 1, forward source 2, or XOR one of each."""
    u = rng.random()
    s1: Sequence[int] = ()
    s2: Sequence[int] = ()
    if u < ensemble.p1 or u >= ensemble.p1 + ensemble.p2:
        s1 = encode_symbol(ensemble.n1, ensemble.omega, rng).tolist()
    if ensemble.p1 <= u:
        s2 = encode_symbol(ensemble.n2, ensemble.phi, rng).tolist()
    value = 0
    if payloads1 is not None:
        for i in s1:
            value ^= int(payloads1[i])
    if payloads2 is not None:
        for i in s2:
            value ^= int(payloads2[i])
    return CheckNode(frozenset(s1), frozenset(s2), value)


@dataclass
class DecoderGraph:
    """Bipartite graph of received checks over two variable-node blocks."""

    n1: int
    n2: int
    ptr1: np.ndarray
    idx1: np.ndarray
    ptr2: np.ndarray
    idx2: np.ndarray
    values: list
    recovered1: np.ndarray = field(default=None)
    recovered2: np.ndarray = field(default=None)
    decoded1: list = field(default=None)
    decoded2: list = field(default=None)

    def __post_init__(self) -> None:
        n_checks = len(self.ptr1) - 1
        if len(self.ptr2) - 1 != n_checks or len(self.values) != n_checks:
            raise ValueError("inconsistent check arrays")
        if len(self.idx1) and (self.idx1.min() < 0 or self.idx1.max() >= self.n1):
            raise ValueError("source-1 neighbor index out of range")
        if len(self.idx2) and (self.idx2.min() < 0 or self.idx2.max() >= self.n2):
            raise ValueError("source-2 neighbor index out of range")
        if self.recovered1 is None:
            self.recovered1 = np.zeros(self.n1, dtype=bool)
        if self.recovered2 is None:
            self.recovered2 = np.zeros(self.n2, dtype=bool)
        if self.decoded1 is None:
            self.decoded1 = [0] * self.n1
        if self.decoded2 is None:
            self.decoded2 = [0] * self.n2

    def __len__(self) -> int:
        return len(self.ptr1) - 1

    @property
    def checks(self) -> list[CheckNode]:
        out = []
        for c in range(len(self)):
            s1 = self.idx1[self.ptr1[c]:self.ptr1[c + 1]].tolist()
            s2 = self.idx2[self.ptr2[c]:self.ptr2[c + 1]].tolist()
            out.append(CheckNode(frozenset(s1), frozenset(s2), self.values[c]))
        return out

    def kinds(self) -> np.ndarray:
        """0 forwarded-1, 1 forwarded-2, 2 combined."""
        has1 = np.diff(self.ptr1) > 0
        has2 = np.diff(self.ptr2) > 0
        return np.where(has1 & has2, 2, np.where(has1, 0, 1))

    def degrees(self) -> np.ndarray:
        return np.diff(self.ptr1) + np.diff(self.ptr2)

    @classmethod
    def from_checks(cls, checks: Iterable[CheckNode], n1: int, n2: int) -> "DecoderGraph":
        checks = list(checks)
        s1 = [sorted(c.source1) for c in checks]
        s2 = [sorted(c.source2) for c in checks]
        ptr1 = np.zeros(len(checks) + 1, dtype=np.int64)
        ptr2 = np.zeros(len(checks) + 1, dtype=np.int64)
        np.cumsum([len(s) for s in s1], out=ptr1[1:])
        np.cumsum([len(s) for s in s2], out=ptr2[1:])
        idx1 = np.array([i for s in s1 for i in s], dtype=np.int64)
        idx2 = np.array([i for s in s2 for i in s], dtype=np.int64)
        return cls(n1, n2, ptr1, idx1, ptr2, idx2, [c.value for c in checks])

    def to_json(self) -> str:
        checks = [
            {"s1": sorted(c.source1), "s2": sorted(c.source2), "value": c.value}
            for c in self.checks
        ]
        return json.dumps({"n1": self.n1, "n2": self.n2, "checks": checks})

    @classmethod
    def from_json(cls, text: str) -> "DecoderGraph":
        doc = json.loads(text)
        checks = [
            CheckNode(frozenset(c["s1"]), frozenset(c["s2"]), int(c.get("value", 0)))
            for c in doc["checks"]
        ]
        return cls.from_checks(checks, int(doc["n1"]), int(doc["n2"]))


def _symbol_ints(payloads: np.ndarray) -> list:
    """Payload block as one Python int per symbol (any byte width)."""
    payloads = np.asarray(payloads, dtype=np.uint8)
    if payloads.ndim == 1:
        return payloads.tolist()
    return [int.from_bytes(row.tobytes(), "little") for row in payloads]


def _xor_segments(symbols: list, ptr: np.ndarray, idx: np.ndarray) -> list:
    out = []
    for c in range(len(ptr) - 1):
        v = 0
        for i in idx[ptr[c]:ptr[c + 1]].tolist():
            v ^= symbols[i]
        out.append(v)
    return out


def relay_batch(ensemble: CodeEnsemble, n: int, rng: np.random.Generator):
    """Draw ``n`` relay outputs at once.

    Returns ``(ptr1, idx1, ptr2, idx2)`` in compressed-row form.  Each output
    follows the same law as :func:`relay_step`.
    """
    u = rng.random(n)
    has1 = (u < ensemble.p1) | (u >= ensemble.p1 + ensemble.p2)
    has2 = u >= ensemble.p1
    deg1 = np.zeros(n, dtype=np.int64)
    deg2 = np.zeros(n, dtype=np.int64)
    deg1[has1] = sample_degrees(ensemble.omega, rng, int(has1.sum()))
    deg2[has2] = sample_degrees(ensemble.phi, rng, int(has2.sum()))
    ptr1, idx1 = _uniform_subsets(ensemble.n1, deg1, rng)
    ptr2, idx2 = _uniform_subsets(ensemble.n2, deg2, rng)
    return ptr1, idx1, ptr2, idx2


def generate_received(
    ensemble: CodeEnsemble,
    payloads1: np.ndarray,
    payloads2: np.ndarray,
    rng: np.random.Generator,
) -> DecoderGraph:
    """Graph of the ``round((1 + rho) gamma k)`` symbols reaching the destination."""
    if len(payloads1) != ensemble.n1 or len(payloads2) != ensemble.n2:
        raise EnsembleError(
            f"payload blocks must have lengths {ensemble.n1} and {ensemble.n2}, "
            f"got {len(payloads1)} and {len(payloads2)}"
        )
    ptr1, idx1, ptr2, idx2 = relay_batch(ensemble, ensemble.n_received, rng)
    v1 = _xor_segments(_symbol_ints(payloads1), ptr1, idx1)
    v2 = _xor_segments(_symbol_ints(payloads2), ptr2, idx2)
    values = [a ^ b for a, b in zip(v1, v2)]
    return DecoderGraph(ensemble.n1, ensemble.n2, ptr1, idx1, ptr2, idx2, values)


def peel_decode(
    graph: DecoderGraph,
    order_rng: Optional[np.random.Generator] = None,
    trace: Optional[TextIO] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Iteratively resolve checks with exactly one unknown neighbor.

    The ripple is processed FIFO, or in random order when ``order_rng`` is
    given.  With ``trace``, one CSV row ``step,check,symbol,block`` is
    written per resolved symbol.  Recovery flags and decoded values are
    stored on ``graph``; the flags are also returned.
    """
    n1, n_checks = graph.n1, len(graph)
    n_vars = n1 + graph.n2
    ptr1, ptr2 = graph.ptr1.tolist(), graph.ptr2.tolist()
    idx1, idx2 = graph.idx1.tolist(), graph.idx2.tolist()

    known = graph.recovered1.tolist() + graph.recovered2.tolist()
    decoded = list(graph.decoded1) + list(graph.decoded2)

    # Per check: unknown-neighbor count, XOR of its value with known neighbors,
    # and the sum of unknown neighbor ids (the id itself once count == 1).
    unknown = [0] * n_checks
    acc = list(graph.values)
    id_sum = [0] * n_checks
    var_checks: list[list[int]] = [[] for _ in range(n_vars)]
    for c in range(n_checks):
        neighbors = idx1[ptr1[c]:ptr1[c + 1]] + [n1 + i for i in idx2[ptr2[c]:ptr2[c + 1]]]
        for v in neighbors:
            if known[v]:
                acc[c] ^= decoded[v]
            else:
                unknown[c] += 1
                id_sum[c] += v
                var_checks[v].append(c)

    writer = None
    if trace is not None:
        writer = csv.writer(trace, lineterminator="\n")
        writer.writerow(["step", "check", "symbol", "block"])

    ripple = [c for c in range(n_checks) if unknown[c] == 1]
    fifo = deque(ripple) if order_rng is None else None
    step = 0
    while fifo if fifo is not None else ripple:
        if fifo is not None:
            c = fifo.popleft()
        else:
            j = int(order_rng.integers(len(ripple)))
            ripple[j], ripple[-1] = ripple[-1], ripple[j]
            c = ripple.pop()
        if unknown[c] != 1:
            continue
        v, x = id_sum[c], acc[c]
        known[v] = True
        decoded[v] = x
        if writer is not None:
            block, symbol = (1, v) if v < n1 else (2, v - n1)
            writer.writerow([step, c, symbol, block])
        step += 1
        for c2 in var_checks[v]:
            acc[c2] ^= x
            unknown[c2] -= 1
            id_sum[c2] -= v
            if unknown[c2] == 1:
                if fifo is not None:
                    fifo.append(c2)
                else:
                    ripple.append(c2)

    graph.recovered1 = np.array(known[:n1], dtype=bool)
    graph.recovered2 = np.array(known[n1:], dtype=bool)
    graph.decoded1 = decoded[:n1]
    graph.decoded2 = decoded[n1:]
    return graph.recovered1, graph.recovered2


def empirical_ber(graph: DecoderGraph) -> tuple[float, float]:
    """Fraction of unrecovered symbols in each source block."""
    ber1 = np.count_nonzero(~graph.recovered1) / graph.n1
    ber2 = np.count_nonzero(~graph.recovered2) / graph.n2
    return float(ber1), float(ber2)
