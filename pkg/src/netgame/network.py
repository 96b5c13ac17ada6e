"""Random networks with random agent participation.

At every iteration a fresh adjacency matrix ``G`` is drawn with independent
off-diagonal links, and every agent independently participates with
probability ``pbar[i]``.  Absent agents contribute nothing to anyone's local
aggregate, so the network that matters is ``G @ diag(P)``.

Random numbers come from one PCG64 stream per ``(seed, replication)``.
Iteration ``k`` owns the fixed block of raw words starting at ``k * W``, so a
realization is a pure function of ``(seed, replication, k)`` and can be
reached directly with ``PCG64.advance``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

BERNOULLI, UNIFORM, CONSTANT = 0, 1, 2

_U32_SCALE = 2.0 ** -32


@dataclass(frozen=True)
class Bernoulli:
    p: float

    code = BERNOULLI

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"bernoulli p must lie in [0, 1], got {self.p}")

    @property
    def mean(self) -> float:
        return float(self.p)

    def params(self) -> tuple[float, float]:
        return float(self.p), 0.0


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    code = UNIFORM

    def __post_init__(self):
        if not 0.0 <= self.lo <= self.hi <= 1.0:
            raise ValueError(f"uniform support must satisfy 0 <= lo <= hi <= 1, got [{self.lo}, {self.hi}]")

    @property
    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def params(self) -> tuple[float, float]:
        return float(self.lo), float(self.hi)


@dataclass(frozen=True)
class Constant:
    value: float

    code = CONSTANT

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"constant edge weight must lie in [0, 1], got {self.value}")

    @property
    def mean(self) -> float:
        return float(self.value)

    def params(self) -> tuple[float, float]:
        return float(self.value), 0.0


EdgeDistribution = Union[Bernoulli, Uniform, Constant]


@dataclass(frozen=True, eq=False)
class NetworkModel:
    """Distribution of the effective network ``G @ diag(P)``.

    ``edges`` is either one distribution shared by every ordered pair
    ``i != j`` or an ``N x N`` nested sequence of distributions (diagonal
    entries are ignored; ``None`` means no link).  ``participation`` is a
    scalar or a length-``N`` vector of probabilities in ``(0, 1]``.
    """

    N: int
    edges: EdgeDistribution | Sequence[Sequence[EdgeDistribution | None]]
    participation: float | Sequence[float] = 1.0
    kind: np.ndarray = field(init=False, repr=False)
    p1: np.ndarray = field(init=False, repr=False)
    p2: np.ndarray = field(init=False, repr=False)
    pbar: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        N = int(self.N)
        if N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")
        kind = np.full((N, N), CONSTANT, dtype=np.int64)
        p1 = np.zeros((N, N))
        p2 = np.zeros((N, N))
        if isinstance(self.edges, (Bernoulli, Uniform, Constant)):
            a, b = self.edges.params()
            kind[:] = self.edges.code
            p1[:] = a
            p2[:] = b
        else:
            rows = list(self.edges)
            if len(rows) != N or any(len(r) != N for r in rows):
                raise ValueError(f"edge distribution matrix must be {N}x{N}")
            for i, row in enumerate(rows):
                for j, dist in enumerate(row):
                    if dist is None:
                        continue
                    kind[i, j] = dist.code
                    p1[i, j], p2[i, j] = dist.params()
        np.fill_diagonal(kind, CONSTANT)
        np.fill_diagonal(p1, 0.0)
        np.fill_diagonal(p2, 0.0)

        pbar = np.broadcast_to(np.asarray(self.participation, dtype=float), (N,)).copy()
        bad = [i for i in range(N) if not (0.0 < pbar[i] <= 1.0)]
        if bad:
            raise ValueError(
                "participation probability must be > 0 and <= 1 for every agent; "
                f"violated for agents {bad} (values {pbar[bad].tolist()})"
            )
        for name, value in (("N", N), ("kind", kind), ("p1", p1), ("p2", p2), ("pbar", pbar)):
            if isinstance(value, np.ndarray):
                value.setflags(write=False)
            object.__setattr__(self, name, value)

    @classmethod
    def from_mean_matrix(cls, gbar, participation=1.0, kind: str = "bernoulli") -> "NetworkModel":
        """Independent links whose means are the entries of ``gbar``."""
        gbar = np.asarray(gbar, dtype=float)
        N = gbar.shape[0]
        make = {"bernoulli": Bernoulli, "constant": Constant}[kind]
        edges = [[None if i == j else make(float(gbar[i, j])) for j in range(N)] for i in range(N)]
        return cls(N, edges, participation)

    @property
    def mean_matrix(self) -> np.ndarray:
        """``Gbar = E[G]`` with zero diagonal."""
        out = np.where(self.kind == UNIFORM, 0.5 * (self.p1 + self.p2), self.p1)
        np.fill_diagonal(out, 0.0)
        return out

    @property
    def is_deterministic(self) -> bool:
        const = (self.kind == CONSTANT) | ((self.kind == UNIFORM) & (self.p1 == self.p2))
        bern = (self.kind == BERNOULLI) & ((self.p1 == 0.0) | (self.p1 == 1.0))
        return bool(np.all(const | bern) and np.all(self.pbar == 1.0))

    @property
    def uniforms_per_iteration(self) -> int:
        return self.N * self.N + self.N

    @property
    def words_per_iteration(self) -> int:
        return (self.uniforms_per_iteration + 1) // 2


@dataclass(frozen=True, eq=False)
class NetworkRealization:
    G: np.ndarray
    P: np.ndarray
    k: int = 0

    @property
    def n_present(self) -> int:
        return int(self.P.sum())


def effective(realization: NetworkRealization) -> np.ndarray:
    """``G @ diag(P)``: column ``j`` zeroed when agent ``j`` is absent."""
    return realization.G * realization.P[None, :]


def expected_effective(model: NetworkModel) -> np.ndarray:
    """``Gbar @ diag(Pbar)``."""
    return model.mean_matrix * model.pbar[None, :]


def words_to_uniforms(words: np.ndarray, count: int) -> np.ndarray:
    """Split raw 64-bit words into 32-bit uniforms on [0, 1), low half first.

    ``words`` has shape ``(..., W)``; the result has shape ``(..., count)``.
    """
    words = np.asarray(words, dtype=np.uint64)
    lo = (words & np.uint64(0xFFFFFFFF)).astype(np.float64)
    hi = (words >> np.uint64(32)).astype(np.float64)
    u = np.stack([lo, hi], axis=-1).reshape(words.shape[:-1] + (2 * words.shape[-1],))
    return u[..., :count] * _U32_SCALE


def realize(model: NetworkModel, uniforms: np.ndarray):
    """Map uniforms of shape ``(..., N*N + N)`` to ``(G, P)`` arrays."""
    N = model.N
    ue = uniforms[..., : N * N].reshape(uniforms.shape[:-1] + (N, N))
    G = np.where(
        model.kind == BERNOULLI,
        (ue < model.p1).astype(float),
        np.where(model.kind == UNIFORM, model.p1 + (model.p2 - model.p1) * ue, model.p1),
    )
    P = (uniforms[..., N * N : N * N + N] < model.pbar).astype(float)
    return G, P


class RealizationStream:
    """I.i.d. network realizations for one ``(seed, replication)`` pair.

    ``next()`` walks the iterations in order; ``at(k)`` and ``words(k0, n)``
    give random access by iteration index.
    """

    def __init__(self, model: NetworkModel, seed: int, replication: int = 0):
        self.model = model
        self.seed = int(seed)
        self.replication = int(replication)
        self._bitgen = None
        self._pos = 0  # iteration index the bit generator currently points at
        self.k = 0

    def _seek(self, k: int):
        if self._bitgen is None or k != self._pos:
            self._bitgen = np.random.PCG64(np.random.SeedSequence([self.seed, self.replication]))
            if k:
                self._bitgen.advance(k * self.model.words_per_iteration)
            self._pos = k

    def words(self, k0: int, count: int) -> np.ndarray:
        """Raw words for iterations ``k0 .. k0+count-1``, shape ``(count, W)``."""
        W = self.model.words_per_iteration
        self._seek(k0)
        raw = self._bitgen.random_raw(count * W)
        self._pos = k0 + count
        return np.asarray(raw, dtype=np.uint64).reshape(count, W)

    def uniforms(self, k0: int, count: int) -> np.ndarray:
        return words_to_uniforms(self.words(k0, count), self.model.uniforms_per_iteration)

    def at(self, k: int) -> NetworkRealization:
        G, P = realize(self.model, self.uniforms(k, 1)[0])
        return NetworkRealization(G, P, k)

    def next(self) -> NetworkRealization:
        real = self.at(self.k)
        self.k += 1
        return real

    def batch(self, count: int):
        """The next ``count`` realizations as arrays ``G (count,N,N)``, ``P (count,N)``."""
        G, P = realize(self.model, self.uniforms(self.k, count))
        self.k += count
        return G, P


def sample(model: NetworkModel, stream: RealizationStream) -> NetworkRealization:
    """Draw the next realization ``(G^k, P^k)`` from ``stream``."""
    if stream.model is not model:
        raise ValueError("stream was built for a different network model")
    return stream.next()


def write_realization_csv(path, realization: NetworkRealization, effective_only: bool = True):
    """Dense CSV dump of a realization, one matrix row per line."""
    M = effective(realization) if effective_only else realization.G
    np.savetxt(path, M, delimiter=",", fmt="%.17g")
