"""One-shot network games: strategy sets, costs, aggregates and Jacobians.

Profiles are stored as ``(N, n)`` arrays, row ``i`` being agent ``i``'s
strategy; ``profile.ravel()`` is the stacked vector in ``R^{nN}``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .network import NetworkModel, NetworkRealization, RealizationStream, effective, expected_effective


class EvaluationError(ArithmeticError):
    """A cost gradient produced a non-finite value."""

    def __init__(self, agent: int, iteration: Optional[int] = None):
        self.agent = agent
        self.iteration = iteration
        where = f"agent {agent}" + ("" if iteration is None else f" at iteration {iteration}")
        super().__init__(f"non-finite gradient for {where}")


class NotMonotoneError(ValueError):
    def __init__(self, mu: float):
        self.mu = mu
        super().__init__(f"expected game not strongly monotone: smallest eigenvalue {mu:.6g} <= 0")


# --------------------------------------------------------------------------
# strategy sets

@dataclass(frozen=True, eq=False)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be vectors of equal length")
        if not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)):
            raise ValueError("box bounds must be finite (strategy sets are compact)")
        if np.any(lo > hi):
            raise ValueError(f"box requires lower <= upper componentwise, got {lo} > {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def radius_bound(self) -> float:
        # farthest corner from the origin
        return float(np.sqrt(np.sum(np.maximum(self.lower ** 2, self.upper ** 2))))

    def project(self, y):
        return np.clip(y, self.lower, self.upper)

    def contains(self, y, tol: float = 0.0) -> bool:
        y = np.asarray(y)
        return bool(np.all(y >= self.lower - tol) and np.all(y <= self.upper + tol))


@dataclass(frozen=True, eq=False)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.center, dtype=float))
        if c.ndim != 1 or not np.all(np.isfinite(c)):
            raise ValueError("ball center must be a finite vector")
        if not (np.isfinite(self.radius) and self.radius > 0):
            raise ValueError(f"ball radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    @property
    def radius_bound(self) -> float:
        return float(np.linalg.norm(self.center) + self.radius)

    def project(self, y):
        d = np.asarray(y, dtype=float) - self.center
        norm = np.linalg.norm(d)
        if norm <= self.radius:
            return np.array(y, dtype=float)
        return self.center + d * (self.radius / norm)

    def contains(self, y, tol: float = 0.0) -> bool:
        return bool(np.linalg.norm(np.asarray(y) - self.center) <= self.radius + tol)


StrategySet = Union[Box, Ball]


def project(strategy_set: StrategySet, y) -> np.ndarray:
    """Euclidean projection of ``y`` onto ``strategy_set``."""
    y = np.asarray(y, dtype=float)
    if y.shape != (strategy_set.dim,):
        raise ValueError(f"expected a vector of length {strategy_set.dim}, got shape {y.shape}")
    return strategy_set.project(y)


# --------------------------------------------------------------------------
# costs

@dataclass(frozen=True, eq=False)
class GameBounds:
    s_max: float
    J1: float
    J2: float
    L_s: float
    L_z: float
    mu: float

    def __post_init__(self):
        for name in ("s_max", "J1", "J2", "L_s", "L_z", "mu"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ValueError(f"bound {name} must be finite, got {v}")
        for name in ("s_max", "J1", "J2"):
            if getattr(self, name) <= 0:
                raise ValueError(f"bound {name} must be positive")
        if self.L_s < 0 or self.L_z < 0:
            raise ValueError("Lipschitz constants must be nonnegative")

    def require_monotone(self):
        if self.mu <= 0:
            raise NotMonotoneError(self.mu)


@dataclass(frozen=True, eq=False)
class QuadraticCost:
    """``J_i(s_i, z_i) = q/2 |s_i|^2 + (a z_i + b)^T s_i``.

    ``q`` and ``a`` are scalars or per-agent vectors; ``b`` is a scalar,
    a length-``n`` vector, or an ``(N, n)`` array.
    """

    q: float | np.ndarray = 1.0
    a: float | np.ndarray = 0.0
    b: float | np.ndarray = 0.0

    def arrays(self, N: int, n: int):
        q = np.broadcast_to(np.asarray(self.q, dtype=float), (N,)).copy()
        a = np.broadcast_to(np.asarray(self.a, dtype=float), (N,)).copy()
        b = np.broadcast_to(np.asarray(self.b, dtype=float), (N, n)).copy()
        if np.any(q <= 0):
            raise ValueError("quadratic cost needs q > 0 for every agent")
        return q, a, b


@dataclass(frozen=True, eq=False)
class CustomCost:
    """User-supplied cost with explicitly declared bounds.

    ``cost(i, s_i, z_i)`` and ``gradient(i, s_i, z_i)`` evaluate agent ``i``.
    ``expected_gradient(s)``, if given, returns the expected-game Jacobian as
    an ``(N, n)`` array; without it only Monte Carlo estimates are possible.
    """

    cost: Callable[[int, np.ndarray, np.ndarray], float]
    gradient: Callable[[int, np.ndarray, np.ndarray], np.ndarray]
    bounds: GameBounds
    expected_gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    lipschitz: Optional[float] = None


CostModel = Union[QuadraticCost, CustomCost]


@dataclass(frozen=True, eq=False)
class GameSpec:
    N: int
    n: int
    sets: StrategySet | Sequence[StrategySet]
    cost: CostModel
    network: NetworkModel
    _q: np.ndarray = field(init=False, repr=False, default=None)
    _a: np.ndarray = field(init=False, repr=False, default=None)
    _b: np.ndarray = field(init=False, repr=False, default=None)

    def __post_init__(self):
        if self.N < 1 or self.n < 1:
            raise ValueError("N and n must be positive integers")
        sets = (self.sets,) * self.N if isinstance(self.sets, (Box, Ball)) else tuple(self.sets)
        if len(sets) != self.N:
            raise ValueError(f"need {self.N} strategy sets, got {len(sets)}")
        for i, S in enumerate(sets):
            if S.dim != self.n:
                raise ValueError(f"strategy set of agent {i} has dimension {S.dim}, expected {self.n}")
        if self.network.N != self.N:
            raise ValueError(f"network has {self.network.N} agents, game has {self.N}")
        object.__setattr__(self, "sets", sets)
        if isinstance(self.cost, QuadraticCost):
            q, a, b = self.cost.arrays(self.N, self.n)
            object.__setattr__(self, "_q", q)
            object.__setattr__(self, "_a", a)
            object.__setattr__(self, "_b", b)

    @property
    def is_quadratic(self) -> bool:
        return isinstance(self.cost, QuadraticCost)

    @property
    def q(self):
        return self._q

    @property
    def a(self):
        return self._a

    @property
    def b(self):
        return self._b

    def profile(self, s) -> np.ndarray:
        """Reshape a stacked vector or ``(N, n)`` array into an ``(N, n)`` profile."""
        s = np.asarray(s, dtype=float)
        if s.shape == (self.N, self.n):
            return s
        if s.shape == (self.N * self.n,):
            return s.reshape(self.N, self.n)
        raise ValueError(f"profile must have shape ({self.N}, {self.n}) or ({self.N * self.n},), got {s.shape}")

    def project_profile(self, y) -> np.ndarray:
        y = self.profile(y)
        return np.stack([S.project(y[i]) for i, S in enumerate(self.sets)])

    def contains(self, s, tol: float = 0.0) -> bool:
        s = self.profile(s)
        return all(S.contains(s[i], tol) for i, S in enumerate(self.sets))

    def cost_value(self, i: int, s_i, z_i) -> float:
        if self.is_quadratic:
            s_i = np.asarray(s_i, dtype=float)
            return float(0.5 * self._q[i] * s_i @ s_i + (self._a[i] * np.asarray(z_i) + self._b[i]) @ s_i)
        return float(self.cost.cost(i, np.asarray(s_i, dtype=float), np.asarray(z_i, dtype=float)))

    def costs(self, s, W) -> np.ndarray:
        s = self.profile(s)
        z = local_aggregates(s, W)
        return np.array([self.cost_value(i, s[i], z[i]) for i in range(self.N)])


def local_aggregates(s, W) -> np.ndarray:
    """``z_i = (1/N) sum_j W_ij s_j`` for every agent, as an ``(N, n)`` array."""
    s = np.asarray(s, dtype=float)
    W = np.asarray(W, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    N = s.shape[0]
    if W.shape != (N, N):
        raise ValueError(f"network matrix has shape {W.shape}, profile has {N} agents")
    return W @ s / N


def _quadratic_gradient(game: GameSpec, s: np.ndarray, z: np.ndarray) -> np.ndarray:
    return game.q[:, None] * s + game.a[:, None] * z + game.b


def _gradients(game: GameSpec, s: np.ndarray, z: np.ndarray, iteration=None) -> np.ndarray:
    if game.is_quadratic:
        g = _quadratic_gradient(game, s, z)
    else:
        g = np.stack([np.asarray(game.cost.gradient(i, s[i], z[i]), dtype=float).reshape(game.n)
                      for i in range(game.N)])
    if not np.all(np.isfinite(g)):
        bad = int(np.argwhere(~np.isfinite(g))[0, 0])
        raise EvaluationError(bad, iteration)
    return g


def game_jacobian(game: GameSpec, s, W, iteration: Optional[int] = None) -> np.ndarray:
    """Stacked own-strategy gradients ``F(s, W)`` as an ``(N, n)`` array."""
    s = game.profile(s)
    W = np.asarray(W, dtype=float)
    if W.shape != (game.N, game.N):
        raise ValueError(f"network matrix has shape {W.shape}, game has {game.N} agents")
    if np.any(np.diag(W) != 0):
        raise ValueError("network matrix must have a zero diagonal")
    return _gradients(game, s, local_aggregates(s, W), iteration)


def expected_operator(game: GameSpec):
    """``(A, c)`` with ``F~(s) = A s + c`` on stacked vectors (quadratic games only)."""
    if not game.is_quadratic:
        raise ValueError("the expected operator is affine only for the quadratic cost model")
    N, n = game.N, game.n
    Wbar = expected_effective(game.network)
    A = np.kron(np.diag(game.q) + (game.a[:, None] / N) * Wbar, np.eye(n))
    return A, game.b.ravel().copy()


def expected_jacobian(game: GameSpec, s) -> np.ndarray:
    """Exact expected-game Jacobian ``F~(s)``.

    The quadratic gradient is affine in ``z_i``, so the expectation passes
    inside and ``F~(s) = F(s, Gbar Pbar)``.  Custom costs must supply
    ``expected_gradient``.
    """
    s = game.profile(s)
    if game.is_quadratic:
        return game_jacobian(game, s, expected_effective(game.network))
    if game.cost.expected_gradient is None:
        raise ValueError(
            "analytic expected Jacobian needs a cost that is affine in the aggregate; "
            "this custom cost provides no expected_gradient, use estimate_expected_jacobian"
        )
    return np.asarray(game.cost.expected_gradient(s), dtype=float).reshape(game.N, game.n)


def estimate_expected_jacobian(game: GameSpec, s, samples: int, seed: int = 0, chunk: int = 512):
    """Monte Carlo estimate of ``F~(s)``: returns ``(mean, standard_error)``."""
    if samples < 2:
        raise ValueError("need at least two samples for a standard error")
    s = game.profile(s)
    stream = RealizationStream(game.network, seed)
    total = np.zeros((game.N, game.n))
    total_sq = np.zeros((game.N, game.n))
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        G, P = stream.batch(m)
        for t in range(m):
            g = _gradients(game, s, local_aggregates(s, G[t] * P[t][None, :]))
            total += g
            total_sq += g * g
        done += m
    mean = total / samples
    var = np.maximum(total_sq / samples - mean ** 2, 0.0) * samples / (samples - 1)
    return mean, np.sqrt(var / samples)


def derive_bounds(game: GameSpec, eig_tol: float = 1e-10) -> GameBounds:
    """Closed-form bounds for the quadratic family; custom costs return their declared bounds."""
    if not game.is_quadratic:
        return game.cost.bounds
    s_max = max(S.radius_bound for S in game.sets)
    q = float(np.max(game.q))
    a = float(np.max(np.abs(game.a)))
    bnorm = float(np.max(np.linalg.norm(game.b, axis=1)))
    J2 = q * s_max + a * s_max + bnorm
    J1 = 0.5 * q * s_max ** 2 + (a * s_max + bnorm) * s_max
    mu = strong_monotonicity(game, eig_tol)
    return GameBounds(s_max=s_max, J1=J1, J2=J2, L_s=J2, L_z=a * s_max, mu=mu)


def strong_monotonicity(game: GameSpec, eig_tol: float = 1e-10) -> float:
    """Smallest eigenvalue of the symmetric part of the expected operator."""
    A, _ = expected_operator(game)
    H = 0.5 * (A + A.T)
    w, V = np.linalg.eigh(H)
    resid = np.linalg.norm(H @ V[:, 0] - w[0] * V[:, 0])
    if resid > eig_tol * max(1.0, np.abs(w).max()):
        raise ArithmeticError(f"eigenvalue residual {resid:.3g} exceeds {eig_tol:g}")
    return float(w[0])


def lipschitz_constant(game: GameSpec) -> float:
    """Largest singular value of the expected operator."""
    if not game.is_quadratic:
        if game.cost.lipschitz is None:
            raise ValueError("custom cost must declare the Lipschitz constant of its expected Jacobian")
        return float(game.cost.lipschitz)
    A, _ = expected_operator(game)
    return float(np.linalg.norm(A, 2))


__all__ = [
    "Ball", "Box", "CostModel", "CustomCost", "EvaluationError", "GameBounds", "GameSpec",
    "NotMonotoneError", "QuadraticCost", "StrategySet", "derive_bounds", "effective",
    "estimate_expected_jacobian", "expected_jacobian", "expected_operator", "game_jacobian",
    "lipschitz_constant", "local_aggregates", "project", "strong_monotonicity",
    "NetworkRealization", "game_fingerprint",
]


def game_fingerprint(game: GameSpec) -> str:
    """Stable SHA-256 over the numeric definition of a game."""
    import hashlib

    h = hashlib.sha256()

    def feed(tag, arr):
        arr = np.ascontiguousarray(np.asarray(arr, dtype=np.float64))
        h.update(f"{tag}:{arr.shape}".encode())
        h.update(arr.tobytes())

    feed("Nn", [game.N, game.n])
    for i, S in enumerate(game.sets):
        if isinstance(S, Box):
            feed(f"box{i}", np.concatenate([S.lower, S.upper]))
        else:
            feed(f"ball{i}", np.concatenate([S.center, [S.radius]]))
    if game.is_quadratic:
        feed("q", game.q)
        feed("a", game.a)
        feed("b", game.b)
    else:
        bd = game.cost.bounds
        feed("custom", [bd.s_max, bd.J1, bd.J2, bd.L_s, bd.L_z, bd.mu])
    net = game.network
    feed("kind", net.kind)
    feed("p1", net.p1)
    feed("p2", net.p2)
    feed("pbar", net.pbar)
    return h.hexdigest()
