"""Equilibrium of the expected game, best responses and epsilon-Nash checks."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .game import (
    GameBounds,
    GameSpec,
    NotMonotoneError,
    expected_jacobian,
    expected_operator,
    game_fingerprint,
    lipschitz_constant,
    local_aggregates,
    strong_monotonicity,
)


class ConvergenceWarning(RuntimeWarning):
    pass


@dataclass(frozen=True, eq=False)
class EquilibriumResult:
    s: np.ndarray
    residual: float
    iterations: int
    step: float
    converged: bool


def solve_expected_vi(game: GameSpec, tolerance: float = 1e-10, max_iters: int = 100_000,
                      s0=None) -> EquilibriumResult:
    """Projected fixed-point iteration ``s <- P_S[s - tau F~(s)]`` with ``tau = mu / L^2``.

    For a ``mu``-strongly monotone, ``L``-Lipschitz operator this map is a
    contraction with factor ``sqrt(1 - mu^2/L^2)``, so the unique solution
    of the variational inequality is reached geometrically.  Stops once the
    fixed-point residual ``|s - P_S[s - tau F~(s)]|`` drops to ``tolerance``;
    on hitting ``max_iters`` the best iterate is returned with
    ``converged=False``.
    """
    if game.is_quadratic:
        mu = strong_monotonicity(game)
        A, c = expected_operator(game)
        F = lambda x: (A @ x.ravel() + c).reshape(game.N, game.n)
    else:
        mu = game.cost.bounds.mu
        F = lambda x: expected_jacobian(game, x)
    if mu <= 0:
        raise NotMonotoneError(mu)
    L = lipschitz_constant(game)
    tau = mu / L ** 2

    s = game.project_profile(np.zeros((game.N, game.n)) if s0 is None else s0)
    best, best_res = s, math.inf
    for it in range(max_iters + 1):
        nxt = game.project_profile(s - tau * F(s))
        res = float(np.linalg.norm(nxt - s))
        if res < best_res:
            best, best_res = s, res
        if res <= tolerance:
            return EquilibriumResult(s, res, it, tau, True)
        s = nxt
    return EquilibriumResult(best, best_res, max_iters, tau, False)


def vi_residual(game: GameSpec, s, tau: float = 1.0) -> float:
    """``|s - P_S[s - tau F~(s)]|``, zero exactly at the equilibrium."""
    s = game.profile(s)
    return float(np.linalg.norm(s - game.project_profile(s - tau * expected_jacobian(game, s))))


def _unconstrained_minimiser(game: GameSpec, i: int, z_i) -> np.ndarray:
    return -(game.a[i] * np.asarray(z_i, dtype=float) + game.b[i]) / game.q[i]


def best_response(game: GameSpec, i: int, z_i, tolerance: float = 1e-12, max_iters: int = 10_000) -> np.ndarray:
    """Minimiser of ``J_i(., z_i)`` over ``S_i``.

    Quadratic costs are ``q/2 |x - u|^2 + const`` with ``u = -(a z_i + b)/q``,
    so the answer is the projection of ``u``.  Custom costs run projected
    gradient descent with backtracking.
    """
    z_i = np.asarray(z_i, dtype=float).reshape(game.n)
    if not np.all(np.isfinite(z_i)):
        raise ValueError(f"aggregate of agent {i} is not finite")
    S = game.sets[i]
    if game.is_quadratic:
        return S.project(_unconstrained_minimiser(game, i, z_i))

    J = lambda x: game.cost.cost(i, x, z_i)
    grad = lambda x: np.asarray(game.cost.gradient(i, x, z_i), dtype=float).reshape(game.n)
    x = S.project(np.zeros(game.n))
    step = 1.0
    for _ in range(max_iters):
        g = grad(x)
        fx = J(x)
        while True:
            y = S.project(x - step * g)
            d = y - x
            if J(y) <= fx + g @ d + 0.5 / step * (d @ d) or step < 1e-16:
                break
            step *= 0.5
        if np.linalg.norm(d) <= tolerance * max(1.0, step):
            return y
        x = y
        step *= 2.0
    warnings.warn(f"best response of agent {i} did not converge", ConvergenceWarning)
    return x


def nash_gap(game: GameSpec, s, W) -> np.ndarray:
    """Per-agent gain from a unilateral best response against aggregates ``z(s|W)``.

    ``s`` is an epsilon-Nash equilibrium of the stage game on ``W`` iff
    ``max(nash_gap) <= epsilon``.  Quadratic costs use
    ``q/2 (s_i - br_i).(s_i + br_i - 2u_i)``, which avoids subtracting two
    nearly equal costs.
    """
    s = game.profile(s)
    z = local_aggregates(s, W)
    if game.is_quadratic:
        u = -(game.a[:, None] * z + game.b) / game.q[:, None]
        br = np.stack([S.project(u[i]) for i, S in enumerate(game.sets)])
        gap = 0.5 * game.q * np.einsum("ij,ij->i", s - br, s + br - 2.0 * u)
    else:
        gap = np.array([
            game.cost_value(i, s[i], z[i]) - game.cost_value(i, best_response(game, i, z[i]), z[i])
            for i in range(game.N)
        ])
    return np.maximum(gap, 0.0)


def concentration_radius(N: int, n: int, delta: float, s_max: float) -> float:
    """High-probability radius of ``|z_i(s|GP) - z_i(s|Gbar Pbar)|``."""
    return math.sqrt(n * s_max ** 2 * math.log(4 * n * N / delta) / (2 * N))


@dataclass(frozen=True)
class EpsilonBound:
    N: int
    n: int
    delta: float
    s_max: float
    L_z: float
    eps_bar: float
    eps_worst: float

    @property
    def expected(self) -> float:
        """Mean of the two-branch epsilon: ``(1-delta) eps_bar + delta eps_worst``."""
        return (1 - self.delta) * self.eps_bar + self.delta * self.eps_worst


def epsilon_bar(N: int, n: int, delta: float, bounds: GameBounds) -> EpsilonBound:
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if N < 1:
        raise ValueError("N must be >= 1")
    C = concentration_radius(N, n, delta, bounds.s_max)
    eps = 4 * bounds.L_z * (C * (2 - delta / (2 * N)) + delta * bounds.s_max / N)
    return EpsilonBound(N, n, delta, bounds.s_max, bounds.L_z, eps, 4 * bounds.L_z * bounds.s_max)


# --------------------------------------------------------------------------
# flat CSV export

def export_equilibrium(path, game: GameSpec, result: EquilibriumResult):
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(f"# game_hash={game_fingerprint(game)}\n")
        fh.write(f"# residual={result.residual!r}\n")
        fh.write(f"# converged={str(result.converged).lower()}\n")
        for v in result.s.ravel():
            fh.write(f"{float(v)!r}\n")


def import_equilibrium(path, game: Optional[GameSpec] = None) -> np.ndarray:
    """Read an exported equilibrium; verifies the game hash when ``game`` is given."""
    header = {}
    values = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            header[key] = val
        else:
            values.append(float(line))
    s = np.array(values)
    if game is not None:
        if header.get("game_hash") != game_fingerprint(game):
            raise ValueError(f"{path}: equilibrium was computed for a different game")
        s = game.profile(s)
    return s
