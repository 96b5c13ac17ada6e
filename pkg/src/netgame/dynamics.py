"""Projected gradient play over sampled networks, its SGD form, and step sizes."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Union

import numpy as np

from .equilibrium import nash_gap, solve_expected_vi
from .game import (
    Ball,
    Box,
    EvaluationError,
    GameSpec,
    _gradients,
    derive_bounds,
    expected_jacobian,
    local_aggregates,
)
from .network import NetworkRealization, RealizationStream, effective, expected_effective, realize


# --------------------------------------------------------------------------
# step-size schedules

@dataclass(frozen=True)
class ThetaRule:
    """``tau^0 = 1``, ``tau^k = k^-(1-theta)`` with ``theta`` in ``(0, 1/2)``."""

    theta: float

    def __post_init__(self):
        if not 0.0 < self.theta < 0.5:
            raise ValueError(f"step-size condition: theta must lie in (0, 1/2), got {self.theta}")

    @property
    def B(self) -> float:
        return 1.0

    @property
    def exponent(self) -> float:
        return 1.0 - self.theta

    def delta(self, k):
        return np.asarray(k, dtype=float) ** -self.exponent

    def __call__(self, k: int) -> float:
        return 1.0 if k == 0 else float(k) ** -self.exponent


@dataclass(frozen=True)
class AlphaRule:
    """``tau^k = B / k^alpha`` with ``B = 2^alpha / C2`` and ``tau^0 = B``."""

    alpha: float
    C2: float

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"step-size condition: alpha must lie in (0, 1], got {self.alpha}")
        if not self.C2 > 0:
            raise ValueError(f"C2 must be positive, got {self.C2}")

    @classmethod
    def for_game(cls, game: GameSpec, alpha: float) -> "AlphaRule":
        """Uses ``C2 = 2 mu min(pbar)`` from the game's derived bounds."""
        bounds = derive_bounds(game)
        bounds.require_monotone()
        return cls(alpha, 2.0 * bounds.mu * float(np.min(game.network.pbar)))

    @property
    def B(self) -> float:
        return 2.0 ** self.alpha / self.C2

    @property
    def exponent(self) -> float:
        return self.alpha

    @property
    def robbins_monro(self) -> bool:
        return self.alpha > 0.5

    def delta(self, k):
        return np.asarray(k, dtype=float) ** -self.alpha

    def __call__(self, k: int) -> float:
        return self.B if k == 0 else self.B / float(k) ** self.alpha


@dataclass(frozen=True)
class CustomSchedule:
    """Arbitrary positive step sizes ``fn(k)``.

    ``B`` and ``delta`` are optional; supply them when ``fn(k) = B delta(k)``
    so the mean-square constants can be evaluated.
    """

    fn: Callable[[int], float]
    B: Optional[float] = None
    delta: Optional[Callable] = None

    def __call__(self, k: int) -> float:
        return float(self.fn(k))


StepSchedule = Union[ThetaRule, AlphaRule, CustomSchedule]


def step_size(schedule: StepSchedule, k: int) -> float:
    if k < 0:
        raise ValueError("iteration index must be >= 0")
    tau = schedule(k)
    if not (tau > 0 and math.isfinite(tau)):
        raise ValueError(f"step size at k={k} must be positive and finite, got {tau}")
    return tau


def step_sizes(schedule: StepSchedule, k0: int, count: int) -> np.ndarray:
    ks = np.arange(k0, k0 + count)
    if isinstance(schedule, (ThetaRule, AlphaRule)):
        with np.errstate(divide="ignore"):
            out = schedule.B * np.where(ks == 0, 1.0, schedule.delta(np.maximum(ks, 1)))
        return out
    return np.array([step_size(schedule, int(k)) for k in ks])


# --------------------------------------------------------------------------
# single steps

def play_step(game: GameSpec, s, realization: NetworkRealization, tau: float) -> np.ndarray:
    """One round of projected gradient play; absent agents keep their strategy."""
    s = game.profile(s)
    W = effective(realization)
    g = _gradients(game, s, local_aggregates(s, W), realization.k)
    out = s.copy()
    for i, S in enumerate(game.sets):
        if realization.P[i]:
            out[i] = S.project(s[i] - tau * g[i])
    return out


def noise(game: GameSpec, s, realization: NetworkRealization) -> np.ndarray:
    """``w = Delta^-1 (P kron I) F(s, GP) - F~(s)`` as an ``(N, n)`` array."""
    s = game.profile(s)
    g = _gradients(game, s, local_aggregates(s, effective(realization)), realization.k)
    pbar = game.network.pbar
    return (realization.P / pbar)[:, None] * g - expected_jacobian(game, s)


def sgd_step(game: GameSpec, s, realization: NetworkRealization, tau: float):
    """The same update written as ``P_S[s - tau Delta (F~(s) + w)]``; returns ``(s_next, w)``."""
    s = game.profile(s)
    w = noise(game, s, realization)
    Ft = expected_jacobian(game, s)
    y = s - tau * game.network.pbar[:, None] * (Ft + w)
    return game.project_profile(y), w


# --------------------------------------------------------------------------
# full runs

@dataclass(eq=False)
class SimulationTrace:
    """Per-iteration record of one replication.

    Row ``k`` describes ``s^k`` against the realization drawn at iteration
    ``k``; ``T + 1`` rows in total.
    """

    seed: int
    replication: int
    s0: np.ndarray
    sbar: np.ndarray
    k: np.ndarray
    dist: np.ndarray
    wdist: np.ndarray
    tau: np.ndarray
    n_present: np.ndarray
    max_regret: np.ndarray
    mean_regret: np.ndarray
    noise_sq: Optional[np.ndarray] = None
    regret: Optional[np.ndarray] = None
    profile_k: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    profiles: np.ndarray = field(default_factory=lambda: np.zeros((0, 0, 0)))

    @property
    def T(self) -> int:
        return int(self.k[-1])

    @property
    def final(self) -> np.ndarray:
        return self.profiles[-1]

    def __len__(self):
        return self.k.shape[0]


Hook = Callable[[int, np.ndarray, dict], None]


def _kernel_ready(game: GameSpec) -> bool:
    return game.is_quadratic and all(isinstance(S, (Box, Ball)) for S in game.sets)


def run(game: GameSpec, schedule: StepSchedule, T: int, seed: int = 0, replication: int = 0,
        s0=None, sbar=None, hooks: Iterable[Hook] = (), *, record_noise: bool = False,
        store_regret: bool = False, profile_every: Optional[int] = None,
        engine: str = "auto", chunk: int = 256) -> SimulationTrace:
    """Simulate ``T`` rounds of projected gradient play from ``s0`` (default ``P_S[0]``).

    ``engine`` is ``"python"`` (reference path, supports custom costs and
    hooks), ``"numba"`` (compiled, quadratic costs only) or ``"auto"``.
    """
    if T < 0:
        raise ValueError("horizon must be >= 0")
    hooks = tuple(hooks)
    s = game.project_profile(np.zeros((game.N, game.n)) if s0 is None else s0).copy()
    if sbar is None:
        sbar = solve_expected_vi(game).s
    sbar = game.profile(sbar)
    if profile_every is None:
        profile_every = max(1, math.ceil(T / 1000))
    if engine == "auto":
        engine = "numba" if _kernel_ready(game) and not hooks else "python"
    if engine == "numba":
        if hooks:
            raise ValueError("hooks need the python engine")
        if not _kernel_ready(game):
            raise ValueError("the compiled engine supports quadratic costs on box/ball sets only")
        return _run_numba(game, schedule, T, seed, replication, s, sbar, record_noise,
                          store_regret, profile_every, chunk)
    if engine != "python":
        raise ValueError(f"unknown engine {engine!r}")
    return _run_python(game, schedule, T, seed, replication, s, sbar, hooks, record_noise,
                       store_regret, profile_every, chunk)


def _empty_trace(game, T, seed, replication, s0, sbar, record_noise, store_regret, profile_every):
    rows = T + 1
    pk = np.unique(np.append(np.arange(0, rows, profile_every), T))
    return SimulationTrace(
        seed=seed, replication=replication, s0=s0.copy(), sbar=sbar.copy(),
        k=np.arange(rows, dtype=np.int64), dist=np.empty(rows), wdist=np.empty(rows),
        tau=np.empty(rows),
        n_present=np.empty(rows, dtype=np.int64), max_regret=np.empty(rows),
        mean_regret=np.empty(rows), noise_sq=np.empty(rows) if record_noise else None,
        regret=np.empty((rows, game.N)) if store_regret else None,
        profile_k=pk, profiles=np.empty((pk.shape[0], game.N, game.n)),
    )


def _run_python(game, schedule, T, seed, replication, s, sbar, hooks, record_noise, store_regret,
                profile_every, chunk):
    trace = _empty_trace(game, T, seed, replication, s, sbar, record_noise, store_regret, profile_every)
    stream = RealizationStream(game.network, seed, replication)
    pbar = game.network.pbar
    slot = 0
    for k0 in range(0, T + 1, chunk):
        m = min(chunk, T + 1 - k0)
        G, P = realize(game.network, stream.uniforms(k0, m))
        taus = step_sizes(schedule, k0, m)
        for t in range(m):
            k = k0 + t
            real = NetworkRealization(G[t], P[t], k)
            W = effective(real)
            e = s - sbar
            r = nash_gap(game, s, W)
            trace.dist[k] = np.sqrt(np.sum(e * e))
            trace.wdist[k] = np.sqrt(np.sum(np.sum(e * e, axis=1) / pbar))
            trace.tau[k] = taus[t]
            trace.n_present[k] = int(P[t].sum())
            trace.max_regret[k] = r.max()
            trace.mean_regret[k] = r.mean()
            if store_regret:
                trace.regret[k] = r
            if record_noise:
                w = noise(game, s, real)
                trace.noise_sq[k] = float(np.sum(w * w))
            if slot < trace.profile_k.shape[0] and trace.profile_k[slot] == k:
                trace.profiles[slot] = s
                slot += 1
            if hooks:
                view = s.copy()
                view.setflags(write=False)
                metrics = {"dist": trace.dist[k], "wdist": trace.wdist[k], "tau": taus[t],
                           "n_present": trace.n_present[k], "max_regret": trace.max_regret[k]}
                for hook in hooks:
                    hook(k, view, metrics)
            if k < T:
                s = play_step(game, s, real, taus[t])
    return trace


def _set_arrays(game):
    N, n = game.N, game.n
    kind = np.zeros(N, dtype=np.int64)
    lo = np.zeros((N, n))
    hi = np.zeros((N, n))
    center = np.zeros((N, n))
    radius = np.zeros(N)
    for i, S in enumerate(game.sets):
        if isinstance(S, Box):
            lo[i], hi[i] = S.lower, S.upper
        else:
            kind[i] = 1
            center[i], radius[i] = S.center, S.radius
    return kind, lo, hi, center, radius


def _run_numba(game, schedule, T, seed, replication, s, sbar, record_noise, store_regret,
               profile_every, chunk):
    from ._kernels import simulate_chunk

    trace = _empty_trace(game, T, seed, replication, s, sbar, record_noise, store_regret, profile_every)
    stream = RealizationStream(game.network, seed, replication)
    net = game.network
    kind, lo, hi, center, radius = _set_arrays(game)
    wbar = expected_effective(net)
    s = np.ascontiguousarray(s, dtype=float)
    dummy_noise = np.empty(0)
    dummy_regret = np.empty((0, game.N))
    for k0 in range(0, T + 1, chunk):
        m = min(chunk, T + 1 - k0)
        words = stream.words(k0, m)
        taus = step_sizes(schedule, k0, m)
        trace.tau[k0:k0 + m] = taus
        pk_lo, pk_hi = np.searchsorted(trace.profile_k, [k0, k0 + m])
        # split the chunk at stored-profile indices so the state can be copied out
        cuts = [k0] + [int(x) for x in trace.profile_k[pk_lo:pk_hi] if x > k0] + [k0 + m]
        for a_, b_ in zip(cuts[:-1], cuts[1:]):
            if a_ == b_:
                continue
            idx = np.searchsorted(trace.profile_k, a_)
            if idx < trace.profile_k.shape[0] and trace.profile_k[idx] == a_:
                trace.profiles[idx] = s
            sl = slice(a_, b_)
            simulate_chunk(
                s, sbar, words[a_ - k0:b_ - k0], a_, T, taus[a_ - k0:b_ - k0],
                game.q, game.a, game.b, kind, lo, hi, center, radius,
                net.kind, net.p1, net.p2, net.pbar, wbar, record_noise, store_regret,
                trace.dist[sl], trace.wdist[sl], trace.n_present[sl], trace.max_regret[sl],
                trace.mean_regret[sl],
                trace.noise_sq[sl] if record_noise else dummy_noise,
                trace.regret[sl] if store_regret else dummy_regret,
            )
    if not np.all(np.isfinite(s)):
        raise EvaluationError(int(np.argwhere(~np.isfinite(s))[0, 0]), T)
    return trace


def run_replications(game: GameSpec, schedule: StepSchedule, T: int, seed: int, R: int,
                     consume: Callable[[SimulationTrace], None], sbar=None, workers: int = 1,
                     **kwargs):
    """Run ``R`` independent replications, handing each finished trace to ``consume``.

    Traces are delivered in replication order regardless of ``workers``.
    """
    if sbar is None:
        sbar = solve_expected_vi(game).s
    if workers <= 1:
        for r in range(R):
            consume(run(game, schedule, T, seed=seed, replication=r, sbar=sbar, **kwargs))
        return
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(run, game, schedule, T, seed, r, None, sbar, (), **kwargs) for r in range(R)]
        for fut in futures:
            consume(fut.result())
