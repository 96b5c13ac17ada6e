"""Regret, theoretical constants, rate fits and numeric checks of the bounds."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dynamics import AlphaRule, CustomSchedule, SimulationTrace, StepSchedule, ThetaRule
from .equilibrium import concentration_radius, epsilon_bar, nash_gap
from .game import (
    Box,
    GameBounds,
    GameSpec,
    _gradients,
    derive_bounds,
    expected_jacobian,
    local_aggregates,
)
from .network import NetworkModel, NetworkRealization, RealizationStream, effective, expected_effective

_REL_TOL = 1e-12


# --------------------------------------------------------------------------
# constants

@dataclass(frozen=True)
class ConstantsBundle:
    """Closed-form constants of the noise, rate and regret bounds.

    ``D`` is ``nan`` (and ``D_defined`` false) when ``B C2 <= 1`` or the
    schedule does not expose ``B`` and ``delta``.
    """

    M: float
    C1: float
    C2: float
    C3: float
    C4: float
    B: float
    K: int
    delta_K: float
    D: float
    D_defined: bool
    eps_worst: float
    J1: float
    N: int

    def as_dict(self) -> dict:
        return {k: (v if not (isinstance(v, float) and math.isnan(v)) else None)
                for k, v in self.__dict__.items()}


def _schedule_delta(schedule: StepSchedule):
    if isinstance(schedule, (ThetaRule, AlphaRule)):
        return schedule.delta
    if isinstance(schedule, CustomSchedule) and schedule.delta is not None:
        return lambda k: np.asarray([schedule.delta(int(x)) for x in np.atleast_1d(k)], dtype=float)
    return None


def _first_index_below(schedule: StepSchedule, delta, level: float, k_max: int = 10_000_000) -> Optional[int]:
    """Smallest ``k >= 1`` with ``delta_k <= level`` (``delta`` is nonincreasing)."""
    if isinstance(schedule, (ThetaRule, AlphaRule)):
        # k^-e <= level  <=>  k >= level^(-1/e); the tolerance absorbs 2^a / 2^a rounding
        k = max(1, math.ceil(level ** (-1.0 / schedule.exponent) * (1 - _REL_TOL)))
        while k > 1 and float(delta(k - 1)) <= level * (1 + _REL_TOL):
            k -= 1
        while float(delta(k)) > level * (1 + _REL_TOL):
            k += 1
        return k
    k0 = 1
    step = 4096
    while k0 <= k_max:
        ks = np.arange(k0, k0 + step)
        hit = np.nonzero(delta(ks) <= level * (1 + _REL_TOL))[0]
        if hit.size:
            return int(ks[hit[0]])
        k0 += step
        step *= 2
    return None


def constants(bounds: GameBounds, model: NetworkModel, schedule: StepSchedule) -> ConstantsBundle:
    pmin = float(np.min(model.pbar))
    pmax = float(np.max(model.pbar))
    M = bounds.J2 * (1.0 / pmin + 1.0)
    C1 = pmax * (bounds.J2 ** 2 + M ** 2)
    C2 = 2.0 * bounds.mu * pmin
    C3 = 4.0 * bounds.s_max ** 2 / pmin
    C4 = bounds.L_s + 2.0 * bounds.L_z
    B = getattr(schedule, "B", None)
    B = float("nan") if B is None else float(B)
    delta = _schedule_delta(schedule)

    K, delta_K, D, ok = 0, float("nan"), float("nan"), False
    if delta is not None and math.isfinite(B) and B * C2 > 1.0:
        K_found = _first_index_below(schedule, delta, 1.0 / (B * C2))
        if K_found is not None:
            K = K_found
            delta_K = float(np.asarray(delta(K)).ravel()[0])
            D = max(C3 / delta_K, B * B * C1 / (B * C2 - 1.0))
            ok = True
    return ConstantsBundle(M=M, C1=C1, C2=C2, C3=C3, C4=C4, B=B, K=K, delta_K=delta_K, D=D,
                           D_defined=ok, eps_worst=4.0 * bounds.L_z * bounds.s_max,
                           J1=bounds.J1, N=model.N)


# --------------------------------------------------------------------------
# regret

def instantaneous_regret(game: GameSpec, s, realization: NetworkRealization) -> np.ndarray:
    """``J_i(s_i, z_i) - min_x J_i(x, z_i)`` against the realized aggregates."""
    return nash_gap(game, s, effective(realization))


@dataclass(frozen=True, eq=False)
class RegretBoundReport:
    rows: int
    violations: list  # (k, agent or -1 when only the max is stored)
    worst_case_violations: list
    min_slack: float
    max_regret: float

    @property
    def ok(self) -> bool:
        return not self.violations and not self.worst_case_violations


def regret_bound_check(trace: SimulationTrace, consts: ConstantsBundle, tol: float = 1e-12) -> RegretBoundReport:
    """Check ``R_i(k) <= C4 |s^k - sbar| + eps_worst`` and ``R_i(k) <= 2 J1`` on every row.

    Uses the per-agent regret matrix when the trace stored one, else the
    per-row maximum (equivalent for a bound that does not depend on ``i``).
    """
    bound = consts.C4 * trace.dist + consts.eps_worst
    R = trace.regret if trace.regret is not None else trace.max_regret[:, None]
    per_agent = trace.regret is not None
    slack = bound[:, None] - R
    bad = np.argwhere(slack < -tol * np.maximum(1.0, bound[:, None]))
    worst = np.argwhere(R > 2.0 * consts.J1 * (1 + tol))
    fmt = lambda idx: [(int(trace.k[r]), int(c) if per_agent else -1) for r, c in idx]
    return RegretBoundReport(rows=len(trace), violations=fmt(bad), worst_case_violations=fmt(worst),
                             min_slack=float(slack.min()), max_regret=float(R.max()))


def time_averaged_regret(regret) -> np.ndarray:
    """Running means ``(1/T) sum_{k=1..T} R(k)`` for every prefix ``T``.

    ``regret`` is a sequence ``R(1), R(2), ...`` (1-D, or 2-D with one
    column per agent), or a trace, whose row ``0`` describes the starting
    profile and is skipped.  Row ``T-1`` of the output is the mean up to ``T``.
    """
    if isinstance(regret, SimulationTrace):
        if regret.regret is None:
            raise ValueError("trace holds no per-agent regret; run with store_regret=True")
        regret = regret.regret[1:]
    r = np.asarray(regret, dtype=float)
    counts = np.arange(1, r.shape[0] + 1, dtype=float)
    return np.cumsum(r, axis=0) / (counts[:, None] if r.ndim == 2 else counts)


def averaged_regret_bound(trace: SimulationTrace, consts: ConstantsBundle) -> np.ndarray:
    """Running-mean bound ``C4 mean_k |s^k - sbar| + eps_worst`` over ``k = 1..T``.

    Obtained by averaging the per-step inequality, so the running mean of
    ``max_i R_i`` can never exceed it.
    """
    return consts.C4 * time_averaged_regret(trace.dist[1:]) + consts.eps_worst


def expected_averaged_regret_bound(T, consts: ConstantsBundle, bounds: GameBounds, n: int) -> np.ndarray:
    """``2 J1/T + 2 C4 sqrt(N D / T) + eps_bar(N, 1/N)(1 - 1/N) + 4 L_z s_max / N``.

    Bound on the expected time-averaged regret under a step-size rule with a
    finite ``D``.  For ``N = 1`` the concentration term is dropped (a single
    agent has no neighbours, so its aggregate is exactly zero).
    """
    if not consts.D_defined:
        raise ValueError("D is undefined for this schedule (needs B C2 > 1)")
    N = consts.N
    T = np.asarray(T, dtype=float)
    net = 0.0 if N == 1 else epsilon_bar(N, n, 1.0 / N, bounds).eps_bar * (1 - 1.0 / N)
    return (2 * consts.J1 / T + 2 * consts.C4 * np.sqrt(N * consts.D / T) + net
            + 4 * bounds.L_z * bounds.s_max / N)


# --------------------------------------------------------------------------
# rates

@dataclass(frozen=True)
class RateFit:
    exponent: float
    intercept: float
    k_min: float
    k_max: float
    residual: float
    points: int


def fit_rate(k, values, k_range: Optional[Sequence[float]] = None) -> RateFit:
    """Least-squares line through ``(log k, log value)`` over ``k_range``."""
    k = np.asarray(k, dtype=float)
    v = np.asarray(values, dtype=float)
    if k.shape != v.shape:
        raise ValueError("k and values must have the same shape")
    if k_range is not None:
        sel = (k >= k_range[0]) & (k <= k_range[1])
        k, v = k[sel], v[sel]
    if k.size < 10:
        raise ValueError(f"rate fit needs at least 10 points, got {k.size}")
    if np.any(v <= 0) or np.any(k <= 0):
        raise ValueError("rate fit needs positive k and values over the fit range")
    x, y = np.log(k), np.log(v)
    (slope, icpt), res, *_ = np.polyfit(x, y, 1, full=True)
    return RateFit(float(slope), float(icpt), float(k[0]), float(k[-1]),
                   float(res[0]) if res.size else 0.0, int(k.size))


def envelope_check(k, dist, beta: float, decade: float = 10.0, k_start: int = 100):
    """Finite-horizon check of ``|s^k - sbar| = o(k^-(1-beta)/2)``.

    The envelope constant ``c`` is the smallest one for which
    ``c k^-(1-beta)/2`` dominates the path on ``[k_start, T/decade)``.  The
    test passes when the running maximum ``max_{j >= k} |s^j - sbar|`` stays
    below ``c k^-(1-beta)/2`` on the last decade ``[T/decade, T]``.
    Returns ``(ok, c, worst_ratio)`` where ``worst_ratio <= 1`` means pass.
    """
    k = np.asarray(k, dtype=float)
    d = np.asarray(dist, dtype=float)
    T = k[-1]
    e = 0.5 * (1.0 - beta)
    head = (k >= k_start) & (k < T / decade)
    if not np.any(head):
        raise ValueError("horizon too short for the envelope fit")
    c = float(np.max(d[head] * k[head] ** e))
    tail = k >= T / decade
    run_max = np.maximum.accumulate(d[tail][::-1])[::-1]
    ratio = float(np.max(run_max * k[tail] ** e) / c) if c > 0 else (0.0 if np.all(run_max == 0) else math.inf)
    return ratio <= 1.0, c, ratio


# --------------------------------------------------------------------------
# replication statistics

class RunningMoments:
    """Streaming mean and standard deviation of equally shaped arrays (Welford)."""

    def __init__(self):
        self.count = 0
        self._mean = None
        self._m2 = None

    def add(self, x):
        x = np.asarray(x, dtype=float)
        self.count += 1
        if self._mean is None:
            self._mean = x.copy()
            self._m2 = np.zeros_like(x)
            return
        d = x - self._mean
        self._mean += d / self.count
        self._m2 += d * (x - self._mean)

    @property
    def mean(self) -> np.ndarray:
        return self._mean

    @property
    def std(self) -> np.ndarray:
        if self.count < 2:
            return np.zeros_like(self._mean)
        return np.sqrt(self._m2 / (self.count - 1))

    @property
    def stderr(self) -> np.ndarray:
        return self.std / math.sqrt(max(self.count, 1))


@dataclass(frozen=True, eq=False)
class MeanSquareReport:
    k: np.ndarray
    mean: np.ndarray
    bound: np.ndarray
    slack: np.ndarray
    ok: np.ndarray
    replications: int

    @property
    def violations(self) -> np.ndarray:
        return self.k[~self.ok]


def mean_square_bound_check(k, moments: RunningMoments, consts: ConstantsBundle, schedule: StepSchedule,
                            sigmas: float = 4.0, min_replications: int = 30) -> MeanSquareReport:
    """``mean_r |s^k - sbar| <= sqrt(N D delta_k) + sigmas * sd / sqrt(R)`` for ``k >= K``."""
    if moments.count < min_replications:
        raise ValueError(f"mean-square check needs at least {min_replications} replications, got {moments.count}")
    if not consts.D_defined:
        raise ValueError("D is undefined for this schedule (needs B C2 > 1)")
    delta = _schedule_delta(schedule)
    k = np.asarray(k)
    sel = k >= consts.K
    kk = k[sel]
    bound = np.sqrt(consts.N * consts.D * delta(kk))
    mean = moments.mean[sel]
    slack = bound + sigmas * moments.stderr[sel] - mean
    return MeanSquareReport(kk, mean, bound, slack, slack >= 0, moments.count)


def noise_ceiling_check(noise_sq, consts: ConstantsBundle) -> np.ndarray:
    """Indices where ``|w|^2 > M^2 N``."""
    ceiling = consts.M ** 2 * consts.N
    return np.nonzero(np.asarray(noise_sq) > ceiling * (1 + _REL_TOL))[0]


def weighted_distance(s, sbar, pbar) -> float:
    """``sqrt(sum_i |s_i - sbar_i|^2 / pbar_i)``."""
    pbar = np.asarray(pbar, dtype=float)
    if np.any(pbar <= 0):
        raise ValueError("participation probabilities must be positive")
    e = np.asarray(s, dtype=float) - np.asarray(sbar, dtype=float)
    e = e.reshape(pbar.shape[0], -1)
    return float(np.sqrt(np.sum(np.sum(e * e, axis=1) / pbar)))


# --------------------------------------------------------------------------
# appendix inequalities

@dataclass(frozen=True)
class AppendixReport:
    power_checked: int
    power_violations: int
    series_checked: int
    series_violations: int
    step_checked: int
    step_violations: int
    min_slack: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not (self.power_violations or self.series_violations or self.step_violations)


def appendix_checks(alphas: Sequence[float] = tuple(np.round(np.arange(1, 11) / 10, 1)),
                    k_max: int = 1000, k0_max: int = 1000, T_max: int = 10_000) -> AppendixReport:
    """Check three elementary inequalities on a grid.

    * ``(k+1)^a <= k^a + 1`` for ``k in [1, k_max]``;
    * ``sum_{j=k0}^{T} j^-a <= T^(1-a)/(1-a)`` for ``k0 in [1, k0_max]``,
      ``T in (k0, T_max]`` (only ``a < 1``: the right side is undefined at 1);
    * ``delta_{k+1} >= delta_k (1 - delta_k)`` for ``delta_k = k^-a``.
    """
    ks = np.arange(1, k_max + 1, dtype=float)
    js = np.arange(1, T_max + 1, dtype=float)
    p_n = p_bad = s_n = s_bad = d_n = d_bad = 0
    slack = {"power": math.inf, "series": math.inf, "step": math.inf}
    for a in alphas:
        lhs = (ks + 1) ** a
        rhs = ks ** a + 1
        sl = rhs - lhs
        p_n += ks.size
        p_bad += int(np.sum(sl < -_REL_TOL * rhs))
        slack["power"] = min(slack["power"], float(sl.min()))

        dk = ks ** -a
        dk1 = (ks + 1) ** -a
        sl = dk1 - dk * (1 - dk)
        d_n += ks.size
        d_bad += int(np.sum(sl < -_REL_TOL))
        slack["step"] = min(slack["step"], float(sl.min()))

        if a >= 1:
            continue
        csum = np.concatenate([[0.0], np.cumsum(js ** -a)])  # csum[t] = sum_{j<=t}
        rhs_T = js ** (1 - a) / (1 - a)
        for k0 in range(1, k0_max + 1):
            T = np.arange(k0 + 1, T_max + 1)
            partial = csum[T] - csum[k0 - 1]
            r = rhs_T[T - 1]
            sl = r - partial
            s_n += T.size
            s_bad += int(np.sum(sl < -_REL_TOL * r))
            slack["series"] = min(slack["series"], float(sl.min()))
    return AppendixReport(p_n, p_bad, s_n, s_bad, d_n, d_bad, slack)


# --------------------------------------------------------------------------
# Monte Carlo checks over sampled stage networks

def _batches(model: NetworkModel, draws: int, seed: int, replication: int, chunk: int):
    stream = RealizationStream(model, seed, replication)
    done = 0
    while done < draws:
        m = min(chunk, draws - done)
        G, P = stream.batch(m)
        yield G * P[:, None, :], P
        done += m


def _project_batch(game: GameSpec, y: np.ndarray) -> np.ndarray:
    """Project ``y`` of shape ``(m, N, n)`` agent-wise onto the strategy sets."""
    if all(isinstance(S, Box) for S in game.sets):
        lo = np.stack([S.lower for S in game.sets])
        hi = np.stack([S.upper for S in game.sets])
        return np.clip(y, lo, hi)
    out = np.empty_like(y)
    for i, S in enumerate(game.sets):
        if isinstance(S, Box):
            out[:, i] = np.clip(y[:, i], S.lower, S.upper)
        else:
            d = y[:, i] - S.center
            nrm = np.linalg.norm(d, axis=1, keepdims=True)
            f = np.where(nrm > S.radius, S.radius / np.where(nrm > 0, nrm, 1.0), 1.0)
            out[:, i] = S.center + d * f
    return out


def stage_gaps(game: GameSpec, s, W: np.ndarray) -> np.ndarray:
    """Nash gaps of ``s`` on a stack of effective networks ``W`` (m, N, N) -> (m, N)."""
    s = game.profile(s)
    z = W @ s / game.N
    if not game.is_quadratic:
        return np.stack([nash_gap(game, s, w) for w in W])
    u = -(game.a[None, :, None] * z + game.b[None]) / game.q[None, :, None]
    br = _project_batch(game, u)
    gap = 0.5 * game.q[None] * np.einsum("mij,mij->mi", s[None] - br, s[None] + br - 2.0 * u)
    return np.maximum(gap, 0.0)


@dataclass(frozen=True, eq=False)
class NoiseReport:
    mean: np.ndarray
    stderr: np.ndarray
    max_sq: float
    ceiling: float
    ceiling_violations: int
    mean_violations: int
    draws: int

    @property
    def ok(self) -> bool:
        return self.ceiling_violations == 0 and self.mean_violations == 0


def noise_moments(game: GameSpec, s, consts: ConstantsBundle, draws: int, seed: int = 0,
                  replication: int = 0, sigmas: float = 4.0, chunk: int = 500) -> NoiseReport:
    """Sample ``w = (P/pbar) F(s, GP) - F~(s)`` and test ``E w = 0`` and ``|w|^2 <= M^2 N``.

    The zero-mean test allows ``sigmas`` standard errors per coordinate;
    coordinates with zero sample variance must have a mean of exactly zero
    up to rounding.
    """
    s = game.profile(s)
    Ft = expected_jacobian(game, s)
    pbar = game.network.pbar
    total = np.zeros_like(s)
    total_sq = np.zeros_like(s)
    max_sq = 0.0
    ceiling = consts.M ** 2 * consts.N
    over = 0
    for W, P in _batches(game.network, draws, seed, replication, chunk):
        z = W @ s / game.N
        if game.is_quadratic:
            g = game.q[None, :, None] * s[None] + game.a[None, :, None] * z + game.b[None]
        else:
            g = np.stack([_gradients(game, s, zz) for zz in z])
        w = (P / pbar)[:, :, None] * g - Ft[None]
        total += w.sum(axis=0)
        total_sq += (w * w).sum(axis=0)
        nsq = np.einsum("mij,mij->m", w, w)
        max_sq = max(max_sq, float(nsq.max()))
        over += int(np.sum(nsq > ceiling * (1 + _REL_TOL)))
    mean = total / draws
    var = np.maximum(total_sq / draws - mean ** 2, 0.0) * draws / max(draws - 1, 1)
    se = np.sqrt(var / draws)
    scale = np.maximum(np.abs(Ft), 1.0)
    bad = int(np.sum(np.abs(mean) > sigmas * se + 1e-12 * scale))
    return NoiseReport(mean, se, max_sq, ceiling, over, bad, draws)


@dataclass(frozen=True, eq=False)
class FrequencyReport:
    frequency: np.ndarray  # per agent, or a scalar array for whole-profile events
    threshold: float
    radius: float
    draws: int
    hard_violations: int = 0

    @property
    def ok(self) -> bool:
        return bool(np.all(self.frequency >= self.threshold)) and self.hard_violations == 0


def concentration_frequency(game: GameSpec, s, delta: float, draws: int, seed: int = 0,
                            replication: int = 0, slack: float = 0.02, chunk: int = 200) -> FrequencyReport:
    """Per-agent frequency of ``|z_i(s|GP) - z_i(s|Gbar Pbar)| <= C_delta``.

    Passes when every frequency is at least ``1 - delta/(2N) - slack``.
    """
    bounds = derive_bounds(game)
    s = game.profile(s)
    N = game.N
    radius = concentration_radius(N, game.n, delta, bounds.s_max)
    zbar = local_aggregates(s, expected_effective(game.network))
    hits = np.zeros(N)
    for W, _ in _batches(game.network, draws, seed, replication, chunk):
        dz = np.linalg.norm(W @ s / N - zbar[None], axis=2)
        hits += np.sum(dz <= radius, axis=0)
    return FrequencyReport(hits / draws, 1 - delta / (2 * N) - slack, radius, draws)


def epsilon_nash_frequency(game: GameSpec, s, delta: float, draws: int, seed: int = 0,
                           replication: int = 0, slack: Optional[float] = None,
                           chunk: int = 200) -> FrequencyReport:
    """Fraction of stage networks on which ``s`` is an ``eps_bar``-Nash equilibrium.

    Passes when the fraction is at least ``1 - delta - slack`` (default
    slack: four binomial standard errors) and no draw exceeds the
    worst-case gap ``4 L_z s_max``.
    """
    bounds = derive_bounds(game)
    eps = epsilon_bar(game.N, game.n, delta, bounds)
    if slack is None:
        slack = 4 * math.sqrt(delta * (1 - delta) / draws)
    hits = 0
    hard = 0
    for W, _ in _batches(game.network, draws, seed, replication, chunk):
        gmax = stage_gaps(game, s, W).max(axis=1)
        hits += int(np.sum(gmax <= eps.eps_bar))
        hard += int(np.sum(gmax > eps.eps_worst * (1 + _REL_TOL) + 1e-15))
    return FrequencyReport(np.array(hits / draws), 1 - delta - slack, eps.eps_bar, draws, hard)
