"""Acceptance criteria, one test per criterion.

Each test records a ``[PASS]``/``[FAIL]`` line that is echoed in the pytest
terminal summary.  The replicated experiments behind criteria 4, 5, 8 and 9
run once per session and are reduced on the fly, so no trace is kept in
memory after it has been consumed.

Run alone with ``pytest tests/test_acceptance.py -v``.
"""
import time
from dataclasses import dataclass, field

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, random_game, two_cycle_game
from netgame import (
    AlphaRule, Ball, Box, GameSpec, NetworkModel, NetworkRealization, QuadraticCost, RealizationStream,
    ThetaRule, Uniform, Bernoulli, Constant, derive_bounds, play_step, sgd_step, solve_expected_vi,
)
from netgame.cli import main as cli_main
from netgame.dynamics import run_replications
from netgame.equilibrium import epsilon_bar
from netgame.metrics import (
    RunningMoments, appendix_checks, concentration_frequency, constants, envelope_check,
    epsilon_nash_frequency, expected_averaged_regret_bound, fit_rate, mean_square_bound_check,
    noise_moments, regret_bound_check,
)
from netgame.traceio import trace_digest

R = 200
N = 50


def report(number, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


# --------------------------------------------------------------------------
# shared replicated experiments

@dataclass
class ThetaExperiment:
    T: int
    sbar: np.ndarray
    consts: object
    final_ratio: list = field(default_factory=list)
    envelope_ratio: list = field(default_factory=list)
    regret_violations: int = 0
    worst_case_violations: int = 0
    min_slack: float = np.inf
    seconds: float = 0.0


@dataclass
class AlphaExperiment:
    T: int
    schedule: object
    consts: object
    dist: RunningMoments = field(default_factory=RunningMoments)
    avg_regret: RunningMoments = field(default_factory=RunningMoments)
    regret_violations: int = 0
    worst_case_violations: int = 0
    min_slack: float = np.inf
    seconds: float = 0.0


@pytest.fixture(scope="session")
def game50():
    game = random_game(N)
    return game, solve_expected_vi(game).s, derive_bounds(game)


@pytest.fixture(scope="session")
def theta_experiment(game50):
    game, sbar, bounds = game50
    schedule = ThetaRule(0.25)
    exp = ThetaExperiment(T=100_000, sbar=sbar, consts=constants(bounds, game.network, schedule))

    def consume(tr):
        exp.final_ratio.append(tr.dist[-1] / tr.dist[0])
        ok, _, ratio = envelope_check(tr.k, tr.dist, beta=0.6)
        exp.envelope_ratio.append(ratio)
        rb = regret_bound_check(tr, exp.consts)
        exp.regret_violations += len(rb.violations)
        exp.worst_case_violations += len(rb.worst_case_violations)
        exp.min_slack = min(exp.min_slack, rb.min_slack)

    t0 = time.perf_counter()
    run_replications(game, schedule, exp.T, seed=2024, R=R, consume=consume, sbar=sbar)
    exp.seconds = time.perf_counter() - t0
    return exp


@pytest.fixture(scope="session")
def alpha_experiment(game50):
    game, sbar, bounds = game50
    schedule = AlphaRule.for_game(game, 1.0)
    exp = AlphaExperiment(T=10_000, schedule=schedule, consts=constants(bounds, game.network, schedule))

    def consume(tr):
        exp.dist.add(tr.dist)
        exp.avg_regret.add(tr.regret[1:].mean(axis=0))
        rb = regret_bound_check(tr, exp.consts)
        exp.regret_violations += len(rb.violations)
        exp.worst_case_violations += len(rb.worst_case_violations)
        exp.min_slack = min(exp.min_slack, rb.min_slack)

    t0 = time.perf_counter()
    run_replications(game, schedule, exp.T, seed=2025, R=R, consume=consume, sbar=sbar, store_regret=True)
    exp.seconds = time.perf_counter() - t0
    return exp


# --------------------------------------------------------------------------
# criteria

def test_criterion_01_equilibrium_oracle():
    t0 = time.perf_counter()
    game = two_cycle_game()
    res = solve_expected_vi(game)
    elapsed = time.perf_counter() - t0
    Gbar = np.array([[0.0, 1.0], [1.0, 0.0]])
    oracle = np.linalg.solve(np.eye(2) + 0.25 * Gbar, np.ones(2))
    err = float(np.max(np.abs(res.s.ravel() - oracle)))
    ok = err <= 1e-8 and elapsed < 1.0 and np.allclose(oracle, 0.8)
    assert report(1, ok, f"sbar = {res.s.ravel()}, |sbar - oracle| = {err:.2e}, {elapsed:.3f} s")


def _criterion2_games():
    rng = np.random.default_rng(7)
    mixed = [[None if i == j else (Bernoulli(0.3), Uniform(0.2, 0.9), Constant(0.5))[(i + j) % 3]
              for j in range(6)] for i in range(6)]
    return [
        two_cycle_game(),
        random_game(N=20, p=0.5, pbar=0.7),
        GameSpec(6, 2, Ball(np.zeros(2), 1.0), QuadraticCost(2.0, -0.8, [0.5, -1.5]),
                 NetworkModel(6, mixed, rng.uniform(0.3, 1.0, 6))),
        GameSpec(10, 3, Box(-np.ones(3), np.ones(3)), QuadraticCost(rng.uniform(0.5, 2, 10), 1.2, rng.normal(size=(10, 3))),
                 NetworkModel(10, Uniform(0.0, 1.0), 0.4)),
        GameSpec(15, 1, [Box([0.0], [2.0]) if i % 2 else Ball([0.5], 0.5) for i in range(15)],
                 QuadraticCost(1.0, 0.9, -2.0), NetworkModel(15, Bernoulli(0.9), 0.2)),
    ]


def test_criterion_02_dynamics_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    worst = 0.0
    checked = 0
    for g_idx, game in enumerate(_criterion2_games()):
        stream = RealizationStream(game.network, seed=3, replication=g_idx)
        for _ in range(200):
            s = game.project_profile(rng.normal(scale=2.0, size=(game.N, game.n)))
            real = stream.next()
            tau = float(rng.uniform(1e-3, 2.0))
            a = play_step(game, s, real, tau)
            b, _ = sgd_step(game, s, real, tau)
            worst = max(worst, float(np.max(np.abs(a - b))))
            checked += 1
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and checked == 1000 and elapsed < 10
    assert report(2, ok, f"max |play_step - sgd_step| = {worst:.2e} over {checked} triples, 5 games, {elapsed:.1f} s")


def test_criterion_03_noise_moments(game50):
    game, _, bounds = game50
    t0 = time.perf_counter()
    consts = constants(bounds, game.network, ThetaRule(0.25))
    rng = np.random.default_rng(21)
    mean_bad = ceiling_bad = 0
    max_sq = 0.0
    for j in range(20):
        s = rng.uniform(0.0, 1.0, size=(N, 1))
        rep = noise_moments(game, s, consts, draws=10_000, seed=5, replication=j)
        mean_bad += rep.mean_violations
        ceiling_bad += rep.ceiling_violations
        max_sq = max(max_sq, rep.max_sq)
    elapsed = time.perf_counter() - t0
    ok = mean_bad == 0 and ceiling_bad == 0 and elapsed < 60
    assert report(3, ok, f"{mean_bad} coordinates beyond 4 SE, {ceiling_bad} draws over M^2 N "
                         f"(max |w|^2 = {max_sq:.1f} <= {consts.M ** 2 * N:.1f}), {elapsed:.1f} s")


def test_criterion_04_almost_sure_surrogate(theta_experiment):
    exp = theta_experiment
    worst_final = max(exp.final_ratio)
    worst_env = max(exp.envelope_ratio)
    ok = len(exp.final_ratio) == R and worst_final < 0.05 and worst_env <= 1.0
    assert report(4, ok, f"{len(exp.final_ratio)} paths, T = {exp.T}: max |s^T - sbar|/|s^0 - sbar| = "
                         f"{worst_final:.2e} (< 0.05), max tail/envelope = {worst_env:.3f} (<= 1), "
                         f"{exp.seconds / 60:.1f} min")


def test_criterion_05_mean_square_rate(alpha_experiment):
    exp = alpha_experiment
    k = np.arange(exp.T + 1)
    ms = mean_square_bound_check(k, exp.dist, exp.consts, exp.schedule)
    fit = fit_rate(k, exp.dist.mean, (1e2, 1e4))
    ok = bool(ms.ok.all()) and ms.k[0] == 2 and fit.exponent <= -0.4
    assert report(5, ok, f"{int((~ms.ok).sum())} of {ms.k.size} iterations k >= 2 above sqrt(N D / k) + 4 SE "
                         f"(D = {exp.consts.D:.2f}); fitted slope {fit.exponent:.3f} (<= -0.4), "
                         f"{exp.seconds:.0f} s")


@pytest.fixture(scope="session")
def game100():
    game = random_game(100)
    return game, solve_expected_vi(game).s


def test_criterion_06_concentration(game100):
    game, sbar = game100
    rep = concentration_frequency(game, sbar, delta=0.1, draws=10_000, seed=9, slack=0.02)
    ok = rep.ok
    assert report(6, ok, f"min per-agent frequency {rep.frequency.min():.4f} >= {rep.threshold:.4f} "
                         f"(radius {rep.radius:.4f})")


def test_criterion_07_epsilon_nash(game100):
    game, sbar = game100
    rep = epsilon_nash_frequency(game, sbar, delta=0.1, draws=10_000, seed=10, slack=0.02)
    ok = rep.ok
    assert report(7, ok, f"frequency {float(rep.frequency):.4f} >= {rep.threshold:.4f} at eps_bar = "
                         f"{rep.radius:.4f}; {rep.hard_violations} draws above 4 L_z s_max")


def test_criterion_08_regret_inequality(theta_experiment, alpha_experiment):
    bad = theta_experiment.regret_violations + alpha_experiment.regret_violations
    worst = theta_experiment.worst_case_violations + alpha_experiment.worst_case_violations
    slack = min(theta_experiment.min_slack, alpha_experiment.min_slack)
    ok = bad == 0 and worst == 0
    assert report(8, ok, f"{bad} violations of R_i <= C4 |s - sbar| + 4 L_z s_max, {worst} of R_i <= 2 J1 "
                         f"over {2 * R} traces (min slack {slack:.3f})")


def test_criterion_09_time_averaged_regret(game50, alpha_experiment):
    game, _, bounds = game50
    exp = alpha_experiment
    bound = float(expected_averaged_regret_bound(exp.T, exp.consts, bounds, game.n))
    lhs = exp.avg_regret.mean
    margin = bound + 4 * exp.avg_regret.stderr - lhs
    ok = bool(np.all(margin >= 0)) and exp.avg_regret.count == R
    assert report(9, ok, f"max agent mean regret at T = {exp.T}: {lhs.max():.4g} <= bound {bound:.4g} "
                         f"(+4 SE) for all {lhs.size} agents")


def test_criterion_10_appendix_grid():
    t0 = time.perf_counter()
    rep = appendix_checks()
    elapsed = time.perf_counter() - t0
    total = rep.power_checked + rep.series_checked + rep.step_checked
    bad = rep.power_violations + rep.series_violations + rep.step_violations
    ok = rep.ok and elapsed < 5
    assert report(10, ok, f"{bad} violations over {total} grid points, {elapsed:.2f} s")


def test_criterion_11_reproducibility(tmp_path):
    from pathlib import Path

    cfg = Path(__file__).resolve().parents[1] / "configs" / "random_50.toml"
    digests = []
    texts = []
    for name in ("a", "b"):
        out = tmp_path / name
        code = cli_main(["run", "--config", str(cfg), "--out", str(out), "--seed", "17",
                         "--replications", "2", "--quiet"])
        assert code == 0
        files = sorted(out.glob("trace_r*.csv"))
        digests.append([trace_digest(f) for f in files])
        texts.append(["".join(l for l in f.read_text().splitlines(True) if not l.startswith("# created="))
                      for f in files])
    ok = digests[0] == digests[1] and texts[0] == texts[1] and len(digests[0]) == 2
    assert report(11, ok, f"two runs, {len(digests[0])} traces each: digests {'identical' if ok else 'differ'}")
