import numpy as np
import pytest

from conftest import random_game, two_cycle_game
from netgame import (
    AlphaRule, Box, CustomSchedule, GameBounds, GameSpec, NetworkModel, NetworkRealization, QuadraticCost,
    ThetaRule, Constant, appendix_checks, constants, derive_bounds, fit_rate, instantaneous_regret,
    mean_square_bound_check, regret_bound_check, run, solve_expected_vi, time_averaged_regret,
    weighted_distance,
)
from netgame.metrics import (
    RunningMoments, averaged_regret_bound, envelope_check, noise_ceiling_check, noise_moments, stage_gaps,
)
from netgame.network import RealizationStream, effective

BOUNDS = GameBounds(s_max=1.0, J1=2.0, J2=2.0, L_s=2.0, L_z=0.5, mu=0.75)


# constants

def test_M_example():
    net = NetworkModel(4, Constant(1.0), 0.5)
    assert constants(BOUNDS, net, ThetaRule(0.25)).M == pytest.approx(6.0)


def test_M_full_participation():
    net = NetworkModel(4, Constant(1.0), 1.0)
    assert constants(BOUNDS, net, ThetaRule(0.25)).M == pytest.approx(2 * BOUNDS.J2)


def test_alpha_one_constants():
    net = NetworkModel(4, Constant(1.0), [0.5, 0.8, 1.0, 0.9])
    c2 = 2 * BOUNDS.mu * 0.5
    c = constants(BOUNDS, net, AlphaRule(1.0, c2))
    assert c.C2 == pytest.approx(c2)
    assert c.B == pytest.approx(2 / c2)
    assert c.K == 2 and c.delta_K == 0.5
    assert c.C1 == pytest.approx(1.0 * (BOUNDS.J2 ** 2 + c.M ** 2))
    assert c.C3 == pytest.approx(4 / 0.5)
    assert c.D == pytest.approx(max(2 * c.C3, c.B ** 2 * c.C1))
    assert c.C4 == pytest.approx(3.0)


def test_alpha_rule_K_is_two_for_all_alpha():
    net = NetworkModel(3, Constant(1.0), 0.7)
    for alpha in np.linspace(0.1, 1.0, 10):
        c = constants(BOUNDS, net, AlphaRule(alpha, 1.05))
        assert c.K == 2
        assert c.D == pytest.approx(max(2 ** alpha * c.C3, c.B ** 2 * c.C1 / (2 ** alpha - 1)))


def test_D_flagged_when_undefined():
    net = NetworkModel(3, Constant(1.0), 0.7)
    c = constants(BOUNDS, net, CustomSchedule(lambda k: 0.1 / (k + 1), B=0.1, delta=lambda k: 1 / max(k, 1)))
    assert not c.D_defined and np.isnan(c.D)
    assert c.as_dict()["D"] is None
    assert not constants(BOUNDS, net, CustomSchedule(lambda k: 1.0)).D_defined


def test_custom_schedule_K_scan():
    net = NetworkModel(3, Constant(1.0), 1.0)
    c = constants(BOUNDS, net, CustomSchedule(lambda k: 10 / max(k, 1), B=10.0, delta=lambda k: 1 / max(k, 1)))
    # B C2 = 15, so K is the first k with 1/k <= 1/15
    assert c.K == 15 and c.D_defined


# regret

def test_regret_example_two_agents():
    game = two_cycle_game()
    G = np.array([[0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_allclose(instantaneous_regret(game, [1.0, 1.0], NetworkRealization(G, np.ones(2))),
                               [0.03125, 0.03125])


def test_regret_zero_at_best_response(rng):
    game = random_game(N=6)
    G = rng.integers(0, 2, size=(6, 6)).astype(float)
    np.fill_diagonal(G, 0)
    real = NetworkRealization(G, np.ones(6))
    s = rng.uniform(size=(6, 1))
    z = effective(real) @ s / 6
    br = np.clip(-(0.5 * z - 1.0), 0, 1)
    r = instantaneous_regret(game, s, real)
    # z_i does not depend on s_i, so each agent can be moved to its best response separately
    for i in range(6):
        t = s.copy()
        t[i] = br[i]
        assert instantaneous_regret(game, t, real)[i] <= 1e-15
    assert np.all(r >= 0)


def test_regret_never_exceeds_twice_J1(rng):
    game = random_game(N=8, n=2, a=-0.9, b=[0.7, -1.3])
    J1 = derive_bounds(game).J1
    stream = RealizationStream(game.network, 3)
    for _ in range(300):
        s = rng.uniform(size=(8, 2))
        assert instantaneous_regret(game, s, stream.next()).max() <= 2 * J1


def test_stage_gaps_match_nash_gap(rng):
    game = random_game(N=7, n=2, b=[-2.0, 0.5])
    G, P = RealizationStream(game.network, 0).batch(20)
    W = G * P[:, None, :]
    s = rng.uniform(size=(7, 2))
    ref = np.stack([instantaneous_regret(game, s, NetworkRealization(g, p)) for g, p in zip(G, P)])
    np.testing.assert_allclose(stage_gaps(game, s, W), ref, atol=1e-14)


def test_regret_bound_on_long_run():
    game = random_game(N=50)
    bounds = derive_bounds(game)
    sch = ThetaRule(0.25)
    c = constants(bounds, game.network, sch)
    tr = run(game, sch, 10_000, seed=8, store_regret=True)
    rep = regret_bound_check(tr, c)
    assert rep.ok and rep.rows == 10_001 and rep.min_slack > 0
    # the averaged bound follows from the per-step one
    assert np.all(time_averaged_regret(tr.max_regret[1:]) <= averaged_regret_bound(tr, c) + 1e-12)


def test_regret_bound_single_decoupled_agent():
    game = GameSpec(1, 1, Box([0.0], [1.0]), QuadraticCost(1.0, 0.0, -0.5), NetworkModel(1, Constant(0.0)))
    bounds = derive_bounds(game)
    c = constants(bounds, game.network, ThetaRule(0.25))
    assert c.eps_worst == 0.0
    tr = run(game, ThetaRule(0.25), 50, store_regret=True)
    assert regret_bound_check(tr, c).ok
    assert np.all(tr.regret[:, 0] <= c.C4 * tr.dist + 1e-15)


def test_regret_bound_reports_violations():
    game = random_game(N=5)
    c = constants(derive_bounds(game), game.network, ThetaRule(0.25))
    tr = run(game, ThetaRule(0.25), 5, store_regret=True)
    tr.regret[3, 2] = 1e3
    rep = regret_bound_check(tr, c)
    assert not rep.ok and (3, 2) in rep.violations and (3, 2) in rep.worst_case_violations


def test_time_averaged_regret_examples():
    np.testing.assert_allclose(time_averaged_regret(np.full(10, 0.3)), 0.3)
    seq = np.zeros(20)
    seq[0] = 4.0
    np.testing.assert_allclose(time_averaged_regret(seq), 4.0 / np.arange(1, 21))
    two = time_averaged_regret(np.column_stack([np.ones(4), np.arange(4)]))
    np.testing.assert_allclose(two[-1], [1.0, 1.5])


# rates

def test_fit_rate_synthetic():
    k = np.arange(1, 1001)
    f = fit_rate(k, k ** -0.5)
    assert abs(f.exponent + 0.5) < 1e-8
    f = fit_rate(k, 3.0 * k ** -0.3, (100, 1000))
    assert abs(f.exponent + 0.3) < 1e-6 and abs(f.intercept - np.log(3.0)) < 1e-6
    assert f.k_min == 100 and f.k_max == 1000 and f.points == 901


def test_fit_rate_rejections():
    k = np.arange(1, 100)
    with pytest.raises(ValueError, match="10 points"):
        fit_rate(k, k ** -1.0, (1, 5))
    v = k ** -1.0
    v[50] = 0.0
    with pytest.raises(ValueError, match="positive"):
        fit_rate(k, v)


def test_envelope_check_synthetic():
    k = np.arange(0, 10_001)
    d = np.where(k > 0, 1.0 / np.maximum(k, 1) ** 0.4, 1.0)
    ok, c, ratio = envelope_check(k, d, beta=0.6)
    assert ok and ratio < 1
    bad = d.copy()
    bad[-1] = 1.0
    assert not envelope_check(k, bad, beta=0.6)[0]


def test_running_moments_match_numpy(rng):
    x = rng.normal(size=(40, 5))
    m = RunningMoments()
    for row in x:
        m.add(row)
    np.testing.assert_allclose(m.mean, x.mean(0))
    np.testing.assert_allclose(m.std, x.std(0, ddof=1))
    np.testing.assert_allclose(m.stderr, x.std(0, ddof=1) / np.sqrt(40))


# mean-square envelope

def _alpha_moments(game, R, T):
    sch = AlphaRule.for_game(game, 1.0)
    sbar = solve_expected_vi(game).s
    m = RunningMoments()
    for r in range(R):
        m.add(run(game, sch, T, seed=1, replication=r, sbar=sbar).dist)
    return sch, m


def test_mean_square_refuses_few_replications():
    game = two_cycle_game()
    sch, m = _alpha_moments(game, 5, 20)
    c = constants(derive_bounds(game), game.network, sch)
    with pytest.raises(ValueError, match="30"):
        mean_square_bound_check(np.arange(21), m, c, sch)


def test_mean_square_deterministic_network():
    game = two_cycle_game()
    sch, m = _alpha_moments(game, 30, 200)
    c = constants(derive_bounds(game), game.network, sch)
    rep = mean_square_bound_check(np.arange(201), m, c, sch)
    assert rep.ok.all() and rep.k[0] == 2
    assert rep.bound[0] == pytest.approx(np.sqrt(2 * c.D / 2))
    assert rep.slack.min() > 0.5 * rep.bound.min()


def test_mean_square_random_network():
    game = random_game(N=20)
    sch, m = _alpha_moments(game, 30, 1000)
    c = constants(derive_bounds(game), game.network, sch)
    assert mean_square_bound_check(np.arange(1001), m, c, sch).ok.all()


# noise

def test_noise_moments_and_ceiling(rng):
    game = random_game(N=10, pbar=0.4)
    c = constants(derive_bounds(game), game.network, ThetaRule(0.25))
    rep = noise_moments(game, rng.uniform(size=(10, 1)), c, draws=5000, seed=2)
    assert rep.ok and rep.max_sq <= c.M ** 2 * 10
    tr = run(game, ThetaRule(0.25), 2000, record_noise=True)
    assert noise_ceiling_check(tr.noise_sq, c).size == 0
    assert noise_ceiling_check(np.array([0.0, c.M ** 2 * 10 * 2]), c).tolist() == [1]


def test_noise_is_zero_on_deterministic_network(rng):
    game = two_cycle_game()
    c = constants(derive_bounds(game), game.network, ThetaRule(0.25))
    rep = noise_moments(game, rng.uniform(size=(2, 1)), c, draws=100)
    assert np.all(np.abs(rep.mean) < 1e-15) and rep.ok


# appendix inequalities

def test_appendix_examples():
    assert np.sqrt(5) <= 2 + 1
    assert (4 + 1) ** 1.0 == 4 ** 1.0 + 1
    partial = sum(k ** -0.5 for k in range(2, 5))
    assert partial == pytest.approx(1.7845, abs=1e-4) and partial <= 4 ** 0.5 / 0.5


def test_appendix_grid_has_no_violations():
    rep = appendix_checks()
    assert rep.ok
    assert rep.power_checked == 10 * 1000 and rep.step_checked == 10 * 1000
    # sum over k0 of |(k0, 10^4]|, for the nine alphas below 1
    assert rep.series_checked == 9 * sum(10_000 - k0 for k0 in range(1, 1001))


def test_appendix_detects_a_false_inequality():
    # (k+1)^a <= k^a + 1 is false for a > 1, e.g. 2^1.5 > 2 at k = 1
    assert appendix_checks(alphas=(1.5,), k_max=10, k0_max=2, T_max=20).power_violations > 0


# weighted distance

def test_weighted_distance_examples():
    assert weighted_distance([1.0, 2.0], [0.0, 0.0], [1.0, 1.0]) == pytest.approx(np.sqrt(5))
    assert weighted_distance([1.0, 0.0, 0.0], np.zeros(3), np.full(3, 0.25)) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        weighted_distance([1.0], [0.0], [0.0])


def test_weighted_distance_sandwich(rng):
    for _ in range(1000):
        pbar = rng.uniform(0.05, 1.0, 6)
        e = rng.normal(size=(6, 2))
        w2 = weighted_distance(e, 0, pbar) ** 2
        e2 = float(np.sum(e * e))
        assert e2 >= pbar.min() * w2 - 1e-12
        assert w2 >= e2 - 1e-12
