import numpy as np
import pytest

from conftest import random_game, two_cycle_game
from netgame import (
    AlphaRule, Ball, Bernoulli, CustomSchedule, GameSpec, NetworkModel, NetworkRealization, QuadraticCost,
    RealizationStream, ThetaRule, Uniform, play_step, run, run_replications, sgd_step, solve_expected_vi,
    step_size,
)
from netgame.dynamics import noise, step_sizes


# schedules

def test_theta_rule_values_and_range():
    sch = ThetaRule(0.25)
    assert step_size(sch, 0) == 1.0
    assert step_size(sch, 16) == pytest.approx(16 ** -0.75)
    for bad in (0.0, 0.5, 0.7):
        with pytest.raises(ValueError, match=r"\(0, 1/2\)"):
            ThetaRule(bad)


def test_alpha_rule_constants():
    game = random_game(N=10)
    sch = AlphaRule.for_game(game, 1.0)
    assert sch.B * sch.C2 == pytest.approx(2.0)
    assert step_size(sch, 4) == pytest.approx(sch.B / 4)
    assert sch.robbins_monro and not AlphaRule(0.5, 1.0).robbins_monro
    with pytest.raises(ValueError):
        AlphaRule(0.0, 1.0)


def test_robbins_monro_conditions_numerically():
    # partial sums of tau diverge, of tau^2 converge
    k = np.arange(1, 2_000_001, dtype=float)
    tau = ThetaRule(0.25).delta(k)
    assert tau.sum() > 50 and (tau ** 2)[1_000_000:].sum() < 1e-3


def test_step_sizes_vector_matches_scalar():
    for sch in (ThetaRule(0.1), AlphaRule(0.7, 1.3), CustomSchedule(lambda k: 1 / (k + 1))):
        np.testing.assert_allclose(step_sizes(sch, 0, 50), [step_size(sch, k) for k in range(50)])


def test_step_size_rejects_bad_values():
    with pytest.raises(ValueError):
        step_size(CustomSchedule(lambda k: -1.0), 3)
    with pytest.raises(ValueError):
        step_size(ThetaRule(0.2), -1)


# single steps

def test_play_and_sgd_step_agree(rng):
    net = NetworkModel(6, Uniform(0.1, 0.9), np.linspace(0.2, 1.0, 6))
    game = GameSpec(6, 2, Ball(np.zeros(2), 1.0), QuadraticCost(1.3, -0.6, [0.4, -0.2]), net)
    stream = RealizationStream(net, 0)
    for _ in range(100):
        s = game.project_profile(rng.normal(size=(6, 2)))
        real = stream.next()
        tau = rng.uniform(0.01, 1.5)
        a = play_step(game, s, real, tau)
        b, w = sgd_step(game, s, real, tau)
        np.testing.assert_allclose(a, b, atol=1e-12)
        np.testing.assert_allclose(w, noise(game, s, real))


def test_absent_agents_keep_strategy(rng):
    game = random_game(N=5)
    s = rng.uniform(size=(5, 1))
    G = np.ones((5, 5)) - np.eye(5)
    P = np.array([1.0, 0.0, 1.0, 0.0, 1.0])
    out = play_step(game, s, NetworkRealization(G, P), 0.5)
    np.testing.assert_array_equal(out[[1, 3]], s[[1, 3]])
    assert not np.array_equal(out[[0, 2, 4]], s[[0, 2, 4]])


# full runs

def test_engines_agree():
    game = random_game(N=12, pbar=0.6)
    kw = dict(seed=4, record_noise=True, store_regret=True, profile_every=7)
    a = run(game, ThetaRule(0.3), 300, engine="python", **kw)
    b = run(game, ThetaRule(0.3), 300, engine="numba", chunk=64, **kw)
    for name in ("dist", "wdist", "tau", "max_regret", "mean_regret", "noise_sq", "regret", "profiles"):
        np.testing.assert_allclose(getattr(a, name), getattr(b, name), atol=1e-9, err_msg=name)
    np.testing.assert_array_equal(a.n_present, b.n_present)
    np.testing.assert_array_equal(a.profile_k, b.profile_k)


def test_engines_agree_on_mixed_sets_and_edges():
    edges = [[None if i == j else (Bernoulli(0.3) if i < j else Uniform(0.2, 0.8)) for j in range(5)]
             for i in range(5)]
    game = GameSpec(5, 2, Ball(np.array([0.5, 0.0]), 0.7), QuadraticCost(1.0, 0.8, [-1.0, 0.5]),
                    NetworkModel(5, edges, 0.5))
    a = run(game, AlphaRule.for_game(game, 0.8), 200, seed=1, engine="python", store_regret=True)
    b = run(game, AlphaRule.for_game(game, 0.8), 200, seed=1, engine="numba", store_regret=True)
    np.testing.assert_allclose(a.dist, b.dist, atol=1e-9)
    np.testing.assert_allclose(a.regret, b.regret, atol=1e-9)


def test_run_is_deterministic_and_replications_differ():
    game = random_game(N=10)
    a = run(game, ThetaRule(0.25), 500, seed=3)
    b = run(game, ThetaRule(0.25), 500, seed=3)
    c = run(game, ThetaRule(0.25), 500, seed=3, replication=1)
    np.testing.assert_array_equal(a.dist, b.dist)
    assert not np.array_equal(a.dist, c.dist)


def test_trace_layout():
    tr = run(two_cycle_game(), ThetaRule(0.25), 10, seed=0, profile_every=4)
    assert len(tr) == 11 and tr.T == 10
    np.testing.assert_array_equal(tr.k, np.arange(11))
    np.testing.assert_array_equal(tr.profile_k, [0, 4, 8, 10])
    np.testing.assert_allclose(tr.profiles[0], tr.s0)
    assert tr.dist[0] == pytest.approx(np.linalg.norm(tr.s0 - tr.sbar))


def test_deterministic_network_converges_to_equilibrium():
    game = two_cycle_game()
    tr = run(game, ThetaRule(0.25), 2000)
    assert tr.dist[-1] < 1e-8
    np.testing.assert_allclose(tr.final.ravel(), [0.8, 0.8], atol=1e-8)


def test_hooks_see_read_only_profiles():
    seen = []

    def hook(k, s, metrics):
        assert not s.flags.writeable
        seen.append((k, metrics["dist"]))

    tr = run(random_game(N=4), ThetaRule(0.25), 20, hooks=[hook])
    assert [k for k, _ in seen] == list(range(21))
    np.testing.assert_allclose([d for _, d in seen], tr.dist)


def test_hooks_require_python_engine():
    with pytest.raises(ValueError):
        run(random_game(N=4), ThetaRule(0.25), 5, hooks=[lambda *a: None], engine="numba")


def test_replications_in_order_and_parallel_matches_sequential():
    game = random_game(N=6)
    sbar = solve_expected_vi(game).s
    seq, par = [], []
    run_replications(game, ThetaRule(0.25), 100, 5, 3, seq.append, sbar=sbar)
    run_replications(game, ThetaRule(0.25), 100, 5, 3, par.append, sbar=sbar, workers=2)
    assert [t.replication for t in seq] == [0, 1, 2]
    for a, b in zip(seq, par):
        np.testing.assert_array_equal(a.dist, b.dist)
