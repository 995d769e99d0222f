from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polo.core import rollout
from polo.envs import ACTION_VECTORS, box_world, corridor_grid, random_grid
from polo.oracle import bellman_H, q_values, value_iteration
from polo.planner import (PlannerConfig, PlannerError, _gaussian_noise, greedy_action, mppi_plan, nstep_target,
                          simulate_returns)


class DoubleIntegrator:
    state_dim, action_dim, gamma, feature_dim = 2, 1, 0.9, 2
    action_low, action_high = -np.ones(1), np.ones(1)

    def initial_state(self, rng=None):
        return np.array([1.0, 0.0])

    def features(self, s):
        return s

    def dynamics(self, s, a):
        x, v = s[..., 0], s[..., 1]
        v = v + 0.5 * a[..., 0]
        x = x + v
        return np.stack([x, v], axis=-1), -x ** 2


def zero(states):
    return np.zeros(np.shape(states)[:-1])


def test_flat_objective_leaves_nominal_at_zero():
    w = box_world()
    res = mppi_plan(w, w.initial_state(), zero, PlannerConfig(horizon=8, rollouts=31), rng=np.random.default_rng(0))
    np.testing.assert_allclose(res.nominal, 0.0, atol=1e-15)
    assert res.best_return == 0.0 and res.weighted_return == 0.0


def test_flat_objective_drift_shrinks_with_rollouts_without_antithetic():
    w = box_world()
    drift = []
    for R in (16, 1024):
        d = [np.abs(mppi_plan(w, w.initial_state(), zero, PlannerConfig(horizon=8, rollouts=R, antithetic=False),
                              rng=np.random.default_rng(s)).nominal).mean() for s in range(5)]
        drift.append(np.mean(d))
    assert drift[1] < 0.3 * drift[0]


def test_enumerated_noise_finds_brute_force_best_sequence():
    m = DoubleIntegrator()
    s = m.initial_state()
    levels = [-0.6, 0.0, 0.6]
    cfg = PlannerConfig(horizon=2, noise_set=[[v] for v in levels], temperature=1e-9, gamma=0.9)
    res = mppi_plan(m, s, zero, cfg)
    best, best_seq = -np.inf, None
    for seq in itertools.product(levels, repeat=2):
        tr = rollout(m, s, np.array(seq)[:, None])
        g = tr.rewards[0] + 0.9 * tr.rewards[1]
        if g > best:
            best, best_seq = g, seq
    np.testing.assert_allclose(res.nominal[:, 0], best_seq, atol=1e-12)
    assert res.best_return == pytest.approx(best, abs=1e-12)


def test_terminal_value_equivalence_for_single_zero_rollout():
    m = DoubleIntegrator()
    s = np.array([0.3, -0.2])
    value = lambda x: 2.0 * x[..., 0] - x[..., 1] ** 2  # noqa: E731
    res = mppi_plan(m, s, value, PlannerConfig(horizon=1, noise_set=[[0.0]], gamma=0.8))
    nxt, r = m.dynamics(s, np.zeros(1))
    assert res.best_return == r + 0.8 * value(nxt)


def test_warm_start_shifts_and_repeats_last_action():
    m = DoubleIntegrator()
    prev = np.array([[0.1], [0.2], [0.3]])
    cfg = PlannerConfig(horizon=3, noise_set=[[0.0]], warm_start=True)
    res = mppi_plan(m, m.initial_state(), zero, cfg, prev=prev)
    np.testing.assert_array_equal(res.nominal[:, 0], [0.2, 0.3, 0.3])
    cold = mppi_plan(m, m.initial_state(), zero, PlannerConfig(horizon=3, noise_set=[[0.0]], warm_start=False),
                     prev=prev)
    np.testing.assert_array_equal(cold.nominal, 0.0)


def test_antithetic_noise_pairs_cancel():
    rng = np.random.default_rng(0)
    eps = _gaussian_noise(rng, (), 7, 5, 2, True)
    np.testing.assert_array_equal(eps[:3] + eps[3:6], 0.0)
    np.testing.assert_array_equal(eps[6], 0.0)


def test_smoothed_noise_keeps_variance_and_sets_lag_correlation():
    eps = _gaussian_noise(np.random.default_rng(1), (), 20_000, 12, 1, False, 0.8)[..., 0]
    assert eps[:, -1].var() == pytest.approx(1.0, abs=0.05)
    corr = np.corrcoef(eps[:, 6], eps[:, 7])[0, 1]
    assert corr == pytest.approx(0.8, abs=0.02)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 1000), st.floats(0.05, 3.0))
def test_plans_stay_inside_action_bounds(seed, sigma):
    w = box_world()
    rng = np.random.default_rng(seed)
    res = mppi_plan(w, np.array([0.2, 0.7, 0.5, -1.0]), lambda s: s[..., 0], PlannerConfig(horizon=6, rollouts=9,
                    noise_sigma=sigma), rng=rng)
    assert np.all(np.abs(res.nominal) <= 1.0)


def test_best_return_dominates_weighted_return():
    w = box_world()
    res = mppi_plan(w, w.initial_state(), lambda s: -np.abs(s[..., 0] - 0.9), PlannerConfig(horizon=10, rollouts=20),
                    rng=np.random.default_rng(0))
    assert res.best_return >= res.weighted_return


def test_same_rng_seed_same_plan():
    w = box_world()
    value = lambda s: np.sin(5 * s[..., 0]) + s[..., 1]  # noqa: E731
    a = mppi_plan(w, w.initial_state(), value, PlannerConfig(horizon=12), rng=np.random.default_rng(3))
    b = mppi_plan(w, w.initial_state(), value, PlannerConfig(horizon=12), rng=np.random.default_rng(3))
    assert a.nominal.tobytes() == b.nominal.tobytes()


@pytest.mark.parametrize("N", [1, 2, 3])
def test_enumerated_target_equals_h_step_backup(N):
    g = random_grid(4, 4, np.random.default_rng(N), obstacle_p=0.2)
    m = g.to_tabular()
    V = np.random.default_rng(10 + N).normal(size=g.n_states)
    cfg = PlannerConfig(noise_set=ACTION_VECTORS, gamma=g.gamma)
    value = lambda s: V[g.index_of(s)]  # noqa: E731
    expect = bellman_H(m, V, N, method="exhaustive")
    states = g.cells.astype(np.float64)
    got = nstep_target(g, states, value, N, cfg)
    np.testing.assert_allclose(got, expect, atol=1e-12)


def test_sampled_target_never_exceeds_exact_backup():
    g = corridor_grid(5, 5)
    V = value_iteration(g.to_tabular())
    value = lambda s: V[g.index_of(s)]  # noqa: E731
    exact = bellman_H(g.to_tabular(), V, 3)
    got = nstep_target(g, g.cells.astype(float), value, 3, PlannerConfig(rollouts=16, noise_sigma=1.0),
                       rng=np.random.default_rng(0))
    assert np.all(got <= exact + 1e-12)


def test_greedy_action_matches_oracle_greedy_values():
    g = corridor_grid(5, 4, gamma=0.9)
    m = g.to_tabular()
    V = value_iteration(m)
    value = lambda s: V[g.index_of(s)]  # noqa: E731
    Q = q_values(m, V)
    rng = np.random.default_rng(0)
    for i in range(g.n_states):
        a = greedy_action(g, g.state_of(i), value, 200, g.gamma, rng)
        nxt, r = g.dynamics(g.state_of(i), a)
        assert r + g.gamma * value(nxt) == pytest.approx(Q[i].max(), abs=1e-12)


def test_greedy_prefers_zero_action_on_ties():
    w = box_world()
    a = greedy_action(w, w.initial_state(), zero, 10, 0.9, np.random.default_rng(0))
    np.testing.assert_array_equal(a, [0.0, 0.0])


def test_bad_value_and_state_raise():
    w = box_world()
    with pytest.raises(PlannerError):
        mppi_plan(w, w.initial_state(), lambda s: np.full(s.shape[:-1], np.nan), PlannerConfig(horizon=2, rollouts=3))
    with pytest.raises(PlannerError):
        mppi_plan(w, np.array([np.nan, 0, 0, 0]), zero, PlannerConfig(horizon=2, rollouts=3))


@pytest.mark.parametrize("kw", [dict(horizon=0), dict(rollouts=0), dict(temperature=0.0), dict(noise_sigma=-1.0),
                                dict(gamma=1.0), dict(noise_smoothing=1.0)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        PlannerConfig(**kw)


def test_simulate_returns_discounting():
    m = DoubleIntegrator()
    acts = np.zeros((1, 3, 1))
    G = simulate_returns(m, np.array([1.0, 0.0]), acts, lambda s: np.full(s.shape[:-1], 10.0), 0.5)
    assert G[0] == pytest.approx(-1 - 0.5 - 0.25 + 0.125 * 10)
