from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polo.core import ModelFault, affine_features, discounted_return, rollout, step
from polo.envs import PendulumWorld, box_world


class _Linear:
    """1-D double integrator with reward -x^2; used as a hand-checkable model."""

    state_dim = 2
    action_dim = 1
    action_low = -np.ones(1)
    action_high = np.ones(1)
    gamma = 0.9
    feature_dim = 2

    def __init__(self, blow_up=False):
        self.blow_up = blow_up

    def initial_state(self, rng=None):
        return np.zeros(2)

    def features(self, s):
        return s

    def dynamics(self, s, a):
        x, v = s[..., 0], s[..., 1]
        v = v + a[..., 0]
        x = x + v
        nxt = np.stack([x, v], axis=-1)
        if self.blow_up:
            nxt = nxt + np.inf
        return nxt, -x ** 2


def test_step_clamps_out_of_range_action():
    m = _Linear()
    s1, r = step(m, [0.0, 0.0], [5.0])
    np.testing.assert_array_equal(s1, [1.0, 1.0])
    assert r == -1.0


def test_step_rejects_bad_shapes_and_nans():
    m = _Linear()
    with pytest.raises(ValueError):
        step(m, [0.0], [0.0])
    with pytest.raises(ValueError):
        step(m, [0.0, 0.0], [np.nan])
    with pytest.raises(ValueError):
        step(m, [0.0, 0.0], [0.0, 0.0])


def test_step_reports_model_fault():
    with pytest.raises(ModelFault):
        step(_Linear(blow_up=True), [1.0, 0.0], [0.0])


def test_discounted_return_small_case():
    assert discounted_return([1.0, 1.0, 1.0], 0.5) == pytest.approx(1.75)
    assert discounted_return([1.0, 2.0], 0.5, terminal_value=4.0) == pytest.approx(1.0 + 1.0 + 1.0)
    assert discounted_return([], 0.9, terminal_value=3.0) == 3.0


def test_discounted_return_validates():
    with pytest.raises(ValueError):
        discounted_return([1.0], 1.0)
    with pytest.raises(ValueError):
        discounted_return([np.inf], 0.5)


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=30), st.floats(0.0, 0.99))
def test_discounted_return_matches_backward_recursion(rewards, gamma):
    g = 0.0
    for r in reversed(rewards):
        g = r + gamma * g
    assert discounted_return(rewards, gamma) == pytest.approx(g, abs=1e-9)


def test_rollout_matches_repeated_step():
    world = box_world()
    rng = np.random.default_rng(3)
    acts = rng.uniform(-2, 2, size=(25, 2))
    traj = rollout(world, world.initial_state(), acts)
    s = world.initial_state()
    for t, a in enumerate(acts):
        s, r = step(world, s, a)
        np.testing.assert_array_equal(traj.states[t + 1], s)
        assert traj.rewards[t] == r
    assert traj.horizon == 25
    assert np.all(np.abs(traj.actions) <= 1.0)


def test_rollout_is_deterministic():
    pend = PendulumWorld()
    acts = np.linspace(-1, 1, 40)[:, None]
    a = rollout(pend, pend.initial_state(), acts)
    b = rollout(pend, pend.initial_state(), acts)
    assert a.states.tobytes() == b.states.tobytes()


@given(st.floats(-5, 5), st.floats(-5, 5))
def test_affine_features_maps_interval_ends(lo, width):
    width = abs(width) + 0.1
    f = affine_features(np.array([lo, lo + width]), np.array(lo), np.array(lo + width))
    np.testing.assert_allclose(f, [-1.0, 1.0], atol=1e-12)
