from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polo.approximator import (net_forward, net_from_dict, net_grad_sq_loss, net_init, net_to_dict, net_value,
                               opt_init, opt_step, sq_loss_and_grads)


def _fd_grads(net, x, y, l2, h=1e-6):
    """Central finite differences of the batch loss over every parameter."""
    out = []
    for p in net.params():
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            p[i] = old + h
            up = float(sq_loss_and_grads(net, x, y, l2)[0])
            p[i] = old - h
            down = float(sq_loss_and_grads(net, x, y, l2)[0])
            p[i] = old
            g[i] = (up - down) / (2 * h)
        out.append(g)
    return out


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.lists(st.integers(1, 6), min_size=1, max_size=3), st.floats(0.0, 0.1))
def test_gradients_match_finite_differences(seed, hidden, l2):
    rng = np.random.default_rng(seed)
    net = net_init((3, *hidden, 1), rng, scale=1.5)
    for b in net.biases:
        b[...] = rng.normal(0, 0.3, b.shape)
    x = rng.normal(size=(5, 3))
    y = rng.normal(size=5)
    _, gw, gb = sq_loss_and_grads(net, x, y, l2)
    for a, n in zip([*gw, *gb], _fd_grads(net, x, y, l2)):
        np.testing.assert_allclose(a, n, rtol=1e-5, atol=1e-7)


def test_single_input_gradient_helper():
    net = net_init((2, 4, 1), 0)
    loss, (gw, gb) = net_grad_sq_loss(net, [0.3, -0.2], 1.5)
    ref_loss, rw, rb = sq_loss_and_grads(net, np.array([[0.3, -0.2]]), np.array([1.5]))
    assert loss == pytest.approx(float(ref_loss))
    for a, b in zip(gw + gb, rw + rb):
        np.testing.assert_array_equal(a, b)
    with pytest.raises(ValueError):
        net_grad_sq_loss(net, [0.3, -0.2], np.nan)


def test_forward_shapes_and_width_check():
    net = net_init((3, 5, 2), 1)
    assert net_forward(net, np.zeros(3)).shape == (2,)
    assert net_forward(net, np.zeros((4, 7, 3))).shape == (4, 7, 2)
    with pytest.raises(ValueError):
        net_forward(net, np.zeros(4))
    with pytest.raises(ValueError):
        net_init((3,), 0)


def test_init_bounds_and_zero_bias():
    net = net_init((10, 20, 1), 7, scale=2.0)
    assert np.abs(net.weights[0]).max() <= 2.0 / np.sqrt(10)
    assert all(np.all(b == 0) for b in net.biases)


def test_stacked_nets_match_members():
    rng = np.random.default_rng(3)
    stack = net_init((2, 6, 1), rng, stack=(4,))
    x = rng.normal(size=(4, 9, 2))
    y = rng.normal(size=(4, 9))
    loss, gw, gb = sq_loss_and_grads(stack, x, y, 0.01)
    out = net_value(stack, x)
    for k in range(4):
        m = stack.member(k)
        np.testing.assert_allclose(out[k], net_value(m, x[k]), rtol=1e-12)
        lk, wk, bk = sq_loss_and_grads(m, x[k], y[k], 0.01)
        assert loss[k] == pytest.approx(lk, rel=1e-12)
        for a, b in zip(wk + bk, [g[k] for g in gw] + [g[k] for g in gb]):
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)


def test_first_adam_step_moves_each_parameter_by_lr():
    net = net_init((2, 3, 1), 0)
    before = [p.copy() for p in net.params()]
    opt = opt_init(net, lr=0.01)
    _, gw, gb = sq_loss_and_grads(net, np.array([[0.5, -1.0]]), np.array([2.0]))
    opt_step(opt, net, (gw, gb))
    for p0, p1, g in zip(before, net.params(), gw + gb):
        step = np.abs(p1 - p0)
        mask = np.abs(g) > 1e-6
        np.testing.assert_allclose(step[mask], 0.01, rtol=1e-4)
    assert int(opt.t) == 1


def test_adam_reduces_regression_loss():
    rng = np.random.default_rng(0)
    net = net_init((1, 16, 1), rng)
    x = np.linspace(-1, 1, 32)[:, None]
    y = np.sin(2 * x[:, 0])
    opt = opt_init(net, lr=0.01)
    first = float(sq_loss_and_grads(net, x, y)[0])
    for _ in range(500):
        _, gw, gb = sq_loss_and_grads(net, x, y)
        opt_step(opt, net, (gw, gb))
    assert float(sq_loss_and_grads(net, x, y)[0]) < 0.05 * first


def test_opt_step_rejects_mismatched_gradients():
    net = net_init((2, 3, 1), 0)
    opt = opt_init(net)
    with pytest.raises(ValueError):
        opt_step(opt, net, ([np.zeros((3, 3)), np.zeros((3, 1))], [np.zeros(3), np.zeros(1)]))


def test_serialisation_roundtrip():
    net = net_init((3, 4, 1), 5)
    back = net_from_dict(net_to_dict(net))
    x = np.random.default_rng(0).normal(size=(6, 3))
    assert net_forward(back, x).tobytes() == net_forward(net, x).tobytes()
    doc = net_to_dict(net)
    doc["params"] = doc["params"][:-1]
    with pytest.raises(ValueError):
        net_from_dict(doc)
