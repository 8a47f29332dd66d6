"""Layer backward passes and the Adam/cosine optimizer."""

import math

import numpy as np
import pytest

from evimat.nn import (
    AdamCosine,
    Conv1x1,
    Conv3x3,
    Dense,
    ReLU,
    Sequential,
    assign_params,
    flatten_params,
)


def numeric_grad(f, x, h=1e-6):
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        i = it.multi_index
        x[i] += h
        hi = f()
        x[i] -= 2 * h
        lo = f()
        x[i] += h
        g[i] = (hi - lo) / (2 * h)
        it.iternext()
    return g


@pytest.mark.parametrize("layer_fn,in_shape", [
    (lambda rng: Dense(5, 3, rng), (4, 5)),
    (lambda rng: Conv3x3(2, 3, rng), (2, 2, 6, 6)),
    (lambda rng: Conv1x1(3, 2, rng), (2, 3, 4, 4)),
])
def test_layer_param_gradients(layer_fn, in_shape):
    rng = np.random.default_rng(0)
    layer = layer_fn(rng)
    x = rng.normal(size=in_shape)
    target = rng.normal(size=layer.forward(x).shape)

    def loss():
        return 0.5 * float(np.sum((layer.forward(x) - target) ** 2))

    for g in layer.grads():
        g[...] = 0.0
    out = layer.forward(x)
    dx = layer.backward(out - target)

    for p, g in zip(layer.params(), layer.grads()):
        num = numeric_grad(loss, p)
        np.testing.assert_allclose(g, num, rtol=1e-5, atol=1e-7)

    # input gradient
    def loss_x():
        return 0.5 * float(np.sum((layer.forward(x) - target) ** 2))

    num_dx = numeric_grad(loss_x, x)
    np.testing.assert_allclose(dx, num_dx, rtol=1e-5, atol=1e-7)


def test_relu_backward():
    r = ReLU()
    x = np.array([[-1.0, 0.0, 2.0]])
    out = r.forward(x)
    np.testing.assert_array_equal(out, [[0.0, 0.0, 2.0]])
    np.testing.assert_array_equal(r.backward(np.ones_like(x)), [[0.0, 0.0, 1.0]])


def test_sequential_chain_gradient():
    rng = np.random.default_rng(1)
    net = Sequential([Dense(3, 8, rng), ReLU(), Dense(8, 2, rng)])
    x = rng.normal(size=(5, 3))
    target = rng.normal(size=(5, 2))

    net.zero_grads()
    out = net.forward(x)
    net.backward(out - target)
    analytic = flatten_params(net.grads()).copy()

    flat0 = flatten_params(net.params()).copy()

    def loss_of(flat):
        assign_params(net.params(), flat)
        o = net.forward(x)
        return 0.5 * float(np.sum((o - target) ** 2))

    h = 1e-6
    for i in np.random.default_rng(2).choice(flat0.size, 20, replace=False):
        fp = flat0.copy()
        fp[i] += h
        fm = flat0.copy()
        fm[i] -= h
        fd = (loss_of(fp) - loss_of(fm)) / (2 * h)
        assert analytic[i] == pytest.approx(fd, rel=1e-5, abs=1e-8)


class TestAdamCosine:
    def test_zero_gradients_no_motion(self):
        p = np.array([1.0, -2.0])
        opt = AdamCosine([p], lr0=0.1, total_steps=10)
        opt.step([np.zeros_like(p)], 0)
        np.testing.assert_array_equal(p, [1.0, -2.0])

    def test_cosine_endpoint(self):
        opt = AdamCosine([np.zeros(1)], lr0=0.5, total_steps=100)
        assert opt.lr_at(100) == pytest.approx(0.0, abs=1e-17)
        assert opt.lr_at(0) == 0.5
        assert opt.lr_at(50) == pytest.approx(0.25)

    def test_quadratic_convergence(self):
        # minimize (x - 2)^2 within 1e-4 in 500 steps
        p = np.array([0.0])
        steps = 500
        opt = AdamCosine([p], lr0=0.05, total_steps=steps)
        for t in range(steps):
            g = 2.0 * (p - 2.0)
            opt.step([g], t)
        assert abs(float(p[0]) - 2.0) < 1e-4


def test_flatten_assign_roundtrip():
    rng = np.random.default_rng(3)
    net = Sequential([Dense(2, 3, rng), ReLU(), Dense(3, 1, rng)])
    flat = flatten_params(net.params()).copy()
    assign_params(net.params(), flat * 2.0)
    np.testing.assert_array_equal(flatten_params(net.params()), flat * 2.0)
    with pytest.raises(ValueError):
        assign_params(net.params(), flat[:-1])
