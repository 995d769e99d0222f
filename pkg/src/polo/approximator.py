"""Small tanh MLPs with hand-written reverse-mode gradients and Adam.

Every parameter array may carry leading "stack" axes, so ``K`` networks of
the same shape can be evaluated and trained with one batched matmul. An
unstacked net has weights of shape ``(fan_in, fan_out)``; a stack of ``K``
nets has ``(K, fan_in, fan_out)`` and expects inputs of shape ``(K, B, n_in)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

Params = list  # list of np.ndarray


@dataclass
class DenseNet:
    sizes: tuple[int, ...]
    weights: Params
    biases: Params

    @property
    def stack_shape(self) -> tuple[int, ...]:
        return self.weights[0].shape[:-2]

    @property
    def n_params(self) -> int:
        """Parameters of a single (unstacked) net."""
        return sum((a + 1) * b for a, b in zip(self.sizes[:-1], self.sizes[1:]))

    def member(self, k: int) -> DenseNet:
        """View of stack entry ``k``; writes go through to the stack."""
        return DenseNet(self.sizes, [w[k] for w in self.weights], [b[k] for b in self.biases])

    def copy(self) -> DenseNet:
        return DenseNet(self.sizes, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def params(self) -> Params:
        return [*self.weights, *self.biases]


def net_init(sizes, seed, scale: float = 1.0, stack: tuple[int, ...] = ()) -> DenseNet:
    """Weights ~ U(-scale / sqrt(fan_in), +scale / sqrt(fan_in)), biases zero.

    ``seed`` is an int or a ``np.random.Generator``.
    """
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) < 2 or min(sizes) < 1:
        raise ValueError(f"sizes must list at least an input and an output width, got {sizes}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = scale / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=stack + (fan_in, fan_out)))
        biases.append(np.zeros(stack + (fan_out,)))
    return DenseNet(sizes, weights, biases)


def _activations(net: DenseNet, x: np.ndarray) -> list[np.ndarray]:
    acts = [x]
    last = len(net.weights) - 1
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        z = acts[-1] @ W + b[..., None, :]
        acts.append(z if i == last else np.tanh(z))
    return acts


def net_forward(net: DenseNet, x) -> np.ndarray:
    """Evaluate the net. ``x`` is ``(n_in,)`` or ``(..., B, n_in)``."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != net.sizes[0]:
        raise ValueError(f"input width {x.shape[-1]} != net input width {net.sizes[0]}")
    if x.ndim == 1:
        return _activations(net, x[None, :])[-1][0]
    return _activations(net, x)[-1]


def net_value(net: DenseNet, x) -> np.ndarray:
    """Scalar-output convenience: drops the trailing output axis."""
    return net_forward(net, x)[..., 0]


def sq_loss_and_grads(net: DenseNet, x: np.ndarray, y: np.ndarray, l2: float = 0.0):
    """Mean squared error over the batch axis plus ``l2 * ||theta||^2``.

    ``x``: ``(..., B, n_in)``; ``y``: ``(..., B)``; leading axes match the
    net's stack. Returns ``(loss, grad_weights, grad_biases)`` with ``loss``
    of the stack shape.
    """
    if net.sizes[-1] != 1:
        raise ValueError("squared-loss gradients need a scalar-output net")
    y = np.asarray(y, dtype=np.float64)
    if not np.all(np.isfinite(y)):
        raise ValueError("targets must be finite")
    acts = _activations(net, x)
    err = acts[-1][..., 0] - y
    n = err.shape[-1]
    loss = np.mean(err ** 2, axis=-1)
    delta = (2.0 / n) * err[..., None]
    gw = [None] * len(net.weights)
    gb = [None] * len(net.biases)
    for i in range(len(net.weights) - 1, -1, -1):
        gw[i] = np.swapaxes(acts[i], -1, -2) @ delta
        gb[i] = delta.sum(axis=-2)
        if i:
            delta = (delta @ np.swapaxes(net.weights[i], -1, -2)) * (1.0 - acts[i] ** 2)
    if l2:
        stack_axes = len(net.stack_shape)
        for i, (W, b) in enumerate(zip(net.weights, net.biases)):
            loss = loss + l2 * (np.sum(W ** 2, axis=tuple(range(stack_axes, W.ndim)))
                                + np.sum(b ** 2, axis=tuple(range(stack_axes, b.ndim))))
            gw[i] = gw[i] + 2.0 * l2 * W
            gb[i] = gb[i] + 2.0 * l2 * b
    return loss, gw, gb


def net_grad_sq_loss(net: DenseNet, x, target: float, l2: float = 0.0):
    """``(net(x) - target)^2 + l2 ||theta||^2`` and its gradient for a single input."""
    if not np.isfinite(target):
        raise ValueError(f"target must be finite, got {target}")
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    loss, gw, gb = sq_loss_and_grads(net, x, np.array([target]), l2)
    return float(loss), (gw, gb)


@dataclass
class OptimizerState:
    """Adam moments. ``t`` has the net's stack shape (one counter per member)."""

    m_w: Params
    m_b: Params
    v_w: Params
    v_b: Params
    t: np.ndarray
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def member(self, k: int) -> OptimizerState:
        return OptimizerState([a[k] for a in self.m_w], [a[k] for a in self.m_b],
                              [a[k] for a in self.v_w], [a[k] for a in self.v_b],
                              self.t[k:k + 1].reshape(()) if self.t.ndim else self.t,
                              self.lr, self.beta1, self.beta2, self.eps)


def opt_init(net: DenseNet, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
             eps: float = 1e-8) -> OptimizerState:
    z = lambda ps: [np.zeros_like(p) for p in ps]  # noqa: E731
    return OptimizerState(z(net.weights), z(net.biases), z(net.weights), z(net.biases),
                          np.zeros(net.stack_shape, dtype=np.int64), lr, beta1, beta2, eps)


def opt_step(opt: OptimizerState, net: DenseNet, grads) -> tuple[DenseNet, OptimizerState]:
    """One bias-corrected Adam step, in place. ``grads`` is ``(grad_weights, grad_biases)``."""
    gw, gb = grads
    for p, g in zip([*net.weights, *net.biases], [*gw, *gb]):
        if p.shape != np.shape(g):
            raise ValueError(f"gradient shape {np.shape(g)} does not match parameter shape {p.shape}")
    opt.t[...] += 1
    t = opt.t.astype(np.float64)
    c1 = 1.0 - opt.beta1 ** t
    c2 = 1.0 - opt.beta2 ** t
    for params, grads_, ms, vs in ((net.weights, gw, opt.m_w, opt.v_w), (net.biases, gb, opt.m_b, opt.v_b)):
        for p, g, m, v in zip(params, grads_, ms, vs):
            m *= opt.beta1
            m += (1.0 - opt.beta1) * g
            v *= opt.beta2
            v += (1.0 - opt.beta2) * g * g
            pad = (slice(None),) * t.ndim + (None,) * (p.ndim - t.ndim)
            mhat = m / c1[pad] if t.ndim else m / c1
            vhat = v / c2[pad] if t.ndim else v / c2
            p -= opt.lr * mhat / (np.sqrt(vhat) + opt.eps)
    return net, opt


def net_to_dict(net: DenseNet) -> dict:
    if net.stack_shape:
        raise ValueError("serialize stack members individually")
    flat = []
    for W, b in zip(net.weights, net.biases):
        flat.extend(W.ravel().tolist())
        flat.extend(b.tolist())
    return {"sizes": list(net.sizes), "params": flat}


def net_from_dict(doc: dict) -> DenseNet:
    sizes = tuple(int(s) for s in doc["sizes"])
    flat = np.asarray(doc["params"], dtype=np.float64)
    expected = sum((a + 1) * b for a, b in zip(sizes[:-1], sizes[1:]))
    if flat.size != expected:
        raise ValueError(f"expected {expected} parameters for sizes {sizes}, got {flat.size}")
    weights, biases, i = [], [], 0
    for a, b in zip(sizes[:-1], sizes[1:]):
        weights.append(flat[i:i + a * b].reshape(a, b).copy())
        i += a * b
        biases.append(flat[i:i + b].copy())
        i += b
    return DenseNet(sizes, weights, biases)
