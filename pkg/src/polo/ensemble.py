"""Randomized-prior value ensemble with log-sum-exp optimism.

Member ``k`` predicts ``prior_scale * prior_k(x) + trainable_k(x)`` where the
prior net is frozen at construction. Members are fit to noise-perturbed
targets with an L2 pull of the trainable weights towards zero, and are
aggregated as ``log sum_k exp(kappa * v_k)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .approximator import (DenseNet, OptimizerState, net_from_dict, net_init, net_to_dict, opt_init,
                           opt_step, sq_loss_and_grads)


def logsumexp(z: np.ndarray, axis: int = 0) -> np.ndarray:
    m = np.max(z, axis=axis, keepdims=True)
    return np.squeeze(m, axis=axis) + np.log(np.sum(np.exp(z - m), axis=axis))


@dataclass
class ValueEnsemble:
    prior: DenseNet
    trainable: DenseNet
    opt: OptimizerState
    kappa: float = 0.1
    prior_scale: float = 1.0
    sigma: float = 0.01
    lam: float = 1.0
    normalized: bool = False
    noise_rngs: list = field(default_factory=list)
    features: Callable[[np.ndarray], np.ndarray] | None = None

    @property
    def K(self) -> int:
        return self.prior.stack_shape[0]

    @property
    def l2(self) -> float:
        """Weight of ``||theta||^2`` in the member loss, ``sigma^2 / lambda``."""
        return self.sigma ** 2 / self.lam

    def _x(self, states) -> np.ndarray:
        s = np.asarray(states, dtype=np.float64)
        return self.features(s) if self.features is not None else s

    def member_values(self, states) -> np.ndarray:
        """All member predictions, shape ``(K,) + states.shape[:-1]``."""
        x = self._x(states)
        flat = x.reshape(1, -1, x.shape[-1])
        out = self.prior_scale * _stack_eval(self.prior, flat) + _stack_eval(self.trainable, flat)
        return out.reshape((self.K,) + x.shape[:-1])

    def member_values_per_member(self, states) -> np.ndarray:
        """Member ``k`` evaluated on ``states[k]``; ``states`` has shape ``(K, ..., n)``."""
        x = self._x(states)
        if x.shape[0] != self.K:
            raise ValueError(f"leading axis must equal K={self.K}")
        lead = x.shape[1:-1]
        flat = x.reshape(self.K, -1, x.shape[-1])
        out = self.prior_scale * _stack_eval(self.prior, flat) + _stack_eval(self.trainable, flat)
        return out.reshape((self.K,) + lead)

    def member_predict(self, k: int, states) -> np.ndarray:
        if not 0 <= k < self.K:
            raise IndexError(f"member {k} out of range for K={self.K}")
        x = self._x(states)
        flat = x.reshape(-1, x.shape[-1])
        out = self.prior_scale * _stack_eval(self.prior.member(k), flat) + _stack_eval(self.trainable.member(k), flat)
        return out.reshape(x.shape[:-1]) if x.ndim > 1 else out[0]

    def value(self, states) -> np.ndarray:
        """Optimistic aggregate ``log sum_k exp(kappa v_k)`` (divided by kappa if normalized)."""
        lse = logsumexp(self.kappa * self.member_values(states), axis=0)
        return lse / self.kappa if self.normalized else lse

    def mean_value(self, states) -> np.ndarray:
        return self.member_values(states).mean(axis=0)

    def train_member(self, k: int, states, targets) -> float:
        """One Adam step on trainable net ``k`` towards noise-perturbed targets."""
        if not 0 <= k < self.K:
            raise IndexError(f"member {k} out of range for K={self.K}")
        states = np.asarray(states, dtype=np.float64)
        targets = np.asarray(targets, dtype=np.float64).reshape(-1)
        if targets.size == 0:
            raise ValueError("empty batch")
        if not np.all(np.isfinite(targets)):
            raise ValueError("targets must be finite")
        noisy = targets + self.sigma * self.noise_rngs[k].standard_normal(targets.shape)
        x = self._x(states).reshape(-1, self.prior.sizes[0])
        resid = noisy - self.prior_scale * _stack_eval(self.prior.member(k), x)
        net = self.trainable.member(k)
        loss, gw, gb = sq_loss_and_grads(net, x, resid, self.l2)
        opt_step(self.opt.member(k), net, (gw, gb))
        return float(loss)

    def train_all(self, states, targets) -> np.ndarray:
        """:meth:`train_member` for every member at once.

        ``states``: ``(K, B, n)``; ``targets``: ``(K, B)``. Noise is drawn from
        each member's own stream in member order, so the result matches
        calling :meth:`train_member` for ``k = 0..K-1``.
        """
        targets = np.asarray(targets, dtype=np.float64)
        if targets.shape[0] != self.K or targets.shape[1] == 0:
            raise ValueError("targets must have shape (K, B) with B > 0")
        if not np.all(np.isfinite(targets)):
            raise ValueError("targets must be finite")
        noise = np.stack([self.noise_rngs[k].standard_normal(targets.shape[1]) for k in range(self.K)])
        x = self._x(states)
        resid = targets + self.sigma * noise - self.prior_scale * _stack_eval(self.prior, x)
        loss, gw, gb = sq_loss_and_grads(self.trainable, x, resid, self.l2)
        opt_step(self.opt, self.trainable, (gw, gb))
        return loss

    def to_dict(self) -> dict:
        return {
            "kappa": self.kappa, "prior_scale": self.prior_scale, "sigma": self.sigma, "lam": self.lam,
            "normalized": self.normalized,
            "priors": [net_to_dict(self.prior.member(k)) for k in range(self.K)],
            "trainables": [net_to_dict(self.trainable.member(k)) for k in range(self.K)],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _stack_eval(net: DenseNet, x: np.ndarray) -> np.ndarray:
    acts = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        acts = acts @ w + b[..., None, :]
        if i < last:
            acts = np.tanh(acts)
    return acts[..., 0]


def ensemble_init(K: int, sizes, prior_scale: float = 1.0, seed: int = 0, kappa: float = 0.1,
                  sigma: float = 0.01, lam: float = 1.0, normalized: bool = False, lr: float = 1e-3,
                  features: Callable | None = None, prior_init: float = 1.0) -> ValueEnsemble:
    """Build ``K`` (prior, trainable) pairs from independent seed-derived streams.

    ``prior_init`` is the weight-init scale of the frozen prior nets (larger
    values give sharper, more local random functions); ``prior_scale``
    multiplies their output. Trainable nets start at one tenth of the prior scale.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if kappa <= 0 or lam <= 0 or sigma < 0 or prior_init <= 0:
        raise ValueError("need kappa > 0, lam > 0, sigma >= 0, prior_init > 0")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = ss.spawn(3 * K)
    priors = [net_init(sizes, np.random.default_rng(children[3 * k]), prior_init) for k in range(K)]
    trains = [net_init(sizes, np.random.default_rng(children[3 * k + 1]), 0.1 * prior_scale) for k in range(K)]
    prior = _stack(priors)
    trainable = _stack(trains)
    return ValueEnsemble(prior, trainable, opt_init(trainable, lr=lr), kappa, prior_scale, sigma, lam,
                         normalized, [np.random.default_rng(children[3 * k + 2]) for k in range(K)], features)


def _stack(nets: list[DenseNet]) -> DenseNet:
    return DenseNet(nets[0].sizes, [np.stack(ws) for ws in zip(*(n.weights for n in nets))],
                    [np.stack(bs) for bs in zip(*(n.biases for n in nets))])


def ensemble_from_dict(doc: dict, seed: int = 0, features: Callable | None = None) -> ValueEnsemble:
    """Restore a checkpoint. Optimizer moments and noise streams restart fresh."""
    prior = _stack([net_from_dict(d) for d in doc["priors"]])
    trainable = _stack([net_from_dict(d) for d in doc["trainables"]])
    K = prior.stack_shape[0]
    children = np.random.SeedSequence(seed).spawn(K)
    return ValueEnsemble(prior, trainable, opt_init(trainable), doc["kappa"], doc["prior_scale"], doc["sigma"],
                         doc["lam"], doc.get("normalized", False), [np.random.default_rng(c) for c in children],
                         features)
