"""MPPI trajectory optimisation with a terminal value, N-step targets, greedy baseline.

All routines are batched: start states may carry any leading shape ``lead``
and the value function is called on arrays of shape ``lead + (R, n)``. That
lets one call compute targets for a whole minibatch and every ensemble
member at once.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .core import EnvModel, FloatArray, ModelFault

ValueFn = Callable[[np.ndarray], np.ndarray]


class PlannerError(RuntimeError):
    pass


@dataclass(frozen=True)
class PlannerConfig:
    """MPPI settings. Defaults are the humanoid values (H=64, R=120, sigma=0.2, tau=1.25, gamma=0.99).

    ``noise_set`` replaces Gaussian sampling with exhaustive enumeration of
    every length-H sequence of the given perturbation vectors (rows of an
    ``(M, action_dim)`` array); ``rollouts`` is then ignored. With
    ``antithetic`` the Gaussian perturbations come in ``(+eps, -eps)`` pairs
    (plus one zero perturbation when ``rollouts`` is odd), so a flat objective
    leaves the nominal exactly where it was. ``noise_smoothing`` in ``[0, 1)``
    makes each perturbation sequence an AR(1) process along the horizon
    (``e_t = c e_{t-1} + sqrt(1 - c^2) n_t``) with the same per-step variance;
    0 gives independent steps.
    """

    horizon: int = 64
    rollouts: int = 120
    noise_sigma: float | tuple = 0.2
    temperature: float = 1.25
    gamma: float = 0.99
    warm_start: bool = True
    iterations: int = 1
    noise_set: tuple | None = None
    antithetic: bool = True
    noise_smoothing: float = 0.0

    def __post_init__(self):
        if self.horizon < 1 or self.rollouts < 1 or self.iterations < 1:
            raise ValueError("horizon, rollouts and iterations must be positive")
        if np.any(np.asarray(self.noise_sigma) <= 0) or self.temperature <= 0:
            raise ValueError("noise_sigma and temperature must be positive")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0.0 <= self.noise_smoothing < 1.0:
            raise ValueError("noise_smoothing must lie in [0, 1)")


@dataclass
class PlanResult:
    nominal: FloatArray
    action: FloatArray
    best_return: float | FloatArray
    weighted_return: float | FloatArray


def _enumerated_noise(noise_set, H: int) -> np.ndarray:
    vecs = np.asarray(noise_set, dtype=np.float64)
    idx = np.array(list(itertools.product(range(len(vecs)), repeat=H)), dtype=np.int64).reshape(-1, H)
    return vecs[idx]  # (M^H, H, m)


def _smooth(n: np.ndarray, c: float) -> np.ndarray:
    if c == 0.0:
        return n
    out = n.copy()
    scale = np.sqrt(1.0 - c * c)
    for t in range(1, n.shape[-2]):
        out[..., t, :] = c * out[..., t - 1, :] + scale * n[..., t, :]
    return out


def _gaussian_noise(rng, lead, R, H, m, antithetic, smoothing=0.0):
    if not antithetic:
        return _smooth(rng.standard_normal(lead + (R, H, m)), smoothing)
    half = _smooth(rng.standard_normal(lead + (R // 2, H, m)), smoothing)
    parts = [half, -half]
    if R % 2:
        parts.append(np.zeros(lead + (1, H, m)))
    return np.concatenate(parts, axis=-3)


def simulate_returns(model: EnvModel, states: FloatArray, actions: FloatArray, value: ValueFn,
                     gamma: float) -> FloatArray:
    """Discounted return of each action sequence plus ``gamma^H value(s_H)``.

    ``states``: ``lead + (n,)``; ``actions``: ``lead + (R, H, m)``, already clamped.
    """
    R, H = actions.shape[-3], actions.shape[-2]
    s = np.broadcast_to(states[..., None, :], states.shape[:-1] + (R, states.shape[-1]))
    ret = np.zeros(s.shape[:-1])
    disc = 1.0
    for t in range(H):
        s, r = model.dynamics(s, actions[..., t, :])
        ret += disc * r
        disc *= gamma
    if not np.all(np.isfinite(s)):
        raise ModelFault("model produced a non-finite state during a rollout")
    v = np.asarray(value(s), dtype=np.float64)
    if not np.all(np.isfinite(v)):
        bad = np.argwhere(~np.isfinite(v))[0]
        raise PlannerError(f"value function returned {v[tuple(bad)]} at state {s[tuple(bad)]}")
    return ret + disc * v


def mppi_batch(model: EnvModel, states: FloatArray, value: ValueFn, cfg: PlannerConfig,
               nominal: FloatArray | None, rng: np.random.Generator) -> PlanResult:
    """MPPI from every start state in ``states`` (shape ``lead + (n,)``)."""
    states = np.asarray(states, dtype=np.float64)
    lead = states.shape[:-1]
    H, m = cfg.horizon, model.action_dim
    lo, hi = model.action_low, model.action_high
    nom = np.zeros(lead + (H, m)) if nominal is None else np.clip(np.broadcast_to(nominal, lead + (H, m)), lo, hi)
    sigma = np.broadcast_to(np.asarray(cfg.noise_sigma, dtype=np.float64), (m,))
    fixed = None if cfg.noise_set is None else _enumerated_noise(cfg.noise_set, H)
    best = None
    for _ in range(cfg.iterations):
        if fixed is None:
            eps = _gaussian_noise(rng, lead, cfg.rollouts, H, m, cfg.antithetic, cfg.noise_smoothing) * sigma
        else:
            eps = np.broadcast_to(fixed, lead + fixed.shape)
        acts = np.clip(nom[..., None, :, :] + eps, lo, hi)
        cand = np.concatenate([nom[..., None, :, :], acts], axis=-3)
        G = simulate_returns(model, states, cand, value, cfg.gamma)
        g_nom, G = G[..., 0], G[..., 1:]
        it_best = np.maximum(g_nom, G.max(axis=-1))
        best = it_best if best is None else np.maximum(best, it_best)
        z = (G - G.max(axis=-1, keepdims=True)) / cfg.temperature
        w = np.exp(z)
        w /= w.sum(axis=-1, keepdims=True)
        weighted = np.sum(w * G, axis=-1)
        nom = np.clip(nom + np.einsum("...r,...rhm->...hm", w, eps), lo, hi)
    return PlanResult(nom, nom[..., 0, :].copy(), best, weighted)


def mppi_plan(model: EnvModel, s, value: ValueFn, cfg: PlannerConfig, prev: FloatArray | None = None,
              rng: np.random.Generator | None = None) -> PlanResult:
    """One receding-horizon planning step from a single state.

    With ``cfg.warm_start`` the previous nominal is shifted one step left and
    its last action repeated; otherwise planning starts from zeros.
    """
    rng = np.random.default_rng() if rng is None else rng
    s = np.asarray(s, dtype=np.float64)
    if not np.all(np.isfinite(s)):
        raise PlannerError(f"start state is not finite: {s}")
    nominal = None
    if cfg.warm_start and prev is not None:
        prev = np.asarray(prev, dtype=np.float64)
        nominal = np.concatenate([prev[1:], prev[-1:]], axis=0)
    res = mppi_batch(model, s, value, cfg, nominal, rng)
    return PlanResult(res.nominal, res.action, float(res.best_return), float(res.weighted_return))


def nstep_target(model: EnvModel, s, member_value: ValueFn, N: int, cfg: PlannerConfig,
                 rng: np.random.Generator | None = None) -> float | FloatArray:
    """Best sampled N-step return with terminal ``gamma^N member_value(s_N)``.

    ``s`` may be a batch of states (leading axes); the return then has that shape.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    res = mppi_batch(model, np.asarray(s, dtype=np.float64), member_value, replace(cfg, horizon=N), None, rng)
    best = res.best_return
    return float(best) if np.ndim(best) == 0 else best


def ensemble_nstep_targets(model: EnvModel, ens, states: FloatArray, N: int, cfg: PlannerConfig,
                           rng: np.random.Generator) -> FloatArray:
    """Targets for every member on every state; member ``k`` bootstraps with its own value.

    Returns shape ``(K, B)`` for ``states`` of shape ``(B, n)``.
    """
    states = np.asarray(states, dtype=np.float64)
    stacked = np.broadcast_to(states, (ens.K,) + states.shape)
    return nstep_target(model, stacked, ens.member_values_per_member, N, cfg, rng)


def greedy_action(model: EnvModel, s, value: ValueFn, action_samples: int, gamma: float,
                  rng: np.random.Generator | None = None) -> FloatArray:
    """Best of the zero action and ``action_samples`` uniform actions by ``r + gamma V(s')``.

    Ties go to the lowest candidate index (the zero action first).
    """
    rng = np.random.default_rng() if rng is None else rng
    s = np.asarray(s, dtype=np.float64)
    cands = np.concatenate([np.zeros((1, model.action_dim)),
                            rng.uniform(model.action_low, model.action_high, size=(action_samples, model.action_dim))])
    nxt, r = model.dynamics(np.broadcast_to(s, (len(cands), s.size)), cands)
    score = r + gamma * np.asarray(value(nxt), dtype=np.float64)
    return cands[int(np.argmax(score))]
