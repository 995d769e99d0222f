"""MDP primitives shared by every other module.

States and actions are plain ``float64`` numpy vectors. Environment models
are deterministic and stateless: the current state is always passed in, so
any visited state can be replayed through the model.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np
from numpy.typing import ArrayLike, NDArray

FloatArray = NDArray[np.float64]


class ModelFault(RuntimeError):
    """An environment model produced a non-finite state or reward."""


@runtime_checkable
class EnvModel(Protocol):
    """Deterministic dynamics + reward model.

    ``dynamics`` is vectorised over any number of leading axes and assumes
    actions are already inside ``[action_low, action_high]``. Use :func:`step`
    for a checked single transition.
    """

    state_dim: int
    action_dim: int
    action_low: FloatArray
    action_high: FloatArray
    gamma: float

    def dynamics(self, states: FloatArray, actions: FloatArray) -> tuple[FloatArray, FloatArray]:
        ...

    def initial_state(self, rng: np.random.Generator | None = None) -> FloatArray:
        ...

    @property
    def feature_dim(self) -> int:
        ...

    def features(self, states: FloatArray) -> FloatArray:
        ...


def as_state(model: EnvModel, s: ArrayLike) -> FloatArray:
    s = np.asarray(s, dtype=np.float64)
    if s.shape != (model.state_dim,):
        raise ValueError(f"state has shape {s.shape}, model expects ({model.state_dim},)")
    if not np.all(np.isfinite(s)):
        raise ValueError(f"state contains non-finite entries: {s}")
    return s


def clamp_action(model: EnvModel, a: ArrayLike) -> FloatArray:
    """Clip an action (or a stack of actions) to the model's bounds."""
    return np.clip(np.asarray(a, dtype=np.float64), model.action_low, model.action_high)


def step(model: EnvModel, s: ArrayLike, a: ArrayLike) -> tuple[FloatArray, float]:
    """One checked transition. Out-of-bounds actions are clamped silently."""
    s = as_state(model, s)
    a = np.asarray(a, dtype=np.float64)
    if a.shape != (model.action_dim,):
        raise ValueError(f"action has shape {a.shape}, model expects ({model.action_dim},)")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"action contains non-finite entries: {a}")
    next_s, r = model.dynamics(s, clamp_action(model, a))
    next_s = np.asarray(next_s, dtype=np.float64)
    bad = np.flatnonzero(~np.isfinite(next_s))
    if bad.size:
        raise ModelFault(f"next state entry {int(bad[0])} is {next_s[bad[0]]} for s={s}, a={a}")
    r = float(r)
    if not np.isfinite(r):
        raise ModelFault(f"reward is {r} for s={s}, a={a}")
    return next_s, r


def discounted_return(rewards: ArrayLike, gamma: float, terminal_value: float = 0.0) -> float:
    """``sum_t gamma**t * r_t + gamma**H * terminal_value``."""
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    r = np.asarray(rewards, dtype=np.float64).reshape(-1)
    if not (np.all(np.isfinite(r)) and np.isfinite(terminal_value)):
        raise ValueError("rewards and terminal_value must be finite")
    disc = gamma ** np.arange(r.size)
    return float(disc @ r + gamma ** r.size * terminal_value)


@dataclass
class Trajectory:
    """States ``s_0..s_H``, actions ``a_0..a_{H-1}`` and rewards under a model."""

    states: FloatArray
    actions: FloatArray
    rewards: FloatArray

    @property
    def horizon(self) -> int:
        return len(self.actions)


def rollout(model: EnvModel, s: ArrayLike, actions: ArrayLike) -> Trajectory:
    """Simulate an open-loop action sequence from ``s`` (actions clamped)."""
    s = as_state(model, s)
    acts = clamp_action(model, np.asarray(actions, dtype=np.float64).reshape(-1, model.action_dim))
    states = [s]
    rewards = []
    for a in acts:
        s, r = step(model, s, a)
        states.append(s)
        rewards.append(r)
    return Trajectory(np.array(states), acts, np.array(rewards, dtype=np.float64))


def affine_features(states: FloatArray, low: FloatArray, high: FloatArray) -> FloatArray:
    """Scale each state dimension from ``[low, high]`` to ``[-1, 1]``."""
    return 2.0 * (states - low) / (high - low) - 1.0
