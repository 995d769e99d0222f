from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import FloatArray


def wrap_angle(theta):
    """Map angles to (-pi, pi]."""
    out = np.mod(theta + np.pi, 2 * np.pi) - np.pi
    return np.where(out == -np.pi, np.pi, out)


@dataclass
class PendulumWorld:
    """Torque-limited pendulum; ``theta = 0`` is upright, ``theta = pi`` hangs down.

    The torque bound is below ``m * g * l`` so swinging up takes several
    pumps. ``reward="sparse"`` pays ``bonus`` while ``|theta| < upright_angle``
    and nothing otherwise; ``reward="dense"`` pays ``-(theta^2 + 0.1 thetadot^2)``.
    """

    mass: float = 1.0
    length: float = 1.0
    gravity: float = 9.81
    dt: float = 0.05
    max_torque: float = 4.0
    max_speed: float = 8.0
    reward: str = "sparse"
    upright_angle: float = 0.3
    bonus: float = 1.0
    gamma: float = 0.99

    state_dim = 2
    action_dim = 1

    def __post_init__(self):
        if self.reward not in ("sparse", "dense"):
            raise ValueError(f"unknown pendulum reward {self.reward!r}")
        self.action_low = -np.ones(1)
        self.action_high = np.ones(1)

    def initial_state(self, rng=None) -> FloatArray:
        return np.array([np.pi, 0.0])

    @property
    def feature_dim(self) -> int:
        return 3

    def features(self, states: FloatArray) -> FloatArray:
        th, thd = states[..., 0], states[..., 1]
        return np.stack([np.cos(th), np.sin(th), thd / self.max_speed], axis=-1)

    def upright(self, states: FloatArray):
        return np.abs(wrap_angle(states[..., 0])) < self.upright_angle

    def dynamics(self, states: FloatArray, actions: FloatArray) -> tuple[FloatArray, FloatArray]:
        states = np.asarray(states, dtype=np.float64)
        th, thd = states[..., 0], states[..., 1]
        u = np.asarray(actions, dtype=np.float64)[..., 0]
        ml2 = self.mass * self.length ** 2
        acc = (self.gravity / self.length) * np.sin(th) + self.max_torque * u / ml2
        thd = np.clip(thd + self.dt * acc, -self.max_speed, self.max_speed)
        th = wrap_angle(th + self.dt * thd)
        nxt = np.stack([th, thd], axis=-1)
        if self.reward == "sparse":
            r = np.where(np.abs(th) < self.upright_angle, self.bonus, 0.0)
        else:
            r = -(th ** 2 + 0.1 * thd ** 2)
        return nxt, r

    def energy(self, states: FloatArray):
        """Mechanical energy with zero at the hanging rest position."""
        th, thd = states[..., 0], states[..., 1]
        return 0.5 * self.mass * self.length ** 2 * thd ** 2 + self.mass * self.gravity * self.length * (1 + np.cos(th))
