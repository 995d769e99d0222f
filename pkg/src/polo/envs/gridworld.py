"""Deterministic gridworlds with an exact tabular export.

The continuous action ``a in [-1, 1]^2`` is decoded to one of five moves:
``stay`` when ``max(|a|) < 0.5``, otherwise one cell along the dominant axis
(x wins ties). :data:`ACTION_VECTORS` holds a canonical continuous action for
each tabular action index, in the order up, down, left, right, stay.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import FloatArray, affine_features
from ..oracle import TabularMDP

ACTIONS = ("up", "down", "left", "right", "stay")
ACTION_VECTORS = np.array([[0.0, 1.0], [0.0, -1.0], [-1.0, 0.0], [1.0, 0.0], [0.0, 0.0]])
_MOVES = np.array([[0, 1], [0, -1], [-1, 0], [1, 0], [0, 0]])


def decode_actions(actions: FloatArray) -> np.ndarray:
    """Continuous actions -> tabular action indices."""
    ax, ay = actions[..., 0], actions[..., 1]
    big = np.maximum(np.abs(ax), np.abs(ay)) >= 0.5
    along_x = np.abs(ax) >= np.abs(ay)
    idx = np.where(along_x, np.where(ax > 0, 3, 2), np.where(ay > 0, 0, 1))
    return np.where(big, idx, 4)


@dataclass
class GridWorld:
    """``width x height`` cells; state is the cell ``(x, y)`` stored as floats.

    ``rewards[y, x]`` is paid for any action taken in cell ``(x, y)``. Moves
    off the grid or into an obstacle leave the agent in place. Absorbing
    cells self-loop under every action.
    """

    width: int
    height: int
    obstacles: np.ndarray | None = None
    rewards: np.ndarray | None = None
    absorbing: np.ndarray | None = None
    gamma: float = 0.9
    start: tuple[int, int] | None = None

    state_dim = 2
    action_dim = 2

    def __post_init__(self):
        shape = (self.height, self.width)
        self.obstacles = np.zeros(shape, bool) if self.obstacles is None else np.asarray(self.obstacles, bool)
        self.rewards = -np.ones(shape) if self.rewards is None else np.asarray(self.rewards, np.float64)
        self.absorbing = np.zeros(shape, bool) if self.absorbing is None else np.asarray(self.absorbing, bool)
        for name in ("obstacles", "rewards", "absorbing"):
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} must have shape {shape}")
        self.index = np.full(shape, -1, dtype=np.int64)
        free = np.argwhere(~self.obstacles)  # row-major (y, x)
        self.index[free[:, 0], free[:, 1]] = np.arange(len(free))
        self.cells = free[:, ::-1].copy()  # (x, y) per state index
        if len(free) == 0:
            raise ValueError("grid has no free cells")
        self.action_low = -np.ones(2)
        self.action_high = np.ones(2)

    @property
    def n_states(self) -> int:
        return len(self.cells)

    def state_of(self, index: int) -> FloatArray:
        return self.cells[index].astype(np.float64)

    def index_of(self, states: FloatArray) -> np.ndarray:
        xy = np.rint(states).astype(np.int64)
        return self.index[xy[..., 1], xy[..., 0]]

    def initial_state(self, rng=None) -> FloatArray:
        if self.start is not None:
            return np.array(self.start, dtype=np.float64)
        candidates = np.flatnonzero(~self.absorbing[self.cells[:, 1], self.cells[:, 0]])
        if rng is None:
            return self.state_of(int(candidates[0]))
        return self.state_of(int(rng.choice(candidates)))

    @property
    def feature_dim(self) -> int:
        return 2

    def features(self, states: FloatArray) -> FloatArray:
        high = np.array([max(self.width - 1, 1), max(self.height - 1, 1)], dtype=np.float64)
        return affine_features(states, np.zeros(2), high)

    def _move(self, x, y, a_idx):
        stay = self.absorbing[y, x]
        nx = x + _MOVES[a_idx, 0]
        ny = y + _MOVES[a_idx, 1]
        inside = (nx >= 0) & (nx < self.width) & (ny >= 0) & (ny < self.height)
        nxc = np.clip(nx, 0, self.width - 1)
        nyc = np.clip(ny, 0, self.height - 1)
        ok = inside & ~self.obstacles[nyc, nxc] & ~stay
        return np.where(ok, nxc, x), np.where(ok, nyc, y)

    def dynamics(self, states: FloatArray, actions: FloatArray) -> tuple[FloatArray, FloatArray]:
        xy = np.rint(np.asarray(states)).astype(np.int64)
        x, y = xy[..., 0], xy[..., 1]
        a_idx = decode_actions(np.asarray(actions, dtype=np.float64))
        x, y = np.broadcast_arrays(x, y, a_idx)[:2]
        r = self.rewards[y, x]
        nx, ny = self._move(x, y, np.broadcast_to(a_idx, x.shape))
        return np.stack([nx, ny], axis=-1).astype(np.float64), r.astype(np.float64)

    def to_tabular(self) -> TabularMDP:
        return gridworld_to_tabular(self)


def gridworld_to_tabular(g: GridWorld) -> TabularMDP:
    x = np.repeat(g.cells[:, 0:1], len(ACTIONS), axis=1)
    y = np.repeat(g.cells[:, 1:2], len(ACTIONS), axis=1)
    a = np.broadcast_to(np.arange(len(ACTIONS)), x.shape)
    nx, ny = g._move(x, y, a)
    return TabularMDP(next_state=g.index[ny, nx], reward=g.rewards[y, x].astype(np.float64), gamma=g.gamma)


def corridor_grid(width: int = 8, height: int = 8, goal: tuple[int, int] | None = None,
                  gamma: float = 0.9, obstacles: np.ndarray | None = None) -> GridWorld:
    """Unit step cost everywhere except an absorbing, zero-cost goal cell."""
    goal = (width - 1, height - 1) if goal is None else goal
    rewards = -np.ones((height, width))
    rewards[goal[1], goal[0]] = 0.0
    absorbing = np.zeros((height, width), bool)
    absorbing[goal[1], goal[0]] = True
    return GridWorld(width, height, obstacles=obstacles, rewards=rewards, absorbing=absorbing, gamma=gamma)


def random_grid(width: int, height: int, rng: np.random.Generator, obstacle_p: float = 0.2,
                gamma: float = 0.9) -> GridWorld:
    obstacles = rng.random((height, width)) < obstacle_p
    obstacles[0, 0] = False
    rewards = rng.uniform(-1.0, 0.0, size=(height, width))
    return GridWorld(width, height, obstacles=obstacles, rewards=rewards, gamma=gamma)
