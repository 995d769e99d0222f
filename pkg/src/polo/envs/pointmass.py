"""2D point-mass worlds with axis-aligned walls.

State is ``(x, y, vx, vy)``; action is a force direction in ``[-1, 1]^2``.
Walls stop motion: the agent is parked ``WALL_GAP`` short of the wall and the
velocity component into the wall is zeroed (no restitution).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..core import FloatArray, affine_features

WALL_GAP = 1e-9
_MAX_RESOLVE = 6

REWARD_KINDS = ("none", "sparse-goal", "dense-goal")


@dataclass(frozen=True)
class RewardSpec:
    kind: str = "none"
    center: tuple[float, float] = (0.5, 0.5)
    radius: float = 0.1
    bonus: float = 1.0

    def __post_init__(self):
        if self.kind not in REWARD_KINDS:
            raise ValueError(f"unknown reward kind {self.kind!r}; expected one of {REWARD_KINDS}")


@dataclass
class PointMassWorld:
    """A point mass in a rectangular extent with optional interior walls.

    The default force scale gives a terminal speed of one 20x20 grid cell per
    step on the unit square (``dt * force_scale / mass / damping = 0.05``).
    """

    extent: tuple[float, float, float, float] = (0.0, 0.0, 1.0, 1.0)
    walls: FloatArray = field(default_factory=lambda: np.zeros((0, 4)))
    mass: float = 1.0
    dt: float = 0.02
    damping: float = 0.1
    force_scale: float = 12.5
    reward_spec: RewardSpec = field(default_factory=RewardSpec)
    start: tuple[float, float] = (0.5, 0.5)
    gamma: float = 0.99

    state_dim = 4
    action_dim = 2

    def __post_init__(self):
        self.walls = np.asarray(self.walls, dtype=np.float64).reshape(-1, 4)
        vert = self.walls[:, 0] == self.walls[:, 2]
        horiz = self.walls[:, 1] == self.walls[:, 3]
        if not np.all(vert | horiz):
            raise ValueError("walls must be axis-aligned segments [x1, y1, x2, y2]")
        w = self.walls
        # vertical: x, ylo, yhi ; horizontal: y, xlo, xhi
        self._vert = np.stack([w[vert, 0], np.minimum(w[vert, 1], w[vert, 3]),
                               np.maximum(w[vert, 1], w[vert, 3])], axis=1)
        hw = w[horiz & ~vert]
        self._horiz = np.stack([hw[:, 1], np.minimum(hw[:, 0], hw[:, 2]),
                                np.maximum(hw[:, 0], hw[:, 2])], axis=1)
        self._lines = (np.unique(self._vert[:, 0]), np.unique(self._horiz[:, 0]))
        # vertical walls first, so an exact corner hit resolves x before y
        both = np.concatenate([self._vert, self._horiz])
        self._wall_ax = np.repeat([0, 1], [len(self._vert), len(self._horiz)])
        self._wall_c, self._wall_lo, self._wall_hi = both[:, 0], both[:, 1], both[:, 2]
        self.action_low = -np.ones(2)
        self.action_high = np.ones(2)
        x0, y0, x1, y1 = self.extent
        self._lo = np.array([x0, y0])
        self._hi = np.array([x1, y1])
        self._vmax = self.dt * self.force_scale / self.mass / self.damping

    @property
    def max_step(self) -> float:
        """Largest displacement per step at terminal speed."""
        return self.dt * self._vmax

    def initial_state(self, rng=None) -> FloatArray:
        return np.array([self.start[0], self.start[1], 0.0, 0.0])

    @property
    def feature_dim(self) -> int:
        return 4

    def features(self, states: FloatArray) -> FloatArray:
        low = np.array([self._lo[0], self._lo[1], -self._vmax, -self._vmax])
        high = np.array([self._hi[0], self._hi[1], self._vmax, self._vmax])
        return affine_features(states, low, high)

    def reward(self, pos: FloatArray) -> FloatArray:
        spec = self.reward_spec
        if spec.kind == "none":
            return np.zeros(pos.shape[:-1])
        dist = np.linalg.norm(pos - np.asarray(spec.center), axis=-1)
        if spec.kind == "sparse-goal":
            return np.where(dist <= spec.radius, spec.bonus, 0.0)
        return -dist

    def dynamics(self, states: FloatArray, actions: FloatArray) -> tuple[FloatArray, FloatArray]:
        states = np.asarray(states, dtype=np.float64)
        shape = states.shape[:-1]
        s = states.reshape(-1, 4)
        a = np.broadcast_to(actions, shape + (2,)).reshape(-1, 2)
        p = s[:, :2]
        v = (1.0 - self.damping) * s[:, 2:] + (self.dt * self.force_scale / self.mass) * a
        q = p + self.dt * v
        q, v = self._clip_extent(q, v)
        q, v = self._resolve_walls(p, q, v)
        out = np.concatenate([q, v], axis=1).reshape(shape + (4,))
        return out, self.reward(out[..., :2])

    def _clip_extent(self, q, v):
        clipped = np.clip(q, self._lo, self._hi)
        v = np.where(clipped != q, 0.0, v)
        return clipped, v

    def _first_hits(self, p, q):
        """Earliest wall crossing of each segment p->q: (parameter in [0, 1] or inf, wall index)."""
        ax, c, lo, hi = self._wall_ax, self._wall_c, self._wall_lo, self._wall_hi
        pa, qa = p[:, ax], q[:, ax]
        po, qo = p[:, 1 - ax], q[:, 1 - ax]
        d = qa - pa
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (c - pa) / d
            at = po + t * (qo - po)
        hit = ((pa - c) * (qa - c) <= 0.0) & (pa != c) & (d != 0.0) & (at >= lo) & (at <= hi)
        t = np.where(hit, t, np.inf)
        j = np.argmin(t, axis=1)
        return t[np.arange(len(p)), j], j

    def _straddles(self, p, q):
        """Rows whose move p->q reaches or crosses some wall line (cheap prefilter)."""
        near = np.zeros(len(p), dtype=bool)
        for ax, lines in enumerate(self._lines):
            if len(lines):
                a, b = np.minimum(p[:, ax], q[:, ax]), np.maximum(p[:, ax], q[:, ax])
                near |= np.searchsorted(lines, a, side="left") != np.searchsorted(lines, b, side="right")
        return near

    def _resolve_walls(self, p, q, v):
        if len(self.walls) == 0:
            return q, v
        q = q.copy()
        v = v.copy()
        active = np.flatnonzero(self._straddles(p, q))
        for _ in range(_MAX_RESOLVE):
            if not len(active):
                return q, v
            t, j = self._first_hits(p[active], q[active])
            hit = np.isfinite(t)
            active, j = active[hit], j[hit]
            ax = self._wall_ax[j]
            direction = np.sign(q[active, ax] - p[active, ax])
            q[active, ax] = self._wall_c[j] - WALL_GAP * direction
            v[active, ax] = 0.0
        if not len(active):
            return q, v
        # could not settle; stay put
        q[active] = p[active]
        v[active] = 0.0
        return q, v

    def corridor_lengths(self) -> FloatArray:
        return np.hypot(self.walls[:, 2] - self.walls[:, 0], self.walls[:, 3] - self.walls[:, 1])


def box_world(**kwargs) -> PointMassWorld:
    return PointMassWorld(**kwargs)


def pinwheel_walls(corridor: float = 0.1, reach: float = 0.4) -> FloatArray:
    """Four L-shaped dead-end corridors spiralling out of a central hub.

    Each arm leaves the hub, runs ``reach - corridor/2`` outward and turns 90
    degrees clockwise for another stretch. Arms are rotations of the north arm
    about the centre of the unit square.
    """
    h = corridor / 2
    lo, hi = 0.5 - h, 0.5 + h
    top = 0.5 + reach
    north = np.array([
        [lo, hi, lo, top],                      # outer side of the climb
        [hi, hi, hi, top - corridor],           # inner side of the climb
        [lo, top, top, top],                    # ceiling of the turn
        [hi, top - corridor, top, top - corridor],
        [top, top - corridor, top, top],        # dead end
    ])
    arms = [north]
    cur = north
    for _ in range(3):
        # clockwise quarter turn about (0.5, 0.5): (x, y) -> (y, 1 - x)
        cur = np.stack([cur[:, 1], 1 - cur[:, 0], cur[:, 3], 1 - cur[:, 2]], axis=1)
        arms.append(cur)
    return np.round(np.concatenate(arms), 12)


def maze_world(**kwargs) -> PointMassWorld:
    kwargs.setdefault("walls", pinwheel_walls())
    world = PointMassWorld(**kwargs)
    if not np.any(world.corridor_lengths() > 2 * world.max_step):
        raise ValueError("maze has no corridor longer than a one-step reach")
    return world


_WORLD_FIELDS = {"extent", "walls", "reward_spec", "dynamics", "start", "gamma"}
_DYNAMICS_FIELDS = {"mass", "dt", "damping", "force_scale"}
_REWARD_FIELDS = {"kind", "center", "radius", "bonus"}


def _reject_unknown(doc: dict, allowed: set, where: str):
    extra = sorted(set(doc) - allowed)
    if extra:
        raise ValueError(f"{where}: unknown field(s) {extra}; allowed {sorted(allowed)}")


def world_from_dict(doc: dict) -> PointMassWorld:
    _reject_unknown(doc, _WORLD_FIELDS, "world")
    dyn = doc.get("dynamics", {})
    _reject_unknown(dyn, _DYNAMICS_FIELDS, "world.dynamics")
    rs = doc.get("reward_spec", {"kind": "none"})
    _reject_unknown(rs, _REWARD_FIELDS, "world.reward_spec")
    if "center" in rs:
        rs = {**rs, "center": tuple(rs["center"])}
    kwargs = dict(dyn)
    if "extent" in doc:
        kwargs["extent"] = tuple(doc["extent"])
    if "walls" in doc:
        kwargs["walls"] = np.asarray(doc["walls"], dtype=np.float64).reshape(-1, 4)
    if "start" in doc:
        kwargs["start"] = tuple(doc["start"])
    if "gamma" in doc:
        kwargs["gamma"] = float(doc["gamma"])
    return PointMassWorld(reward_spec=RewardSpec(**rs), **kwargs)


def world_to_dict(world: PointMassWorld) -> dict:
    rs = world.reward_spec
    return {
        "extent": list(world.extent),
        "walls": world.walls.tolist(),
        "reward_spec": {"kind": rs.kind, "center": list(rs.center), "radius": rs.radius, "bonus": rs.bonus},
        "dynamics": {"mass": world.mass, "dt": world.dt, "damping": world.damping,
                     "force_scale": world.force_scale},
        "start": list(world.start),
        "gamma": world.gamma,
    }


def load_world(path: str | Path) -> PointMassWorld:
    with open(path) as fh:
        return world_from_dict(json.load(fh))
