from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class OccupancyGrid:
    """Visited-cell tracker over a rectangular extent (exploration metric)."""

    resolution: int = 20
    extent: tuple[float, float, float, float] = (0.0, 0.0, 1.0, 1.0)
    visited: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.visited is None:
            self.visited = np.zeros((self.resolution, self.resolution), dtype=bool)

    def cells(self, positions) -> tuple[np.ndarray, np.ndarray]:
        pos = np.asarray(positions, dtype=np.float64).reshape(-1, np.shape(positions)[-1])[:, :2]
        x0, y0, x1, y1 = self.extent
        ix = np.floor((pos[:, 0] - x0) / (x1 - x0) * self.resolution).astype(np.int64)
        iy = np.floor((pos[:, 1] - y0) / (y1 - y0) * self.resolution).astype(np.int64)
        return np.clip(ix, 0, self.resolution - 1), np.clip(iy, 0, self.resolution - 1)

    def mark(self, positions) -> None:
        if np.size(positions) == 0:
            return
        ix, iy = self.cells(positions)
        self.visited[iy, ix] = True

    @property
    def fraction(self) -> float:
        return float(self.visited.mean())


def coverage_fraction(grid: OccupancyGrid, states) -> float:
    """Fraction of ``grid`` cells holding at least one of ``states`` (or earlier marks).

    ``states`` rows are ``(x, y, ...)``; the grid is updated in place.
    """
    grid.mark(states)
    return grid.fraction


def coverage_series(states, resolution: int = 20, extent=(0.0, 0.0, 1.0, 1.0)) -> np.ndarray:
    """Coverage after each state of a trajectory."""
    grid = OccupancyGrid(resolution, extent)
    ix, iy = grid.cells(states)
    flat = iy * resolution + ix
    seen = np.zeros(resolution * resolution, dtype=bool)
    first = np.zeros(len(flat), dtype=bool)
    for t, c in enumerate(flat):
        if not seen[c]:
            seen[c] = True
            first[t] = True
    return np.cumsum(first) / float(resolution * resolution)
