from .gridworld import (ACTION_VECTORS, ACTIONS, GridWorld, corridor_grid, decode_actions,
                        gridworld_to_tabular, random_grid)
from .occupancy import OccupancyGrid, coverage_fraction, coverage_series
from .pendulum import PendulumWorld, wrap_angle
from .pointmass import (PointMassWorld, RewardSpec, box_world, load_world, maze_world,
                        pinwheel_walls, world_from_dict, world_to_dict)

__all__ = [
    "ACTIONS", "ACTION_VECTORS", "GridWorld", "OccupancyGrid", "PendulumWorld", "PointMassWorld",
    "RewardSpec", "box_world", "corridor_grid", "coverage_fraction", "coverage_series",
    "decode_actions", "gridworld_to_tabular", "load_world", "maze_world", "pinwheel_walls",
    "random_grid", "world_from_dict", "world_to_dict", "wrap_angle",
]
