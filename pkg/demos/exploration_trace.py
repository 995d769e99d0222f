"""Reward-free exploration in the point-mass maze, drawn as ASCII occupancy maps.

Runs the planning agent and the one-step greedy agent with the same value
ensemble settings and prints where each spent its time.

    python3 demos/exploration_trace.py [seed]
"""

from __future__ import annotations

import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from polo.agent import run_agent
from polo.experiments import load_config, make_env

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def occupancy_map(states, resolution=20):
    counts = np.zeros((resolution, resolution), int)
    ix = np.minimum((states[:, 0] * resolution).astype(int), resolution - 1)
    iy = np.minimum((states[:, 1] * resolution).astype(int), resolution - 1)
    np.add.at(counts, (iy, ix), 1)
    return "\n".join("".join("." if c == 0 else ("#" if c > 10 else "+") for c in row) for row in counts[::-1])


def main(seed=0):
    cfg = load_config(CONFIGS / "explore_maze.json")
    env = make_env(cfg.env, cfg.env_params)
    for agent in ("polo", "greedy"):
        log = run_agent(env, replace(cfg.polo, seed=seed), agent)
        print(f"{agent}: coverage {log.coverage[-1]:.3f} after {log.T} steps")
        print(occupancy_map(log.states))
        print()


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 0)
