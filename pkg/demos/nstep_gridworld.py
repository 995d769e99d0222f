"""Longer optimised targets speed up value learning on a gridworld.

Trains the ensemble with 1-step and 8-step targets for the same number of
environment steps and compares the mean member against the exact values.

    python3 demos/nstep_gridworld.py
"""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import numpy as np

from polo.agent import run_agent
from polo.experiments import load_config, make_env, value_rmse

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def main():
    cfg = load_config(CONFIGS / "nstep_sweep.json")
    env = make_env(cfg.env, cfg.env_params)
    for n in (1, 8):
        errs = []
        for seed in cfg.seeds:
            log = run_agent(env, replace(cfg.polo, seed=seed, target_horizon=n), "polo")
            errs.append(value_rmse(env, log.ensemble))
        print(f"N={n}: value RMSE per seed {np.round(errs, 3).tolist()}, median {np.median(errs):.3f}")


if __name__ == "__main__":
    main()
