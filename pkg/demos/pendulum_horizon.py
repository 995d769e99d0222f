"""Short-horizon planning plus a learned value versus long-horizon planning alone.

The pendulum pays a reward only while it is near upright, and the torque
limit forces several swings to get there. A 16-step planner without a value
never sees the reward; a 64-step planner does. After training, the 16-step
planner with the learned value swings up too.

    python3 demos/pendulum_horizon.py [seed]
"""

from __future__ import annotations

import sys
from dataclasses import replace
from pathlib import Path

from polo.agent import run_agent
from polo.experiments import load_config, make_env

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def main(seed=0):
    cfg = load_config(CONFIGS / "pendulum_horizon.json")
    env = make_env(cfg.env, cfg.env_params)
    base = replace(cfg.polo, seed=seed, total_steps=cfg.eval_steps, reset_every=0)
    for H in (16, 64):
        log = run_agent(env, replace(base, planner=replace(base.planner, horizon=H)), "mpc")
        print(f"plain MPC, H={H:2d}: upright fraction {log.rewards.mean():.3f}")
    train = replace(cfg.polo, seed=seed, total_steps=cfg.train_steps, planner=replace(base.planner, horizon=16))
    trained = run_agent(env, train, "polo")
    print(f"training: upright fraction {trained.rewards.mean():.3f} over {trained.T} steps")
    ev = run_agent(env, replace(base, planner=train.planner), "polo", ensemble=trained.ensemble, learn=False)
    print(f"POLO,      H=16: upright fraction {ev.rewards.mean():.3f}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 0)
