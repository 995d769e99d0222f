"""The plan-online / learn-offline loop and its baselines.

At every step the agent plans with MPPI using the optimistic ensemble value
as terminal reward, executes the first action and stores the visited state.
Every ``update_every`` steps it runs ``grad_steps`` rounds of: sample a
minibatch of stored states, compute each member's N-step target by trajectory
optimisation with that member's own value, take one Adam step per member.
"""

from __future__ import annotations

import csv
import io
import json
from collections import deque
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .core import EnvModel, ModelFault, step
from .ensemble import ValueEnsemble, ensemble_init
from .envs.occupancy import coverage_series
from .envs.pointmass import PointMassWorld
from .planner import PlannerConfig, ensemble_nstep_targets, greedy_action, mppi_plan

AGENTS = ("polo", "greedy", "random", "mpc-no-value", "mpc")


class ReplayBuffer:
    """Bounded FIFO store of visited states."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.states: deque = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self.states)

    def add(self, s) -> None:
        self.states.append(np.array(s, dtype=np.float64))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """``n`` states drawn uniformly with replacement."""
        if not self.states:
            raise ValueError("cannot sample from an empty replay buffer")
        idx = rng.integers(0, len(self.states), size=n)
        return np.stack([self.states[i] for i in idx])


def buffer_add(buf: ReplayBuffer, s) -> ReplayBuffer:
    buf.add(s)
    return buf


def buffer_sample(buf: ReplayBuffer, n: int, seed) -> np.ndarray:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return buf.sample(n, rng)


@dataclass(frozen=True)
class PoloConfig:
    planner: PlannerConfig = field(default_factory=lambda: PlannerConfig(horizon=32))
    target_horizon: int = 1
    target_rollouts: int | None = None
    target_noise_set: tuple | None = None
    update_every: int = 16
    grad_steps: int = 64
    batch_size: int = 32
    K: int = 6
    hidden: tuple = (16, 16)
    kappa: float = 0.1
    prior_scale: float = 1.0
    prior_init: float = 1.0
    sigma: float = 0.01
    lam: float = 1.0
    normalized: bool = False
    lr: float = 1e-3
    buffer_capacity: int = 10_000
    total_steps: int = 1000
    seed: int = 0
    reset_every: int = 0
    greedy_samples: int | None = None
    planner_rewards: bool = True

    def __post_init__(self):
        for name in ("target_horizon", "update_every", "grad_steps", "batch_size", "K", "buffer_capacity",
                     "total_steps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.batch_size > self.buffer_capacity:
            raise ValueError("batch_size cannot exceed buffer_capacity")
        if self.reset_every < 0:
            raise ValueError("reset_every must be >= 0")
        if self.greedy_samples is not None and self.greedy_samples < 1:
            raise ValueError("greedy_samples must be positive")

    @property
    def greedy_budget(self) -> int:
        """Candidate actions per greedy step; defaults to the planner's rollout count."""
        return self.greedy_samples or self.planner.rollouts

    def target_planner(self) -> PlannerConfig:
        return replace(self.planner, horizon=self.target_horizon, warm_start=False,
                       rollouts=self.target_rollouts or self.planner.rollouts,
                       noise_set=self.target_noise_set)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunLog:
    agent: str
    seed: int
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    best_returns: np.ndarray
    updates: list = field(default_factory=list)  # (t, k, loss, mean_target)
    rounds: int = 0
    coverage: np.ndarray | None = None
    ensemble: ValueEnsemble | None = field(default=None, repr=False)

    @property
    def T(self) -> int:
        return len(self.rewards)

    def steps_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        n, m = self.states.shape[1], self.actions.shape[1]
        w.writerow(["t", *(f"x{i}" for i in range(n)), *(f"a{i}" for i in range(m)), "reward", "value", "best_return"])
        for t in range(self.T):
            w.writerow([t + 1, *map(repr, self.states[t].tolist()), *map(repr, self.actions[t].tolist()),
                        repr(float(self.rewards[t])), repr(float(self.values[t])), repr(float(self.best_returns[t]))])
        return buf.getvalue()

    def updates_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "k", "loss", "mean_target"])
        for t, k, loss, target in self.updates:
            w.writerow([t, k, repr(float(loss)), repr(float(target))])
        return buf.getvalue()

    def coverage_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "coverage"])
        for t, c in enumerate(self.coverage if self.coverage is not None else []):
            w.writerow([t + 1, repr(float(c))])
        return buf.getvalue()

    def summary(self, cfg: PoloConfig | None = None) -> dict:
        out = {"agent": self.agent, "seed": self.seed, "steps": self.T, "update_rounds": self.rounds,
               "total_reward": float(self.rewards.sum())}
        if self.coverage is not None and len(self.coverage):
            out["final_coverage"] = float(self.coverage[-1])
        if cfg is not None:
            out["config"] = cfg.to_dict()
        return out


class _ZeroReward:
    """View of a model with the reward stripped (planning on the value alone)."""

    def __init__(self, model):
        self._model = model

    def __getattr__(self, name):
        return getattr(self._model, name)

    def dynamics(self, states, actions):
        nxt, r = self._model.dynamics(states, actions)
        return nxt, np.zeros_like(r)


def make_ensemble(env: EnvModel, cfg: PoloConfig, seed) -> ValueEnsemble:
    sizes = (env.feature_dim, *cfg.hidden, 1)
    return ensemble_init(cfg.K, sizes, prior_scale=cfg.prior_scale, seed=seed, kappa=cfg.kappa, sigma=cfg.sigma,
                         lam=cfg.lam, normalized=cfg.normalized, lr=cfg.lr, features=env.features,
                         prior_init=cfg.prior_init)


def _zero_value(states):
    return np.zeros(np.shape(states)[:-1])


def run_agent(env: EnvModel, cfg: PoloConfig, agent: str = "polo", ensemble: ValueEnsemble | None = None,
              learn: bool | None = None, start=None) -> RunLog:
    """Act for ``cfg.total_steps`` steps with the named agent.

    ``polo`` plans with MPPI on the ensemble value; ``greedy`` picks the best
    one-step action under the same value and learning schedule; ``random``
    acts uniformly; ``mpc-no-value`` / ``mpc`` plan with zero terminal value.
    Pass ``ensemble`` (and ``learn=False``) to act with an already trained value.
    """
    if agent not in AGENTS:
        raise ValueError(f"unknown agent {agent!r}; expected one of {AGENTS}")
    uses_value = agent in ("polo", "greedy")
    learn = uses_value if learn is None else (learn and uses_value)
    seeds = np.random.SeedSequence(cfg.seed).spawn(6)
    rng_act, rng_buf, rng_tgt, rng_reset = (np.random.default_rng(s) for s in seeds[1:5])
    ens = ensemble if ensemble is not None else (make_ensemble(env, cfg, seeds[0]) if uses_value else None)
    plan_model = env if cfg.planner_rewards else _ZeroReward(env)
    value = ens.value if uses_value else _zero_value
    target_cfg = cfg.target_planner()
    buf = ReplayBuffer(cfg.buffer_capacity)

    T = cfg.total_steps
    n, m = env.state_dim, env.action_dim
    states, actions = np.zeros((T, n)), np.zeros((T, m))
    rewards, values, best = np.zeros(T), np.zeros(T), np.full(T, np.nan)
    log = RunLog(agent, cfg.seed, states, actions, rewards, values, best, ensemble=ens)

    s = np.asarray(env.initial_state(rng_reset) if start is None else start, dtype=np.float64)
    prev = None
    for t in range(1, T + 1):
        if cfg.reset_every and t > 1 and (t - 1) % cfg.reset_every == 0:
            s = np.asarray(env.initial_state(rng_reset), dtype=np.float64)
            prev = None
        try:
            if agent == "random":
                a = rng_act.uniform(env.action_low, env.action_high)
            elif agent == "greedy":
                a = greedy_action(plan_model, s, value, cfg.greedy_budget, cfg.planner.gamma, rng_act)
            else:
                plan = mppi_plan(plan_model, s, value, cfg.planner, prev, rng_act)
                a, prev = plan.action, plan.nominal
                best[t - 1] = plan.best_return
            states[t - 1], actions[t - 1] = s, a
            values[t - 1] = float(value(s)) if uses_value else 0.0
            buf.add(s)
            s, rewards[t - 1] = step(env, s, a)
            if learn and t % cfg.update_every == 0:
                _update(env if cfg.planner_rewards else plan_model, ens, buf, cfg, target_cfg, rng_buf, rng_tgt,
                        t, log)
        except (ModelFault, ValueError, FloatingPointError, RuntimeError) as exc:
            raise RuntimeError(f"agent {agent!r} seed {cfg.seed} failed at t={t}: {exc}") from exc
    if isinstance(env, PointMassWorld):
        log.coverage = coverage_series(states, extent=env.extent)
    return log


def _update(model, ens: ValueEnsemble, buf: ReplayBuffer, cfg: PoloConfig, target_cfg: PlannerConfig,
            rng_buf, rng_tgt, t: int, log: RunLog) -> None:
    losses = np.zeros(ens.K)
    means = np.zeros(ens.K)
    for _ in range(cfg.grad_steps):
        batch = buf.sample(cfg.batch_size, rng_buf)
        targets = ensemble_nstep_targets(model, ens, batch, cfg.target_horizon, target_cfg, rng_tgt)
        loss = ens.train_all(np.broadcast_to(batch, (ens.K,) + batch.shape), targets)
        if not (np.all(np.isfinite(loss)) and np.all(np.isfinite(targets))):
            raise FloatingPointError("non-finite loss or target during value update")
        losses += loss
        means += targets.mean(axis=1)
        log.rounds += 1
    for k in range(ens.K):
        log.updates.append((t, k, losses[k] / cfg.grad_steps, means[k] / cfg.grad_steps))


def polo_run(env: EnvModel, cfg: PoloConfig) -> RunLog:
    return run_agent(env, cfg, "polo")


def baseline_run(env: EnvModel, kind: str, cfg: PoloConfig) -> RunLog:
    if kind not in ("random", "greedy", "mpc-no-value"):
        raise ValueError(f"unknown baseline {kind!r}")
    return run_agent(env, cfg, kind)


def write_run(log: RunLog, prefix, cfg: PoloConfig | None = None) -> None:
    """``<prefix>_steps.csv``, ``<prefix>_updates.csv`` and ``<prefix>_summary.json``."""
    prefix = str(prefix)
    with open(prefix + "_steps.csv", "w") as fh:
        fh.write(log.steps_csv())
    with open(prefix + "_updates.csv", "w") as fh:
        fh.write(log.updates_csv())
    with open(prefix + "_summary.json", "w") as fh:
        json.dump(log.summary(cfg), fh, indent=2, sort_keys=True)
