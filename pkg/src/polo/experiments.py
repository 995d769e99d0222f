"""Experiment harness: JSON config in, plot-ready CSV / JSON files out.

A config is one JSON document::

    {
      "command": "explore",
      "env": {"name": "maze", "params": {}},
      "polo": {"total_steps": 1000, "planner": {"horizon": 32}},
      "baselines": ["greedy", "mpc-no-value"],
      "seeds": [0, 1, 2],
      "out": "runs/explore-maze"
    }

Commands and the files they write (besides ``config.json``, the resolved
config echo, and ``summary.json``):

``explore``
    ``coverage_<agent>_seed<k>.csv`` with columns ``t, coverage``.
``sparse-goal``
    ``<agent>_seed<k>_steps.csv``, ``_updates.csv`` and ``_summary.json``.
``pendulum-horizon``
    ``horizon.csv`` with columns ``horizon, agent, seed, mean_reward``.
``nstep-sweep``
    ``nstep.csv`` with columns ``n, seed, value_rmse, mean_reward``.
``verify-bounds``
    ``lemma1.json``, ``lemma1_tight.json``, ``mpc_bound_H<h>.json``, ``contraction.json``.

Exit status: 0 when every run completes (and every bound holds), 1 on a
runtime fault or a violated bound, 2 on a malformed config.
"""

from __future__ import annotations

import csv
import io
import json
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .agent import AGENTS, PoloConfig, RunLog, run_agent
from .envs import PendulumWorld, corridor_grid, pinwheel_walls, world_from_dict
from .oracle import (bound_check, contraction_check, greedy_policy, lemma1_tight_instance, performance,
                     policy_eval, random_trials, value_iteration)
from .planner import PlannerConfig

COMMANDS = ("explore", "sparse-goal", "pendulum-horizon", "nstep-sweep", "verify-bounds")
ENVS = ("box", "maze", "pendulum", "gridworld")

_TOP_FIELDS = {"command", "env", "polo", "baselines", "seeds", "out", "horizons", "polo_horizons", "train_steps",
               "eval_steps", "n_values", "bounds"}
_ENV_FIELDS = {"name", "params"}
_BOUND_DEFAULTS = {"trials": 100, "epsilon": 0.1, "gamma": 0.9, "horizons": [1, 2, 4], "seed": 0,
                   "tight_margin": 1e-12, "tolerance": 1e-9, "contraction_trials": 1000,
                   "contraction_horizons": [1, 2, 3, 4, 5], "execution": "receding"}


class ConfigError(ValueError):
    """Malformed experiment config; the message carries the field path and line."""


@dataclass
class ExperimentConfig:
    command: str
    env: str
    env_params: dict = field(default_factory=dict)
    polo: PoloConfig = field(default_factory=PoloConfig)
    baselines: list = field(default_factory=list)
    seeds: list = field(default_factory=lambda: [0])
    out: str = "runs"
    horizons: list = field(default_factory=lambda: [16, 64])
    polo_horizons: list = field(default_factory=lambda: [16])
    train_steps: int = 2000
    eval_steps: int = 200
    n_values: list = field(default_factory=lambda: [1, 2, 4, 8, 16])
    bounds: dict = field(default_factory=lambda: dict(_BOUND_DEFAULTS))

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"command: unknown command {self.command!r}; expected one of {list(COMMANDS)}")
        if self.command != "verify-bounds" and self.env not in ENVS:
            raise ConfigError(f"env.name: unknown env {self.env!r}; expected one of {list(ENVS)}")
        if not self.seeds:
            raise ConfigError("seeds: must be a non-empty list")
        for b in self.baselines:
            if b not in AGENTS:
                raise ConfigError(f"baselines: unknown agent {b!r}; expected a subset of {list(AGENTS)}")

    @property
    def agents(self) -> list[str]:
        return ["polo", *[b for b in self.baselines if b != "polo"]]

    def to_dict(self) -> dict:
        doc = {"command": self.command, "env": {"name": self.env, "params": self.env_params},
               "polo": asdict(self.polo), "baselines": list(self.baselines), "seeds": list(self.seeds),
               "out": self.out}
        if self.command == "pendulum-horizon":
            doc.update(horizons=self.horizons, polo_horizons=self.polo_horizons, train_steps=self.train_steps,
                       eval_steps=self.eval_steps)
        elif self.command == "nstep-sweep":
            doc["n_values"] = self.n_values
        elif self.command == "verify-bounds":
            doc["bounds"] = self.bounds
        return doc


def _line_of(text: str, key: str) -> int | None:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _fail(text: str, path: str, msg: str, key: str | None = None):
    line = _line_of(text, key if key is not None else path.rsplit(".", 1)[-1]) if text else None
    where = f"line {line}: " if line else ""
    raise ConfigError(f"{where}{path}: {msg}")


def _check_fields(text: str, doc, allowed: set, path: str):
    if not isinstance(doc, dict):
        _fail(text, path or "<root>", "expected a JSON object")
    for key in doc:
        if key not in allowed:
            _fail(text, f"{path}.{key}" if path else key, f"unknown field; allowed {sorted(allowed)}", key)


def _tupleize(x):
    return tuple(_tupleize(v) for v in x) if isinstance(x, list) else x


def _planner_from(text: str, doc: dict) -> PlannerConfig:
    _check_fields(text, doc, {f.name for f in fields(PlannerConfig)}, "polo.planner")
    kw = {k: _tupleize(v) for k, v in doc.items()}
    try:
        return PlannerConfig(**kw)
    except (TypeError, ValueError) as exc:
        _fail(text, "polo.planner", str(exc), "planner")


def _polo_from(text: str, doc: dict) -> PoloConfig:
    _check_fields(text, doc, {f.name for f in fields(PoloConfig)}, "polo")
    kw = {k: _tupleize(v) for k, v in doc.items() if k != "planner"}
    if "planner" in doc:
        kw["planner"] = _planner_from(text, doc["planner"])
    try:
        return PoloConfig(**kw)
    except (TypeError, ValueError) as exc:
        _fail(text, "polo", str(exc))


def _int_list(text: str, doc: dict, key: str) -> list | None:
    if key not in doc:
        return None
    v = doc[key]
    if not isinstance(v, list) or not all(isinstance(x, int) and not isinstance(x, bool) for x in v):
        _fail(text, key, "expected a list of integers")
    return list(v)


def parse_config(text: str) -> ExperimentConfig:
    """Validate a JSON config string; raises :class:`ConfigError` with line/field diagnostics."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno} column {exc.colno}: invalid JSON: {exc.msg}") from None
    _check_fields(text, doc, _TOP_FIELDS, "")
    if "command" not in doc:
        raise ConfigError("command: missing required field")
    env = doc.get("env", {"name": "box"} if doc["command"] == "verify-bounds" else None)
    if env is None:
        raise ConfigError("env: missing required field")
    _check_fields(text, env, _ENV_FIELDS, "env")
    if "name" not in env:
        _fail(text, "env.name", "missing required field", "env")
    params = env.get("params", {})
    if not isinstance(params, dict):
        _fail(text, "env.params", "expected a JSON object", "params")
    kw = dict(command=doc["command"], env=env["name"], env_params=params,
              polo=_polo_from(text, doc.get("polo", {})))
    if "baselines" in doc:
        if not isinstance(doc["baselines"], list):
            _fail(text, "baselines", "expected a list of agent names")
        kw["baselines"] = doc["baselines"]
    for key in ("seeds", "horizons", "polo_horizons", "n_values"):
        v = _int_list(text, doc, key)
        if v is not None:
            kw[key] = v
    for key in ("train_steps", "eval_steps"):
        if key in doc:
            if not isinstance(doc[key], int) or doc[key] < 1:
                _fail(text, key, "expected a positive integer")
            kw[key] = doc[key]
    if "out" in doc:
        if not isinstance(doc["out"], str):
            _fail(text, "out", "expected a directory path string")
        kw["out"] = doc["out"]
    if "bounds" in doc:
        _check_fields(text, doc["bounds"], set(_BOUND_DEFAULTS), "bounds")
        kw["bounds"] = {**_BOUND_DEFAULTS, **doc["bounds"]}
        if kw["bounds"]["execution"] not in ("receding", "block"):
            _fail(text, "bounds.execution", "expected 'receding' or 'block'", "execution")
    try:
        cfg = ExperimentConfig(**kw)
    except ConfigError as exc:
        key = str(exc).split(":", 1)[0].split(".")[0]
        line = _line_of(text, key)
        raise ConfigError(f"line {line}: {exc}" if line else str(exc)) from None
    try:
        make_env(cfg.env, cfg.env_params) if cfg.command != "verify-bounds" else None
    except (TypeError, ValueError) as exc:
        _fail(text, "env.params", str(exc), "params")
    return cfg


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def make_env(name: str, params: dict):
    if name == "box":
        return world_from_dict(params)
    if name == "maze":
        return world_from_dict({"walls": pinwheel_walls().tolist(), **params})
    if name == "pendulum":
        return PendulumWorld(**params)
    if name == "gridworld":
        p = dict(params)
        if "goal" in p:
            p["goal"] = tuple(p["goal"])
        if "obstacles" in p:
            p["obstacles"] = np.asarray(p["obstacles"], dtype=bool)
        return corridor_grid(**p)
    raise ValueError(f"unknown env {name!r}")


# ---------------------------------------------------------------- jobs

def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(x) -> str:
    return repr(float(x))


def _explore_job(cfg: ExperimentConfig, agent: str, seed: int):
    env = make_env(cfg.env, cfg.env_params)
    log = run_agent(env, replace(cfg.polo, seed=seed), agent)
    return {"coverage_csv": log.coverage_csv(), "final_coverage": float(log.coverage[-1]),
            "total_reward": float(log.rewards.sum()),
            "displacement": float(np.linalg.norm(log.states[-1, :2] - log.states[0, :2]))}


def _sparse_job(cfg: ExperimentConfig, agent: str, seed: int):
    env = make_env(cfg.env, cfg.env_params)
    pc = replace(cfg.polo, seed=seed)
    log = run_agent(env, pc, agent)
    return {"steps_csv": log.steps_csv(), "updates_csv": log.updates_csv(),
            "summary": log.summary(pc), "total_reward": float(log.rewards.sum())}


def _horizon_job(cfg: ExperimentConfig, agent: str, H: int, seed: int):
    env = make_env(cfg.env, cfg.env_params)
    pc = replace(cfg.polo, seed=seed, planner=replace(cfg.polo.planner, horizon=H))
    if agent == "mpc":
        log = run_agent(env, replace(pc, total_steps=cfg.eval_steps, reset_every=0), "mpc")
    else:
        trained = run_agent(env, replace(pc, total_steps=cfg.train_steps), "polo").ensemble
        log = run_agent(env, replace(pc, total_steps=cfg.eval_steps, reset_every=0), "polo", ensemble=trained,
                        learn=False)
    return {"mean_reward": float(log.rewards.mean())}


def value_rmse(env, ens) -> float:
    """RMSE of the ensemble mean against the optimal value over every free grid cell."""
    v_star = value_iteration(env.to_tabular(), tol=1e-12)
    pred = ens.mean_value(env.cells.astype(np.float64))
    return float(np.sqrt(np.mean((pred - v_star) ** 2)))


def _nstep_job(cfg: ExperimentConfig, n: int, seed: int):
    env = make_env(cfg.env, cfg.env_params)
    log = run_agent(env, replace(cfg.polo, seed=seed, target_horizon=n), "polo")
    return {"value_rmse": value_rmse(env, log.ensemble), "mean_reward": float(log.rewards.mean())}


def _call(job):
    fn, args = job
    return fn(*args)


def _run_jobs(jobs: list, n_workers: int) -> list:
    """Run ``(fn, args)`` jobs; results come back in submission order."""
    if n_workers <= 1 or len(jobs) <= 1:
        return [_call(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(_call, jobs))


def _median(xs) -> float:
    return float(np.median(xs))


def _write(out: Path, name: str, text: str) -> None:
    (out / name).write_text(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _explore(cfg: ExperimentConfig, out: Path, jobs: int) -> int:
    keys = [(a, s) for a in cfg.agents for s in cfg.seeds]
    fn = _explore_job if cfg.command == "explore" else _sparse_job
    results = _run_jobs([(fn, (cfg, a, s)) for a, s in keys], jobs)
    summary = {"command": cfg.command, "env": cfg.env, "runs": []}
    for (a, s), res in zip(keys, results):
        if cfg.command == "explore":
            _write(out, f"coverage_{a}_seed{s}.csv", res["coverage_csv"])
            summary["runs"].append({"agent": a, "seed": s, "final_coverage": res["final_coverage"],
                                    "displacement": res["displacement"], "total_reward": res["total_reward"]})
        else:
            _write(out, f"{a}_seed{s}_steps.csv", res["steps_csv"])
            _write(out, f"{a}_seed{s}_updates.csv", res["updates_csv"])
            _write(out, f"{a}_seed{s}_summary.json", _dump(res["summary"]))
            summary["runs"].append({"agent": a, "seed": s, "total_reward": res["total_reward"]})
    metric = "final_coverage" if cfg.command == "explore" else "total_reward"
    summary["median_" + metric] = {a: _median([r[metric] for r in summary["runs"] if r["agent"] == a])
                                   for a in cfg.agents}
    _write(out, "summary.json", _dump(summary))
    return 0


def _pendulum(cfg: ExperimentConfig, out: Path, jobs: int) -> int:
    keys = [("mpc", H, s) for H in cfg.horizons for s in cfg.seeds]
    keys += [("polo", H, s) for H in cfg.polo_horizons for s in cfg.seeds]
    results = _run_jobs([(_horizon_job, (cfg, a, H, s)) for a, H, s in keys], jobs)
    rows = [(H, a, s, _fmt(r["mean_reward"])) for (a, H, s), r in zip(keys, results)]
    _write(out, "horizon.csv", _csv(["horizon", "agent", "seed", "mean_reward"], rows))
    med = {}
    for (a, H, _), r in zip(keys, results):
        med.setdefault(f"{a}_H{H}", []).append(r["mean_reward"])
    _write(out, "summary.json", _dump({"command": cfg.command, "median_mean_reward":
                                       {k: _median(v) for k, v in med.items()}}))
    return 0


def _nstep(cfg: ExperimentConfig, out: Path, jobs: int) -> int:
    keys = [(n, s) for n in cfg.n_values for s in cfg.seeds]
    results = _run_jobs([(_nstep_job, (cfg, n, s)) for n, s in keys], jobs)
    rows = [(n, s, _fmt(r["value_rmse"]), _fmt(r["mean_reward"])) for (n, s), r in zip(keys, results)]
    _write(out, "nstep.csv", _csv(["n", "seed", "value_rmse", "mean_reward"], rows))
    med = {str(n): _median([r["value_rmse"] for (m, _), r in zip(keys, results) if m == n]) for n in cfg.n_values}
    _write(out, "summary.json", _dump({"command": cfg.command, "median_value_rmse": med}))
    return 0


def verify_bounds(b: dict) -> dict:
    """Run every oracle check described by a ``bounds`` block; returns named reports.

    ``execution`` selects how the MPC policy is evaluated: ``"receding"``
    replans every step, ``"block"`` runs each H-step plan to completion.
    """
    b = {**_BOUND_DEFAULTS, **b}
    data = random_trials(b["trials"], b["seed"], b["gamma"], b["epsilon"])
    reports = {"lemma1": asdict(bound_check(data, b["epsilon"], 1, tol=b["tolerance"]))}
    reports["lemma1"]["passed"] = not reports["lemma1"]["violations"]
    m, v_hat = lemma1_tight_instance(b["gamma"], b["epsilon"], b["tight_margin"])
    v_star = value_iteration(m, tol=1e-14)
    j_star = performance(m, policy_eval(m, greedy_policy(m, v_star)))
    j_hat = performance(m, policy_eval(m, greedy_policy(m, v_hat)))
    expected = 2 * b["gamma"] * b["epsilon"] / (1 - b["gamma"])
    gap = float(j_star - j_hat)
    reports["lemma1_tight"] = {"gap": gap, "bound": expected, "passed": abs(gap - expected) <= b["tolerance"]}
    gaps = {}
    for H in b["horizons"]:
        rep = asdict(bound_check(data, b["epsilon"], H, tol=b["tolerance"], execution=b["execution"]))
        rep["passed"] = not rep["violations"]
        reports[f"mpc_bound_H{H}"] = rep
        gaps[H] = rep["max_gap"]
    c = contraction_check(b["contraction_trials"], b["contraction_horizons"], b["seed"], b["gamma"])
    c["passed"] = not c["violations"]
    reports["contraction"] = c
    hs = sorted(gaps)
    if len(hs) > 1:
        reports["mpc_gap_shrinks"] = {"max_gap": {str(h): gaps[h] for h in hs},
                                      "passed": gaps[hs[-1]] < gaps[hs[0]]}
    return reports


def _bounds(cfg: ExperimentConfig, out: Path, jobs: int) -> int:
    reports = verify_bounds(cfg.bounds)
    failed = sorted(k for k, r in reports.items() if not r["passed"])
    for name, rep in reports.items():
        _write(out, f"{name}.json", _dump(rep))
    _write(out, "summary.json", _dump({"command": cfg.command, "passed": not failed, "failed": failed}))
    for name in failed:
        print(f"bound check failed: {name}", file=sys.stderr)
    return 1 if failed else 0


_RUNNERS = {"explore": _explore, "sparse-goal": _explore, "pendulum-horizon": _pendulum, "nstep-sweep": _nstep,
            "verify-bounds": _bounds}


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> int:
    """Execute ``cfg`` and write its artifacts under ``cfg.out``; returns the exit status."""
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        _write(out, "config.json", _dump(cfg.to_dict()))
    except OSError as exc:
        print(f"cannot write to output directory {out}: {exc}", file=sys.stderr)
        return 1
    try:
        return _RUNNERS[cfg.command](cfg, out, jobs)
    except RuntimeError as exc:
        print(f"runtime fault: {exc}", file=sys.stderr)
        return 1
