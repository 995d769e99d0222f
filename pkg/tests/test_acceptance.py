"""Acceptance criteria, each checked at its stated tolerance and time budget.

Every test records one ``PASS``/``FAIL`` line; the lines are printed in the
pytest terminal summary. The experiment criteria run the shipped configs in
``configs/`` through :func:`polo.experiments.run_experiment`.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from polo.approximator import net_init, sq_loss_and_grads
from polo.envs import ACTION_VECTORS, random_grid
from polo.experiments import load_config, make_env, run_experiment
from polo.oracle import (bellman_H, bound_check, contraction_check, greedy_policy, lemma1_tight_instance,
                         performance, policy_eval, random_trials, value_iteration)
from polo.planner import PlannerConfig, nstep_target

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def record(n: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    ACCEPTANCE_LINES[n] = line
    print(line)
    assert ok, line


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------- tabular bounds

def test_c1_greedy_bound_and_tight_instance():
    t0 = time.perf_counter()
    data = random_trials(100, seed=0, gamma=0.9, epsilon=0.1)
    assert max(m.n_states for m, _, _ in data) <= 10
    rep = bound_check(data, 0.1, 1, tol=1e-9)
    m, v_hat = lemma1_tight_instance(0.9, 0.1)
    v_star = value_iteration(m, tol=1e-14)
    gap = performance(m, v_star) - performance(m, policy_eval(m, greedy_policy(m, v_hat)))
    dt = time.perf_counter() - t0
    ok = rep.passed and abs(gap - 1.8) <= 1e-9 and dt < 10
    record(1, ok, f"{len(rep.violations)} violations in 100 MDPs (max gap {rep.max_gap:.4f} <= 1.8); "
                  f"tight gap {gap:.12f}; {dt:.1f}s")


def test_c2_mpc_bound():
    t0 = time.perf_counter()
    data = random_trials(100, seed=0, gamma=0.9, epsilon=0.1)
    reps = {H: bound_check(data, 0.1, H, tol=1e-9) for H in (1, 2, 4)}
    dt = time.perf_counter() - t0
    viol = {H: len(r.violations) for H, r in reps.items()}
    shrinks = reps[4].max_gap < reps[1].max_gap
    ok = not any(viol.values()) and shrinks and dt < 60
    worst = {H: round(r.max_gap, 4) for H, r in reps.items()}
    record(2, ok, f"violations per H {viol}; worst gaps {worst}; H=4 < H=1: {shrinks}; {dt:.1f}s")


def test_c3_exact_contraction():
    t0 = time.perf_counter()
    out = contraction_check(trials=1000, horizons=range(1, 6), seed=0, gamma=0.9)
    dt = time.perf_counter() - t0
    ok = not out["violations"] and dt < 10
    record(3, ok, f"{len(out['violations'])} exact violations over 1000 triples x H=1..5; {dt:.1f}s")


# ---------------------------------------------------------------- gradients

def test_c4_gradients_vs_central_differences():
    rng = np.random.default_rng(0)
    worst = 0.0
    h = 1e-6
    for _ in range(50):
        sizes = (int(rng.integers(1, 5)), *rng.integers(1, 9, size=int(rng.integers(1, 3))), 1)
        net = net_init(sizes, rng, scale=1.5)
        for b in net.biases:
            b[...] = rng.normal(0, 0.5, b.shape)
        x = rng.normal(size=(4, sizes[0]))
        y = rng.normal(size=4)
        l2 = float(rng.uniform(0, 0.05))
        _, gw, gb = sq_loss_and_grads(net, x, y, l2)
        for p, g in zip(net.params(), [*gw, *gb]):
            for i in np.ndindex(p.shape):
                old = p[i]
                p[i] = old + h
                up = float(sq_loss_and_grads(net, x, y, l2)[0])
                p[i] = old - h
                down = float(sq_loss_and_grads(net, x, y, l2)[0])
                p[i] = old
                fd = (up - down) / (2 * h)
                rel = abs(g[i] - fd) / max(abs(g[i]), abs(fd), 1e-4)
                worst = max(worst, rel)
    record(4, worst < 1e-5, f"max relative error {worst:.2e} over 50 random nets")


# ---------------------------------------------------------------- target oracle

def test_c5_enumerated_targets_equal_h_step_backup():
    rng = np.random.default_rng(0)
    g = random_grid(6, 6, rng, obstacle_p=0.2, gamma=0.9)
    m = g.to_tabular()
    V = rng.normal(size=g.n_states)
    value = lambda s: V[g.index_of(s)]  # noqa: E731
    idx = rng.choice(g.n_states, size=20, replace=True)
    states = g.cells[idx].astype(np.float64)
    cfg = PlannerConfig(noise_set=ACTION_VECTORS, gamma=g.gamma)
    err = 0.0
    for N in (1, 2, 3):
        got = nstep_target(g, states, value, N, cfg)
        err = max(err, float(np.abs(got - bellman_H(m, V, N)[idx]).max()))
    record(5, err <= 1e-9, f"max |target - B^N V| = {err:.2e} for N=1,2,3 at 20 states")


# ---------------------------------------------------------------- exploration

@pytest.fixture(scope="module")
def exploration(tmp_path_factory):
    out = {}
    t0 = time.perf_counter()
    for world in ("box", "maze"):
        cfg = load_config(CONFIGS / f"explore_{world}.json")
        cfg = replace(cfg, out=str(tmp_path_factory.mktemp(f"explore-{world}")))
        assert cfg.polo.total_steps == 1000 and len(cfg.seeds) == 10
        assert run_experiment(cfg) == 0
        out[world] = json.loads((Path(cfg.out) / "summary.json").read_text())
        x0, y0, x1, y1 = make_env(cfg.env, cfg.env_params).extent
        out[world]["extent"] = min(x1 - x0, y1 - y0)
    out["seconds"] = time.perf_counter() - t0
    return out


def test_c6_exploration_ordering(exploration):
    med = {w: exploration[w]["median_final_coverage"] for w in ("box", "maze")}
    checks = []
    for w in ("box", "maze"):
        m = med[w]
        checks.append(m["polo"] > m["greedy"] > m["mpc-no-value"])
    ratio = med["maze"]["polo"] / med["maze"]["greedy"]
    fast = exploration["seconds"] < 600
    ok = all(checks) and ratio >= 1.5 and fast
    fmt = lambda m: ", ".join(f"{k} {v:.3f}" for k, v in m.items())  # noqa: E731
    record(6, ok, f"box [{fmt(med['box'])}] ordered={checks[0]}; maze [{fmt(med['maze'])}] ordered={checks[1]}; "
                  f"maze polo/greedy {ratio:.2f} (need >= 1.5); {exploration['seconds']:.0f}s")


def test_c7_mpc_without_value_stays_put(exploration):
    disp = [r["displacement"] / exploration[w]["extent"] for w in ("box", "maze")
            for r in exploration[w]["runs"] if r["agent"] == "mpc-no-value"]
    ok = len(disp) == 20 and max(disp) < 0.05
    record(7, ok, f"max displacement {max(disp):.2e} of extent over {len(disp)} zero-reward runs (limit 0.05)")


# ---------------------------------------------------------------- horizon

def test_c8_value_reduces_planning_horizon(tmp_path):
    cfg = replace(load_config(CONFIGS / "pendulum_horizon.json"), out=str(tmp_path))
    t0 = time.perf_counter()
    assert run_experiment(cfg) == 0
    dt = time.perf_counter() - t0
    rows = _rows(tmp_path / "horizon.csv")
    med = {}
    for r in rows:
        med.setdefault((r["agent"], int(r["horizon"])), []).append(float(r["mean_reward"]))
    med = {k: float(np.median(v)) for k, v in med.items()}
    long_, short, polo = med[("mpc", 64)], med[("mpc", 16)], med[("polo", 16)]
    ok = long_ > 0 and short < 0.1 * long_ and polo >= 0.5 * long_ and dt < 1200
    record(8, ok, f"median upright fraction: MPC H=64 {long_:.3f}, MPC H=16 {short:.3f} (< {0.1 * long_:.3f}), "
                  f"POLO H=16 {polo:.3f} (>= {0.5 * long_:.3f}); {dt:.0f}s")


# ---------------------------------------------------------------- n-step targets

def test_c9_longer_targets_learn_values_faster(tmp_path):
    cfg = replace(load_config(CONFIGS / "nstep_sweep.json"), out=str(tmp_path), n_values=[1, 8])
    assert len(cfg.seeds) == 5
    assert run_experiment(cfg) == 0
    rows = _rows(tmp_path / "nstep.csv")
    med = {n: float(np.median([float(r["value_rmse"]) for r in rows if int(r["n"]) == n])) for n in (1, 8)}
    record(9, med[8] < med[1], f"median value RMSE vs V*: N=1 {med[1]:.3f}, N=8 {med[8]:.3f}")


# ---------------------------------------------------------------- determinism

def test_c10_byte_identical_reruns(tmp_path):
    checked = 0
    same = True
    for name, extra in (("explore_maze.json", {"seeds": [3]}), ("nstep_sweep.json", {"seeds": [1], "n_values": [2]}),
                        ("pendulum_horizon.json", {"seeds": [2], "train_steps": 200, "eval_steps": 50})):
        base = load_config(CONFIGS / name)
        polo = replace(base.polo, total_steps=min(base.polo.total_steps, 200))
        outs = []
        for i, jobs in enumerate((1, 1, 2)):
            cfg = replace(base, polo=polo, out=str(tmp_path / f"{name}-{i}"), **extra)
            assert run_experiment(cfg, jobs=jobs) == 0
            outs.append(Path(cfg.out))
        for f in sorted(outs[0].glob("*.csv")):
            checked += 1
            same &= all((o / f.name).read_bytes() == f.read_bytes() for o in outs[1:])
    record(10, same and checked > 0, f"{checked} CSV files byte-identical across reruns and --jobs 2")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
