"""Exact dynamic programming on small deterministic MDPs.

These routines are the ground truth the learned components are tested
against: value iteration, the H-step Bellman backup (computed both by
repeated one-step backups and by exhaustive sequence search), exhaustive
open-loop MPC, policy evaluation, and empirical checks of the greedy and MPC
performance bounds.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np


@dataclass
class TabularMDP:
    """Deterministic MDP: ``next_state[s, a]`` and ``reward[s, a]``."""

    next_state: np.ndarray
    reward: np.ndarray
    gamma: float

    def __post_init__(self):
        self.next_state = np.asarray(self.next_state, dtype=np.int64)
        self.reward = np.asarray(self.reward, dtype=np.float64)
        if self.next_state.ndim != 2 or self.next_state.shape != self.reward.shape:
            raise ValueError("next_state and reward must both have shape (S, A)")
        S = self.next_state.shape[0]
        if self.next_state.min() < 0 or self.next_state.max() >= S:
            raise ValueError("next_state entries out of range")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if not np.all(np.isfinite(self.reward)):
            raise ValueError("rewards must be finite")

    @property
    def n_states(self) -> int:
        return self.next_state.shape[0]

    @property
    def n_actions(self) -> int:
        return self.next_state.shape[1]


def random_mdp(rng: np.random.Generator, n_states: int, n_actions: int, gamma: float) -> TabularMDP:
    return TabularMDP(
        next_state=rng.integers(0, n_states, size=(n_states, n_actions)),
        reward=rng.uniform(0.0, 1.0, size=(n_states, n_actions)),
        gamma=gamma,
    )


def q_values(m: TabularMDP, V: np.ndarray) -> np.ndarray:
    """``r(s, a) + gamma * V(s')``; ``V`` may carry leading batch axes."""
    return m.reward + m.gamma * V[..., m.next_state]


def bellman(m: TabularMDP, V: np.ndarray) -> np.ndarray:
    return q_values(m, V).max(axis=-1)


def greedy_policy(m: TabularMDP, V: np.ndarray) -> np.ndarray:
    """Argmax of the one-step lookahead; ties go to the lowest action index."""
    return q_values(m, V).argmax(axis=-1)


def value_iteration(m: TabularMDP, tol: float = 1e-10, max_iter: int = 1_000_000) -> np.ndarray:
    """Iterate the Bellman backup until ``||V - V*||_inf < tol`` is guaranteed."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    V = np.zeros(m.n_states)
    if m.gamma == 0.0:
        return bellman(m, V)
    stop = tol * (1.0 - m.gamma) / m.gamma
    for _ in range(max_iter):
        new = bellman(m, V)
        delta = np.max(np.abs(new - V))
        V = new
        if delta < stop:
            break
    return V


def action_sequences(n_actions: int, horizon: int) -> np.ndarray:
    """All ``n_actions ** horizon`` sequences in lexicographic order, shape (M, H)."""
    return np.array(list(itertools.product(range(n_actions), repeat=horizon)), dtype=np.int64).reshape(-1, horizon)


def _check_budget(m: TabularMDP, H: int, budget: int):
    if H < 1:
        raise ValueError("horizon must be >= 1")
    if m.n_actions ** H > budget:
        raise ValueError(f"{m.n_actions}^{H} action sequences exceed the budget of {budget}; use a smaller horizon")


def sequence_returns(m: TabularMDP, H: int, budget: int = 10**6):
    """Discounted reward sums and end states for every (state, sequence) pair.

    Returns ``(seqs, partial, end)`` with ``partial`` and ``end`` of shape (S, M).
    """
    _check_budget(m, H, budget)
    seqs = action_sequences(m.n_actions, H)
    cur = np.broadcast_to(np.arange(m.n_states)[:, None], (m.n_states, len(seqs))).copy()
    partial = np.zeros(cur.shape)
    for t in range(H):
        a = seqs[:, t]
        partial += m.gamma ** t * m.reward[cur, a]
        cur = m.next_state[cur, a]
    return seqs, partial, cur


def bellman_H(m: TabularMDP, V: np.ndarray, H: int, method: str = "iterate",
              budget: int = 10**6) -> np.ndarray:
    """The H-step optimal backup ``max_{a_0..a_{H-1}} sum gamma^t r_t + gamma^H V(s_H)``.

    ``method="iterate"`` applies the one-step backup ``H`` times;
    ``method="exhaustive"`` searches all action sequences.
    """
    if H < 1:
        raise ValueError("horizon must be >= 1")
    V = np.asarray(V, dtype=np.float64)
    if method == "iterate":
        for _ in range(H):
            V = bellman(m, V)
        return V
    if method == "exhaustive":
        _, partial, end = sequence_returns(m, H, budget)
        return (partial + m.gamma ** H * V[..., end]).max(axis=-1)
    raise ValueError(f"unknown method {method!r}")


def mpc_policy_tabular(m: TabularMDP, V_hat: np.ndarray, H: int, budget: int = 10**6) -> np.ndarray:
    """First action of the best open-loop H-step sequence under terminal value ``V_hat``.

    Ties go to the lexicographically smallest sequence. ``V_hat`` may carry
    leading batch axes; the policy then has the same leading axes.
    """
    seqs, partial, end = sequence_returns(m, H, budget)
    scores = partial + m.gamma ** H * np.asarray(V_hat)[..., end]
    return seqs[scores.argmax(axis=-1), 0]


def policy_eval(m: TabularMDP, pi: np.ndarray, tol: float = 1e-12, max_iter: int = 1_000_000) -> np.ndarray:
    """Value of a deterministic policy by iterative evaluation.

    ``pi`` has shape (S,) or (B, S) for a batch of policies.
    """
    pi = np.asarray(pi, dtype=np.int64)
    states = np.arange(m.n_states)
    r = m.reward[states, pi]
    nxt = m.next_state[states, pi]
    V = np.zeros(pi.shape)
    stop = tol * (1.0 - m.gamma) / max(m.gamma, 1e-300)
    rows = np.arange(pi.shape[0])[:, None] if pi.ndim == 2 else slice(None)
    prev_delta = np.inf
    stalled = 0
    for _ in range(max_iter):
        new = r + m.gamma * V[rows, nxt] if pi.ndim == 2 else r + m.gamma * V[nxt]
        delta = np.max(np.abs(new - V))
        V = new
        if delta <= stop:
            break
        # rounding floor reached
        stalled = stalled + 1 if delta >= prev_delta else 0
        if stalled > 50:
            break
        prev_delta = delta
    return V


def performance(m: TabularMDP, V: np.ndarray, beta: np.ndarray | None = None) -> np.ndarray:
    """``E_{s ~ beta}[V(s)]``; ``beta`` defaults to uniform."""
    if beta is None:
        beta = np.full(m.n_states, 1.0 / m.n_states)
    return np.asarray(V) @ np.asarray(beta)


@dataclass
class BoundReport:
    trials: int
    gamma: float
    epsilon: float
    H: int
    max_gap: float
    bound: float
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def mpc_gap_bound(gamma: float, epsilon: float, H: int) -> float:
    """``2 gamma^H eps / (1 - gamma^H)``; H = 1 is the greedy-policy bound."""
    gH = gamma ** H
    return 2.0 * gH * epsilon / (1.0 - gH)


def _corners(n: int) -> np.ndarray:
    return np.array(list(itertools.product((-1.0, 1.0), repeat=n)))


def _trial_noises(rng, n_states, epsilon, corners, max_corner_states=10):
    noise = [rng.uniform(-epsilon, epsilon, size=(1, n_states))]
    if corners and n_states <= max_corner_states:
        noise.append(epsilon * _corners(n_states))
    return np.concatenate(noise)


def random_trials(trials: int, seed: int, gamma: float, epsilon: float, n_states=(2, 10),
                  n_actions: int = 3, corners: bool = True):
    """Random (MDP, V*, noise) triples shared between the greedy and MPC checks."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(trials):
        S = int(rng.integers(n_states[0], n_states[1] + 1))
        m = random_mdp(rng, S, n_actions, gamma)
        v_star = value_iteration(m, tol=1e-13)
        out.append((m, v_star, _trial_noises(rng, S, epsilon, corners)))
    return out


def block_mpc_value(m: TabularMDP, V_hat: np.ndarray, H: int, tol: float = 1e-12,
                    budget: int = 10**6) -> np.ndarray:
    """Value of planning once and executing the whole H-step plan before replanning.

    This non-stationary policy is the one the MPC performance bound's telescoping
    argument actually follows; :func:`mpc_policy_tabular` replans every step.
    """
    seqs, partial, end = sequence_returns(m, H, budget)
    V_hat = np.asarray(V_hat, dtype=np.float64)
    best = (partial + m.gamma ** H * V_hat[..., end]).argmax(axis=-1)
    states = np.arange(m.n_states)
    gain, land = partial[states, best], end[states, best]
    gH = m.gamma ** H
    rows = np.arange(V_hat.shape[0])[:, None] if V_hat.ndim == 2 else slice(None)
    W = np.zeros(V_hat.shape)
    stop = tol * (1.0 - gH) / max(gH, 1e-300)
    for _ in range(1_000_000):
        new = gain + gH * (W[rows, land] if V_hat.ndim == 2 else W[land])
        delta = np.max(np.abs(new - W))
        W = new
        if delta <= stop:
            break
    return W


def bound_check(trials_data, epsilon: float, H: int, tol: float = 1e-9, execution: str = "receding",
                bound: str = "horizon") -> BoundReport:
    """Measure ``J(pi*) - J(pi_MPC)`` against an MPC performance bound.

    Each trial perturbs ``V*`` by every noise vector it carries; bounds use the
    realised sup-norm error of each perturbation. ``execution="receding"``
    evaluates the replan-every-step policy, ``"block"`` the execute-H-then-
    replan policy. ``bound="horizon"`` is ``2 gamma^H eps / (1 - gamma^H)``;
    ``"relaxed"`` is ``2 gamma^H eps / (1 - gamma)``.
    """
    if execution not in ("receding", "block") or bound not in ("horizon", "relaxed"):
        raise ValueError("execution must be receding|block and bound horizon|relaxed")
    gamma = trials_data[0][0].gamma if trials_data else 0.0
    max_gap = 0.0
    violations = []
    for i, (m, v_star, noise) in enumerate(trials_data):
        j_star = performance(m, policy_eval(m, greedy_policy(m, v_star)))
        v_hat = v_star + noise
        if execution == "block":
            v_pi = block_mpc_value(m, v_hat, H)
        else:
            pi = greedy_policy(m, v_hat) if H == 1 else mpc_policy_tabular(m, v_hat, H)
            v_pi = policy_eval(m, pi)
        gaps = j_star - performance(m, v_pi)
        eps_real = np.abs(noise).max(axis=1)
        denom = 1.0 - (m.gamma ** H if bound == "horizon" else m.gamma)
        bounds = 2.0 * m.gamma ** H * eps_real / denom
        max_gap = max(max_gap, float(gaps.max()))
        for j in np.flatnonzero(gaps > bounds + tol):
            violations.append({
                "trial": i, "gap": float(gaps[j]), "bound": float(bounds[j]),
                "next_state": m.next_state.tolist(), "reward": m.reward.tolist(),
                "v_hat": v_hat[j].tolist(),
            })
    nominal = mpc_gap_bound(gamma, epsilon, H) if bound == "horizon" else 2.0 * gamma ** H * epsilon / (1.0 - gamma)
    return BoundReport(len(trials_data), gamma, epsilon, H, max_gap, nominal, violations)


def lemma1_check(epsilon: float = 0.1, trials: int = 100, gamma: float = 0.9, seed: int = 0,
                 corners: bool = True, trials_data=None) -> BoundReport:
    """Greedy-policy bound ``2 gamma eps / (1 - gamma)`` on random MDPs."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    data = trials_data or random_trials(trials, seed, gamma, epsilon, corners=corners)
    return bound_check(data, epsilon, 1)


def lemma2_check(H: int, epsilon: float = 0.1, trials: int = 100, gamma: float = 0.9, seed: int = 0,
                 corners: bool = True, trials_data=None) -> BoundReport:
    """MPC bound ``2 gamma^H eps / (1 - gamma^H)`` on random MDPs."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    data = trials_data or random_trials(trials, seed, gamma, epsilon, corners=corners)
    return bound_check(data, epsilon, H)


def lemma1_tight_instance(gamma: float = 0.9, epsilon: float = 0.1, margin: float = 1e-12):
    """Two-state MDP where the greedy policy loses ``2 gamma eps / (1 - gamma)``.

    From either state, action 0 moves to ``g`` (index 0) for reward 0 and
    action 1 moves to ``b`` (index 1) for reward ``-2 gamma eps + margin``.
    ``V* = 0``; the estimate ``(-eps, +eps)`` makes action 1 look better by
    ``margin``, so greedy pays ``2 gamma eps - margin`` on every step. The
    gap is ``(2 gamma eps - margin) / (1 - gamma)`` under any start
    distribution.

    Returns ``(mdp, v_hat)``.
    """
    bad = -2.0 * gamma * epsilon + margin
    m = TabularMDP(next_state=[[0, 1], [0, 1]], reward=[[0.0, bad], [0.0, bad]], gamma=gamma)
    return m, np.array([-epsilon, epsilon])


def _exact_backups(m: TabularMDP, V: np.ndarray, H: int) -> list[list[Fraction]]:
    """``B^1 V .. B^H V`` in exact rational arithmetic on the float inputs."""
    g = Fraction(m.gamma)
    R = [[Fraction(x) for x in row] for row in m.reward.tolist()]
    N = m.next_state.tolist()
    v = [Fraction(x) for x in V.tolist()]
    out = []
    for _ in range(H):
        v = [max(r + g * v[n] for r, n in zip(R[s], N[s])) for s in range(m.n_states)]
        out.append(v)
    return out


def contraction_check(trials: int = 1000, horizons=range(1, 6), seed: int = 0, gamma: float = 0.9,
                      n_states=(2, 10), n_actions: int = 3) -> dict:
    """``||B^H V1 - B^H V2||_inf <= gamma^H ||V1 - V2||_inf`` on random triples.

    The inequality is decided in exact rational arithmetic; ``max_ratio``
    reports the float64 ratio, which can exceed 1 by a few ulps.
    """
    horizons = list(horizons)
    rng = np.random.default_rng(seed)
    worst = {H: 0.0 for H in horizons}
    violations = []
    g = Fraction(gamma)
    for i in range(trials):
        S = int(rng.integers(n_states[0], n_states[1] + 1))
        m = random_mdp(rng, S, n_actions, gamma)
        V1 = rng.normal(0.0, 5.0, S)
        V2 = rng.normal(0.0, 5.0, S)
        d = np.max(np.abs(V1 - V2))
        exact_d = max(abs(Fraction(a) - Fraction(b)) for a, b in zip(V1.tolist(), V2.tolist()))
        ex1 = _exact_backups(m, V1, max(horizons))
        ex2 = _exact_backups(m, V2, max(horizons))
        for H in horizons:
            lhs = np.max(np.abs(bellman_H(m, V1, H) - bellman_H(m, V2, H)))
            worst[H] = max(worst[H], lhs / (gamma ** H * d))
            exact_lhs = max(abs(a - b) for a, b in zip(ex1[H - 1], ex2[H - 1]))
            if exact_lhs > g ** H * exact_d:
                violations.append({"trial": i, "H": H, "lhs": float(exact_lhs), "rhs": float(g ** H * exact_d)})
    return {"trials": trials, "gamma": gamma, "horizons": horizons,
            "max_ratio": {str(H): r for H, r in worst.items()}, "violations": violations}
