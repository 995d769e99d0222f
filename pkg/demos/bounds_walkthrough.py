"""Walk through the tabular performance-bound checks on random MDPs.

Prints the worst observed gap next to each bound, then shows the smallest
receding-horizon counterexample found for H = 2 and how executing each plan
in full restores the bound.

    python3 demos/bounds_walkthrough.py
"""

from __future__ import annotations

import numpy as np

from polo.oracle import (bound_check, greedy_policy, lemma1_tight_instance, mpc_gap_bound, performance,
                         policy_eval, random_trials, value_iteration)

GAMMA, EPS = 0.9, 0.1


def main():
    data = random_trials(100, seed=0, gamma=GAMMA, epsilon=EPS)
    print(f"{len(data)} random MDPs, gamma={GAMMA}, eps={EPS}")
    print(f"{'H':>2} {'bound':>8} {'replan':>8} {'viol':>5} {'block':>8} {'viol':>5}")
    for H in (1, 2, 4):
        rec = bound_check(data, EPS, H)
        blk = bound_check(data, EPS, H, execution="block")
        print(f"{H:>2} {mpc_gap_bound(GAMMA, EPS, H):8.4f} {rec.max_gap:8.4f} {len(rec.violations):5d} "
              f"{blk.max_gap:8.4f} {len(blk.violations):5d}")

    m, v_hat = lemma1_tight_instance(GAMMA, EPS)
    v_star = value_iteration(m, tol=1e-14)
    gap = performance(m, v_star) - performance(m, policy_eval(m, greedy_policy(m, v_hat)))
    print(f"\ntwo-state tight instance: greedy gap {gap:.12f} vs bound {2 * GAMMA * EPS / (1 - GAMMA):.12f}")

    rep = bound_check(data, EPS, 2)
    if rep.violations:
        v = rep.violations[0]
        print(f"\nreplanning counterexample (trial {v['trial']}): gap {v['gap']:.4f} > bound {v['bound']:.4f}")
        print("next_state =", np.array(v["next_state"]).tolist())
        print("v_hat      =", np.round(v["v_hat"], 4).tolist())


if __name__ == "__main__":
    main()
