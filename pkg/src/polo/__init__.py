"""Plan online, learn offline: MPPI + randomized-prior value ensembles + tabular oracles."""

from .agent import (PoloConfig, ReplayBuffer, RunLog, baseline_run, buffer_add, buffer_sample, polo_run,
                    run_agent)
from .approximator import DenseNet, net_forward, net_grad_sq_loss, net_init, opt_init, opt_step
from .core import EnvModel, ModelFault, Trajectory, discounted_return, rollout, step
from .ensemble import ValueEnsemble, ensemble_init
from .oracle import (TabularMDP, bellman_H, lemma1_check, lemma1_tight_instance, lemma2_check,
                     mpc_policy_tabular, performance, policy_eval, value_iteration)
from .planner import PlannerConfig, PlanResult, greedy_action, mppi_plan, nstep_target

__version__ = "0.1.0"
