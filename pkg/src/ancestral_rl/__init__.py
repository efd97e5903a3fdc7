"""Population-based policy optimisation: ZOO, POGA and ancestral reinforcement learning.

The ``oracle`` module enumerates every history of a small finite MDP and
evaluates population fitness, backward path probabilities and the
generalized value function exactly.
"""
from .algorithms import HyperParams, arl_iteration, poga_iteration, run_algorithm, zoo_iteration
from .environments import CartPoleEnv, QuadraticBlackBox, make_env, two_state_env
from .harness import ExperimentConfig, aggregate_trials, load_config, run_experiment, shipped_config
from .mdp import FiniteMDP, LiftedPlan, Trajectory, discounted_return, rollout, sample_lifted_plan
from .policy import LinearSigmoidPolicy, SoftmaxTableauPolicy, TableauPolicy

__version__ = "0.1.0"

__all__ = [
    "CartPoleEnv",
    "ExperimentConfig",
    "FiniteMDP",
    "HyperParams",
    "LiftedPlan",
    "LinearSigmoidPolicy",
    "QuadraticBlackBox",
    "SoftmaxTableauPolicy",
    "TableauPolicy",
    "Trajectory",
    "aggregate_trials",
    "arl_iteration",
    "discounted_return",
    "load_config",
    "make_env",
    "poga_iteration",
    "rollout",
    "run_algorithm",
    "run_experiment",
    "sample_lifted_plan",
    "shipped_config",
    "two_state_env",
    "zoo_iteration",
]
