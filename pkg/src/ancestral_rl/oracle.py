"""Exact enumeration over small finite MDPs.

Every quantity here is computed by listing all state/action histories of a
deterministic (or plan-conditioned) finite MDP, so it can serve as ground
truth for the sampling-based algorithms.

Conventions
-----------
* Returns use absolute-time discounting: a suffix starting at time ``t``
  is worth ``sum_{s >= t} gamma**s r_s``.
* Gradients w.r.t. a ``TableauPolicy`` are expressed in simplex-tangent
  coordinates: entry ``(x, a)`` is the derivative along "add mass to
  ``pi(a|x)`` and renormalise the row", i.e. along ``e_a - pi(.|x)``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.special import logsumexp, softmax

from .exceptions import DivergenceError, DomainError, InvalidInputError, ResourceLimitError
from .mdp import sample_lifted_plan
from .policy import SoftmaxTableauPolicy, TableauPolicy

MAX_PATHS = 10**6


@dataclass(frozen=True, eq=False)
class PathTable:
    """All histories of an episode (or of a suffix starting at ``start_time``).

    ``states`` is ``(n_paths, steps + 1)``, ``actions`` is ``(n_paths, steps)``.
    ``returns`` are discounted with absolute time. ``pb`` is populated by
    ``backward_distribution``.
    """

    states: np.ndarray
    actions: np.ndarray
    log_pf: np.ndarray
    returns: np.ndarray
    start_time: int
    gamma: float
    pb: Optional[np.ndarray] = None
    beta: Optional[float] = None

    @property
    def pf(self):
        return np.exp(self.log_pf)

    def __len__(self):
        return len(self.returns)


def policy_table(policy, n_states):
    return np.array([policy.action_distribution(x) for x in range(n_states)])


def _transitions(env, horizon, plan):
    """Per-time successor maps ``(horizon, S, A)`` and the initial state."""
    if plan is not None and plan.maps is not None:
        if plan.maps.shape[0] < horizon:
            raise InvalidInputError("plan shorter than horizon")
        return plan.maps[:horizon], int(plan.initial_state)
    if not env.is_deterministic:
        raise InvalidInputError("stochastic environment: condition on a LiftedPlan")
    succ = env.successor_table()
    return np.broadcast_to(succ, (horizon,) + succ.shape), int(env.initial.argmax())


def enumerate_paths(env, policy, horizon=None, gamma=None, plan=None, start_state=None, start_time=0,
                    prune=True, max_paths=MAX_PATHS):
    """Enumerate every history from ``start_time`` to ``horizon``.

    With ``prune`` (default) histories of zero forward probability are dropped;
    without it all ``|A|**steps`` action sequences are kept (``log_pf = -inf``
    for impossible ones).

    Raises
    ------
    ResourceLimitError
        if more than ``max_paths`` histories would be produced.
    """
    horizon = env.horizon if horizon is None else int(horizon)
    gamma = env.gamma if gamma is None else float(gamma)
    succ, x0 = _transitions(env, horizon, plan)
    if start_state is not None:
        x0 = int(start_state)
    if not 0 <= start_time <= horizon:
        raise DomainError(f"start_time {start_time} outside [0, {horizon}]")
    n_actions = env.n_actions
    steps = horizon - start_time
    if not prune and n_actions**steps > max_paths:
        raise ResourceLimitError(f"{n_actions}**{steps} paths exceed the limit of {max_paths}")
    with np.errstate(divide="ignore"):
        log_pi = np.log(policy_table(policy, env.n_states))

    states = np.full((1, 1), x0, dtype=int)
    actions = np.zeros((1, 0), dtype=int)
    log_pf = np.zeros(1)
    returns = np.zeros(1)
    for t in range(start_time, horizon):
        x = states[:, -1]
        cand_lp = log_pf[:, None] + log_pi[x]  # (M, A)
        keep = np.isfinite(cand_lp) if prune else np.ones_like(cand_lp, dtype=bool)
        n_new = int(keep.sum())
        if n_new > max_paths:
            raise ResourceLimitError(f"{n_new} paths exceed the limit of {max_paths}")
        rows, acts = np.nonzero(keep)
        nxt = succ[t][x[rows], acts]
        states = np.column_stack([states[rows], nxt])
        actions = np.column_stack([actions[rows], acts])
        log_pf = cand_lp[rows, acts]
        returns = returns[rows] + gamma**t * env.rewards[x[rows], acts]
    return PathTable(states, actions, log_pf, returns, start_time, gamma)


def expected_return(table):
    """``J = E_{P_F}[R]``."""
    return float(np.dot(table.pf, table.returns))


def population_fitness(table, beta):
    """``(1/beta) log E_{P_F}[exp(beta R)]``, evaluated with log-sum-exp."""
    if beta <= 0:
        raise InvalidInputError("population_fitness needs beta > 0; use expected_return for the beta -> 0 limit")
    return float(logsumexp(beta * table.returns + table.log_pf) / beta)


def backward_distribution(table, beta):
    """Attach ``P_B ∝ exp(beta R) P_F`` to ``table``."""
    pb = table.pf if beta == 0 else softmax(beta * table.returns + table.log_pf)
    return replace(table, pb=pb, beta=beta)


def kl_divergence(p, q):
    """``KL(p || q)`` for aligned probability vectors."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    support = p > 0
    if np.any(q[support] <= 0):
        raise DivergenceError("p puts mass where q has none")
    return float(np.sum(p[support] * (np.log(p[support]) - np.log(q[support]))))


def _visits(table, weights, n_states, n_actions):
    counts = np.zeros((n_states, n_actions))
    steps = table.actions.shape[1]
    np.add.at(
        counts,
        (table.states[:, :steps].ravel(), table.actions.ravel()),
        np.repeat(weights, steps),
    )
    return counts


def _score_expectation(table, weights, policy, env):
    """``E_w[sum_t grad log pi(a_t|x_t)]`` in the policy's gradient coordinates."""
    visits = _visits(table, weights, env.n_states, env.n_actions)
    pi = policy_table(policy, env.n_states)
    if isinstance(policy, TableauPolicy):
        if np.any((visits > 0) & (pi == 0)):
            raise InvalidInputError("visited action with zero probability")
        amb = np.divide(visits, pi, out=np.zeros_like(visits), where=pi > 0)
        return tangent_projection(amb, pi)
    if isinstance(policy, SoftmaxTableauPolicy):
        return visits - visits.sum(axis=1, keepdims=True) * pi
    raise InvalidInputError(f"unsupported policy family {type(policy).__name__}")


def tangent_projection(grad, pi):
    """Map an ambient gradient on probability tables to simplex-tangent coordinates."""
    return grad - np.sum(pi * grad, axis=1, keepdims=True)


def grad_lambda(env, policy, beta, horizon=None, gamma=None, method="backward", h=1e-5, plan=None):
    """Gradient of the population fitness w.r.t. the policy parameters.

    ``method="backward"`` evaluates ``(1/beta) E_{P_B}[sum_t grad log pi]``
    exactly. ``method="finite_difference"`` uses central differences of
    ``population_fitness``: tableau entries move along the renormalised
    direction, softmax logits move freely.
    """
    if method == "backward":
        table = backward_distribution(enumerate_paths(env, policy, horizon, gamma, plan), beta)
        return _score_expectation(table, table.pb, policy, env) / beta
    if method != "finite_difference":
        raise InvalidInputError(f"unknown method {method!r}")

    def lam(p):
        return population_fitness(enumerate_paths(env, p, horizon, gamma, plan), beta)

    params = np.asarray(policy.params, dtype=float)
    grad = np.zeros_like(params)
    for x, a in np.ndindex(params.shape):
        bumped = []
        for sign in (1.0, -1.0):
            q = params.copy()
            if isinstance(policy, TableauPolicy):
                q[x, a] += sign * h
                q[x] /= q[x].sum()
            else:
                q[x, a] += sign * h
            bumped.append(lam(policy.with_params(q)))
        grad[x, a] = (bumped[0] - bumped[1]) / (2 * h)
    return grad


def expected_ancestral_gradient(env, policy, beta, horizon=None, gamma=None, plan=None):
    """``E_{P_B}[(1/T) sum_t grad log pi(a_t|x_t)]`` -- the mean of the ancestral estimator."""
    table = backward_distribution(enumerate_paths(env, policy, horizon, gamma, plan), beta)
    return _score_expectation(table, table.pb, policy, env) / table.actions.shape[1]


def state_distribution(env, policy, horizon=None, plan=None):
    """``d[t, x] = P_F(x_t = x)`` for ``t = 0..horizon``."""
    horizon = env.horizon if horizon is None else int(horizon)
    succ, x0 = _transitions(env, horizon, plan)
    pi = policy_table(policy, env.n_states)
    d = np.zeros((horizon + 1, env.n_states))
    d[0, x0] = 1.0
    for t in range(horizon):
        np.add.at(d[t + 1], succ[t].ravel(), (d[t][:, None] * pi).ravel())
    return d


def suffix_table(env, policy, t, x, horizon=None, gamma=None, plan=None, prune=False):
    """Histories from state ``x`` at time ``t`` onward, conditioned on ``x_t = x``."""
    horizon = env.horizon if horizon is None else int(horizon)
    if not 0 <= t <= horizon:
        raise DomainError(f"time {t} outside [0, {horizon}]")
    if state_distribution(env, policy, horizon, plan)[t, x] <= 0:
        raise DomainError(f"state {x} is unreachable at time {t}")
    return enumerate_paths(env, policy, horizon, gamma, plan, start_state=x, start_time=t, prune=prune)


def generalized_v(env, policy, t, x, beta, horizon=None, gamma=None, plan=None):
    """``(1/beta) log E_{P_F[.|x_t=x]}[exp(beta R^{t:})]``; zero at the final time."""
    suffix = suffix_table(env, policy, t, x, horizon, gamma, plan, prune=True)
    return population_fitness(suffix, beta)


def value_recursion(env, policy, beta, horizon=None, gamma=None, plan=None):
    """Backward recursion for ``V[t, x]`` over all times and states.

    For ``beta > 0`` it evaluates
    ``exp(beta V_t(x)) = sum_a pi(a|x) exp(beta (gamma^t r(x,a) + V_{t+1}(f_t(x,a))))``;
    for ``beta == 0`` the ordinary expected-return recursion. Independent of
    path enumeration.
    """
    horizon = env.horizon if horizon is None else int(horizon)
    gamma = env.gamma if gamma is None else float(gamma)
    succ, _ = _transitions(env, horizon, plan)
    pi = policy_table(policy, env.n_states)
    v = np.zeros((horizon + 1, env.n_states))
    for t in range(horizon - 1, -1, -1):
        q = gamma**t * env.rewards + v[t + 1][succ[t]]
        if beta == 0:
            v[t] = np.sum(pi * q, axis=1)
        else:
            with np.errstate(divide="ignore"):
                v[t] = logsumexp(beta * q + np.log(pi), axis=1) / beta
    return v


def backward_action_marginal(suffix):
    """``P_B(a_t | x_t)`` obtained by summing the suffix backward distribution over later steps."""
    n_actions = int(suffix.actions[:, 0].max()) + 1
    return np.bincount(suffix.actions[:, 0], weights=suffix.pb, minlength=n_actions)


def bellman_terms(env, policy, beta, horizon=None, gamma=None, plan=None):
    """Both sides of the KL-regularised backward Bellman equation at every reachable ``(t, x)``.

    Returns a list of ``(t, x, lhs, rhs)``. The left side is the generalized V
    from suffix enumeration; the right side uses ``P_B(a|x)`` marginalised
    from that suffix's backward distribution and ``V_{t+1}`` enumerated
    separately.
    """
    horizon = env.horizon if horizon is None else int(horizon)
    gamma = env.gamma if gamma is None else float(gamma)
    succ, _ = _transitions(env, horizon, plan)
    pi = policy_table(policy, env.n_states)
    reach = state_distribution(env, policy, horizon, plan) > 0
    out = []
    for t in range(horizon):
        for x in np.flatnonzero(reach[t]):
            suffix = backward_distribution(
                enumerate_paths(env, policy, horizon, gamma, plan, start_state=x, start_time=t), beta
            )
            lhs = population_fitness(suffix, beta)
            pb_a = backward_action_marginal(suffix)
            rhs = 0.0
            for a in np.flatnonzero(pb_a > 0):
                x_next = succ[t][x, a]
                v_next = 0.0 if t + 1 == horizon else generalized_v(env, policy, t + 1, x_next, beta, horizon, gamma, plan)
                rhs += pb_a[a] * (gamma**t * env.rewards[x, a] + np.log(pi[x, a] / pb_a[a]) / beta + v_next)
            out.append((t, int(x), lhs, rhs))
    return out


def bellman_residual(env, policy, beta, horizon=None, gamma=None, plan=None):
    """Max over reachable ``(t, x)`` of ``|lhs - rhs|`` from ``bellman_terms``."""
    return max(abs(lhs - rhs) for _, _, lhs, rhs in bellman_terms(env, policy, beta, horizon, gamma, plan))


def variational_value(suffix, p, beta):
    """``E_P[R^{t:}] - (1/beta) KL(P || P_F)`` for a distribution ``p`` over ``suffix`` rows."""
    p = np.asarray(p, dtype=float)
    if p.shape != suffix.returns.shape or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise InvalidInputError("p must be a distribution aligned with the suffix table")
    return float(np.dot(p, suffix.returns)) - kl_divergence(p, suffix.pf) / beta


def infinite_population_step(freqs, lambdas, beta):
    """Replicator update ``p'(pi) ∝ exp(beta lambda(pi)) p(pi)``."""
    freqs = np.asarray(freqs, dtype=float)
    if np.any(freqs < 0) or abs(freqs.sum() - 1.0) > 1e-12:
        raise InvalidInputError("freqs must lie on the simplex")
    with np.errstate(divide="ignore"):
        return softmax(beta * np.asarray(lambdas, dtype=float) + np.log(freqs))


def averaged_population_fitness(env, policy, beta, n_plans, rng, horizon=None, gamma=None):
    """Monte-Carlo mean over sampled lifted plans of the exact plan-conditioned fitness.

    Returns ``(estimate, standard_error)``. A deterministic environment has a
    single plan, so the estimate is exact and the error zero.
    """
    horizon = env.horizon if horizon is None else int(horizon)
    if env.is_deterministic:
        return population_fitness(enumerate_paths(env, policy, horizon, gamma), beta), 0.0
    if n_plans < 2:
        raise InvalidInputError("n_plans must be >= 2")
    values = np.array([
        population_fitness(enumerate_paths(env, policy, horizon, gamma, sample_lifted_plan(env, horizon, rng)), beta)
        for _ in range(n_plans)
    ])
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(n_plans))
