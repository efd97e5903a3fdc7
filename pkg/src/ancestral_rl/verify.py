"""Identity suite: exact-enumeration checks of the population-fitness theory.

Each check returns ``{"check", "residual", "tolerance", "pass"}`` where
``residual`` is the worst value seen over the instances the check draws.
"""
from __future__ import annotations

import numpy as np

from .environments import QuadraticBlackBox, two_state_env
from .mdp import FiniteMDP, Trajectory, draw_rollout_noise, rollout_batch, sample_lifted_plan, stack_plans
from .oracle import (
    backward_distribution,
    bellman_residual,
    enumerate_paths,
    expected_ancestral_gradient,
    expected_return,
    generalized_v,
    grad_lambda,
    infinite_population_step,
    population_fitness,
    state_distribution,
    suffix_table,
    value_recursion,
    variational_value,
)
from .policy import (
    TableauPolicy,
    empirical_parent_policy,
    mixture_update,
    natural_gradient_tableau,
    natural_gradient_tableau_batch,
    perturb_params,
)
from .algorithms import zoo_gradient

BETAS = (0.1, 1.0, 5.0)


def _result(check, residual, tolerance, ok=None):
    residual = float(residual)
    ok = residual <= tolerance if ok is None else ok
    return {"check": check, "residual": residual, "tolerance": float(tolerance), "pass": bool(ok)}


def random_instance(rng, max_states=3, max_horizon=6, n_actions=2, min_prob=0.05):
    """Random deterministic MDP with a strictly positive tableau policy and a beta from ``BETAS``."""
    n_states = int(rng.integers(1, max_states + 1))
    horizon = int(rng.integers(1, max_horizon + 1))
    env = FiniteMDP.deterministic(
        rng.integers(0, n_states, (n_states, n_actions)),
        rng.uniform(-1.0, 1.0, (n_states, n_actions)),
        gamma=float(rng.uniform(0.5, 1.0)),
        horizon=horizon,
        initial_state=0,
    )
    probs = min_prob + (1 - n_actions * min_prob) * rng.dirichlet(np.ones(n_actions), n_states)
    beta = float(BETAS[rng.integers(len(BETAS))])
    return env, TableauPolicy(probs), beta


def check_theorem2(seed=0, n_instances=24):
    rng = np.random.default_rng([seed, 2])
    worst = max(bellman_residual(*random_instance(rng)) for _ in range(n_instances))
    return [_result("theorem2.bellman_residual", worst, 1e-10)]


def theorem1_stats(env, policy, beta):
    """Cosine, ratio spread and scaled relative error between ``E_{P_B}[ancestral]`` and FD ``grad lambda``."""
    anc = expected_ancestral_gradient(env, policy, beta).ravel()
    fd = grad_lambda(env, policy, beta, method="finite_difference").ravel()
    cosine = anc @ fd / (np.linalg.norm(anc) * np.linalg.norm(fd))
    big = np.abs(fd) >= 1e-2 * np.abs(fd).max()
    ratios = anc[big] / fd[big]
    spread = (ratios.max() - ratios.min()) / abs(ratios.mean())
    scaled = anc * env.horizon / beta
    rel = np.linalg.norm(scaled - fd) / np.linalg.norm(fd)
    return cosine, spread, rel


def check_theorem1(seed=0, n_instances=24):
    rng = np.random.default_rng([seed, 1])
    cos_gap = spread = rel = 0.0
    done = 0
    while done < n_instances:
        env, policy, beta = random_instance(rng)
        if np.linalg.norm(grad_lambda(env, policy, beta)) < 1e-6:
            continue  # fitness flat in the policy; direction undefined
        c, s, r = theorem1_stats(env, policy, beta)
        cos_gap, spread, rel = max(cos_gap, 1 - c), max(spread, s), max(rel, r)
        done += 1
    return [
        _result("theorem1.one_minus_cosine", cos_gap, 1e-8),
        _result("theorem1.ratio_spread", spread, 1e-6),
        _result("theorem1.scaled_relative_error", rel, 1e-6),
    ]


def check_beta_limit(seed=0, n_instances=20, beta=1e-5):
    rng = np.random.default_rng([seed, 3])
    worst = 0.0
    for _ in range(n_instances):
        env, policy, _ = random_instance(rng)
        table = enumerate_paths(env, policy)
        worst = max(worst, abs(population_fitness(table, beta) - expected_return(table)))
    return [_result("beta_limit.abs_lambda_minus_J", worst, 1e-4)]


def two_state_policies():
    """Optimal, always-switch and uniform tableaux on the two-state env."""
    return [
        TableauPolicy(np.array([[0.0, 1.0], [1.0, 0.0]])),
        TableauPolicy(np.array([[1.0, 0.0], [1.0, 0.0]])),
        TableauPolicy.uniform(2, 2),
    ]


def check_lemma1(steps=200, betas=(0.5, 1.0, 2.0)):
    env = two_state_env()
    out = []
    for beta in betas:
        # the uniform policy has 2**30 paths; the backward recursion gives lambda = V_0(x0)
        lambdas = [value_recursion(env, p, beta)[0, 0] for p in two_state_policies()]
        best = int(np.argmax(lambdas))
        p = np.full(len(lambdas), 1.0 / len(lambdas))
        monotone = True
        for _ in range(steps):
            nxt = infinite_population_step(p, lambdas, beta)
            monotone &= nxt[best] >= p[best]
            p = nxt
        distinct = len(set(np.round(lambdas, 12))) == len(lambdas)
        gap = 1.0 - p[best]
        out.append(_result(f"lemma1.beta={beta:g}.one_minus_max_freq", gap, 1e-6, gap <= 1e-6 and monotone and distinct))
    return out


def check_variational(seed=0, n_instances=20, n_perturb=100):
    rng = np.random.default_rng([seed, 4])
    eq_gap = excess = 0.0
    for _ in range(n_instances):
        env, policy, beta = random_instance(rng)
        reach = state_distribution(env, policy) > 0
        t = int(rng.integers(env.horizon))
        x = int(rng.choice(np.flatnonzero(reach[t])))
        suffix = backward_distribution(suffix_table(env, policy, t, x, prune=True), beta)
        v = generalized_v(env, policy, t, x, beta)
        eq_gap = max(eq_gap, abs(variational_value(suffix, suffix.pb, beta) - v))
        for _ in range(n_perturb):
            w = rng.uniform()
            q = (1 - w) * suffix.pb + w * rng.dirichlet(np.ones(len(suffix)))
            excess = max(excess, variational_value(suffix, q, beta) - v)
    return [
        _result("variational.value_at_pb_minus_v", eq_gap, 1e-10),
        _result("variational.max_excess_over_v", excess, 1e-12),
    ]


def random_parent(rng, n_states, n_actions, max_len=10):
    length = int(rng.integers(1, max_len + 1))
    states = rng.integers(0, n_states, length + 1)
    return Trajectory(states, rng.integers(0, n_actions, length), np.zeros(length))


def check_natgrad(seed=0, n_pairs=1000):
    rng = np.random.default_rng([seed, 5])
    worst = worst_batch = 0.0
    for _ in range(n_pairs):
        n_states, n_actions = int(rng.integers(1, 4)), int(rng.integers(2, 4))
        policy = TableauPolicy(rng.dirichlet(np.ones(n_actions), n_states))
        traj = random_parent(rng, n_states, n_actions)
        alpha = float(rng.uniform(0, 2))
        natural = natural_gradient_tableau(policy, traj, alpha)
        pb = empirical_parent_policy(traj, n_states, n_actions)
        mixed = mixture_update(policy, pb, alpha * pb.state_frequency)
        worst = max(worst, np.abs(natural.probs - mixed.probs).max())
        batch = natural_gradient_tableau_batch(
            policy.probs[None], traj.states[None], traj.actions[None], np.array([len(traj)]), alpha
        )[0]
        worst_batch = max(worst_batch, np.abs(batch - natural.probs).max())
    return [
        _result("natgrad.natural_vs_mixture", worst, 1e-10),
        _result("natgrad.batch_vs_single", worst_batch, 1e-12),
    ]


def check_zoo_unbiased(seed=0, n=100_000, sigma=0.1, theta=(1.0, 0.0)):
    box = QuadraticBlackBox(dim=len(theta))
    theta = np.asarray(theta, dtype=float)
    rng = np.random.default_rng([seed, 6])
    perturbed, eps = perturb_params(np.broadcast_to(theta, (n, len(theta))), sigma, rng)
    returns = box.evaluate(perturbed)
    per_sample = returns[:, None] * eps / sigma
    mean = zoo_gradient(returns, eps, sigma)
    se = per_sample.std(axis=0, ddof=1) / np.sqrt(n)
    z = np.abs(mean - box.smoothed_gradient(theta)) / se
    return [_result("zoo_unbiased.max_abs_z", z.max(), 3.0)]


def stochastic_two_state(horizon=3):
    kernel = np.array([[[0.3, 0.7], [0.8, 0.2]], [[0.5, 0.5], [0.1, 0.9]]])
    return FiniteMDP(np.array([[1.0, 0.0], [0.0, 1.0]]), kernel, gamma=1.0, horizon=horizon)


def path_codes(batch):
    """Integer code per trajectory from its state and action sequences."""
    seq = np.column_stack([batch.states, batch.actions])
    radix = seq.max() + 1
    return seq @ (radix ** np.arange(seq.shape[1]))


def lifted_vs_live(env, probs, n, rng):
    """Path codes of ``n`` independent lifted-plan rollouts and ``n`` live-rng rollouts."""
    live_rng, plan_rng, lifted_rng = rng.spawn(3)
    table = np.broadcast_to(probs, (n,) + probs.shape)
    live = rollout_batch(env, table, draw_rollout_noise(env, n, env.horizon, live_rng))
    plan = stack_plans([sample_lifted_plan(env, env.horizon, plan_rng) for _ in range(n)])
    lifted = rollout_batch(env, table, draw_rollout_noise(env, n, env.horizon, lifted_rng, plan), plan)
    return path_codes(lifted), path_codes(live)


def total_variation(a, b):
    keys = np.union1d(a, b)
    fa = np.array([np.mean(a == k) for k in keys])
    fb = np.array([np.mean(b == k) for k in keys])
    return 0.5 * np.abs(fa - fb).sum()


def adds_violations(env, n_agents, rng):
    """Count ``(t, x, a)`` groups whose agents disagree on the next state under one shared plan."""
    plan_rng, pol_rng, noise_rng = rng.spawn(3)
    plan = sample_lifted_plan(env, env.horizon, plan_rng)
    probs = pol_rng.dirichlet(np.ones(env.n_actions), (n_agents, env.n_states))
    batch = rollout_batch(env, probs, draw_rollout_noise(env, n_agents, env.horizon, noise_rng, plan), plan)
    bad = 0
    for t in range(env.horizon):
        key = batch.states[:, t] * env.n_actions + batch.actions[:, t]
        for k in np.unique(key):
            bad += len(np.unique(batch.states[key == k, t + 1])) > 1
    return bad


def check_lifted(seed=0, n=100_000):
    env = stochastic_two_state()
    rng = np.random.default_rng([seed, 7])
    lifted, live = lifted_vs_live(env, np.full((2, 2), 0.5), n, rng)
    return [
        _result("lifted.path_tv_distance", total_variation(lifted, live), 0.02),
        _result("lifted.adds_violations", adds_violations(env, 1000, rng), 0),
    ]


SUITES = {
    "theorem1": check_theorem1,
    "theorem2": check_theorem2,
    "lemma1": check_lemma1,
    "variational": check_variational,
    "lifted": check_lifted,
    "natgrad": check_natgrad,
    "zoo_unbiased": check_zoo_unbiased,
    "beta_limit": check_beta_limit,
}


def run_suite(name):
    """Run one suite (or ``"all"``) and return the list of check results."""
    if name == "all":
        return [r for fn in SUITES.values() for r in fn()]
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from all, {', '.join(SUITES)}")
    return SUITES[name]()
