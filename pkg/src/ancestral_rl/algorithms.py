"""Population optimisers: ZOO, POGA and ancestral reinforcement learning (ARL).

Every iteration takes one ``numpy.random.Generator`` and spawns independent
child streams per purpose (mutation, plan, rollout, selection). All random
numbers for a generation are drawn as whole-population blocks before any
agent is simulated, so results do not depend on how agents are split across
workers.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import softmax

from .environments import QuadraticBlackBox
from .exceptions import ConfigurationError, InvalidInputError
from .mdp import BatchTrajectory, FiniteMDP, draw_rollout_noise, rollout_batch, sample_lifted_plan
from .policy import (
    TableauPolicy,
    natural_gradient_tableau,
    natural_gradient_tableau_batch,
    sigmoid_ancestral_gradient_batch,
)

ALGORITHMS = ("zoo", "poga", "arl")


@dataclass(frozen=True)
class HyperParams:
    """Selection strength ``beta``, learning rate ``alpha``, noise scale ``sigma``.

    Zero values are accepted so that degenerate limits (no selection, no
    mutation, no learning) can be run explicitly.
    """

    beta: float = 1.0
    alpha: float = 0.1
    sigma: float = 0.05
    pop_size: int = 1000
    generations: int = 200
    arl_mutation: bool = False
    init_scale: float = 0.5

    def __post_init__(self):
        for name in ("beta", "alpha", "sigma", "init_scale"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ConfigurationError(f"{name} must be a finite non-negative number, got {value}", key=name)
        if int(self.pop_size) < 2:
            raise ConfigurationError("pop_size must be >= 2", key="pop_size")
        if int(self.generations) < 1:
            raise ConfigurationError("generations must be >= 1", key="generations")


@dataclass(frozen=True, eq=False)
class Population:
    """Agents of one generation.

    ``params[i]`` is agent ``i``'s parameter block (a probability table for
    finite environments, a weight vector for cart-pole). ``parent_index``,
    ``returns`` and ``parent_traj`` describe the previous generation: agent
    ``i`` descends from evaluated agent ``parent_index[i]``, whose episode is
    ``parent_traj`` row ``i`` and whose return was ``returns[parent_index[i]]``.
    """

    params: np.ndarray
    generation: int = 0
    parent_index: Optional[np.ndarray] = None
    returns: Optional[np.ndarray] = None
    parent_traj: Optional[BatchTrajectory] = None

    def __len__(self):
        return len(self.params)


@dataclass(frozen=True)
class GenerationResult:
    generation: int
    best_return: float
    mean_return: float


def _streams(rng):
    mutation, plan, rollout, selection = rng.spawn(4)
    return {"mutation": mutation, "plan": plan, "rollout": rollout, "selection": selection}


def fitness_weights(returns, beta):
    """Normalised fitness ``exp(beta * R_i)``, computed after subtracting ``max R``."""
    returns = np.asarray(returns, dtype=float)
    if returns.size == 0:
        raise InvalidInputError("no returns")
    if not np.all(np.isfinite(returns)):
        raise InvalidInputError("returns must be finite")
    w = np.exp(beta * (returns - returns.max()))
    return w / w.sum()


def select(weights, n_draws, rng):
    """Draw ``n_draws`` parent indices i.i.d. with probabilities ``weights``."""
    return rng.choice(len(weights), size=n_draws, replace=True, p=weights)


def evaluate_population(env, policies, rng, plan=None, jobs=1):
    """Run one episode per agent and return ``(returns, trajectories)``.

    ``policies`` rows are probability tables (finite env), sigmoid weights
    (cart-pole) or raw parameters (black box, in which case ``trajectories`` is
    None).
    """
    if isinstance(env, QuadraticBlackBox):
        return np.asarray(env.evaluate(policies), dtype=float), None
    n = len(policies)
    noise = draw_rollout_noise(env, n, env.horizon, rng, plan)
    jobs = max(1, min(int(jobs), n))
    if jobs == 1:
        traj = rollout_batch(env, policies, noise, plan)
    else:
        bounds = np.linspace(0, n, jobs + 1).astype(int)
        slices = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(lambda sl: rollout_batch(env, policies[sl], noise.rows(sl), plan), slices))
        traj = BatchTrajectory(
            *(np.concatenate([getattr(p, f) for p in parts]) for f in ("states", "actions", "rewards", "lengths", "terminated"))
        )
    return traj.returns(env.gamma), traj


def zoo_gradient(returns, noise, sigma):
    """``(1 / (N sigma)) * sum_i R_i eps_i``."""
    returns = np.asarray(returns, dtype=float)
    return np.tensordot(returns, noise, axes=1) / (len(returns) * sigma)


def zoo_iteration(master_params, env, hp, rng, plan=None, jobs=1):
    """One ZOO step from ``master_params``.

    For finite environments the master parameters are softmax logits
    ``(n_states, n_actions)``; otherwise they are used directly.

    Returns
    -------
    new_params, best_return, diagnostics (dict with ``gradient``, ``returns``)
    """
    if hp.sigma <= 0:
        raise ConfigurationError("ZOO requires sigma > 0", key="sigma")
    streams = _streams(rng)
    master = np.asarray(master_params, dtype=float)
    eps = streams["mutation"].standard_normal((hp.pop_size,) + master.shape)
    perturbed = master + hp.sigma * eps
    policies = softmax(perturbed, axis=-1) if isinstance(env, FiniteMDP) else perturbed
    returns, _ = evaluate_population(env, policies, streams["rollout"], plan, jobs)
    grad = zoo_gradient(returns, eps, hp.sigma)
    diagnostics = {"gradient": grad, "returns": returns, "mean_return": float(returns.mean())}
    return master + hp.alpha * grad, float(returns.max()), diagnostics


def mutate(env, params, sigma, rng):
    """Gaussian mutation; probability tables are perturbed in log space and renormalised."""
    eps = rng.standard_normal(params.shape)
    if isinstance(env, FiniteMDP):
        with np.errstate(divide="ignore"):
            logits = np.log(params)
        return softmax(logits + sigma * eps, axis=-1)
    return params + sigma * eps


def _select_next(pop, candidates, returns, traj, hp, rng):
    idx = select(fitness_weights(returns, hp.beta), len(candidates), rng)
    return Population(
        params=candidates[idx],
        generation=pop.generation + 1,
        parent_index=idx,
        returns=returns,
        parent_traj=None if traj is None else traj.take(idx),
    )


def poga_iteration(pop, env, hp, rng, plan=None, jobs=1):
    """Mutate every agent, evaluate, and resample proportionally to fitness."""
    streams = _streams(rng)
    mutated = mutate(env, pop.params, hp.sigma, streams["mutation"])
    returns, traj = evaluate_population(env, mutated, streams["rollout"], plan, jobs)
    return _select_next(pop, mutated, returns, traj, hp, streams["selection"])


def ancestral_gradient(policy, parent_traj):
    """``(1/T) sum_t grad log pi(a_t | x_t)`` along the parent's episode."""
    if len(parent_traj) == 0:
        return np.zeros_like(np.asarray(policy.params, dtype=float))
    grad = sum(
        policy.log_prob_grad(x, a) for x, a in zip(_decision_states(parent_traj), parent_traj.actions)
    )
    return grad / len(parent_traj)


def _decision_states(traj):
    states = traj.states[:-1]
    return states.astype(int) if states.ndim == 1 else states


def ancestral_learning(policy, parent_traj, alpha):
    """Move ``policy`` towards repeating the parent's actions.

    Tableau policies take the natural-gradient step (a row-wise mixture with the
    parent's action frequencies); other families take a plain gradient step.
    """
    if isinstance(policy, TableauPolicy):
        return natural_gradient_tableau(policy, parent_traj, alpha)
    return policy.with_params(policy.params + alpha * ancestral_gradient(policy, parent_traj))


def ancestral_learning_batch(env, params, parent_traj, alpha):
    if isinstance(env, FiniteMDP):
        return natural_gradient_tableau_batch(
            params, parent_traj.states, parent_traj.actions, parent_traj.lengths, alpha
        )
    grad = sigmoid_ancestral_gradient_batch(params, parent_traj.states, parent_traj.actions, parent_traj.lengths)
    return params + alpha * grad


def arl_iteration(pop, env, hp, rng, plan=None, jobs=1):
    """Learn from the parent's episode (skipped at generation 0), evaluate, select."""
    streams = _streams(rng)
    params = pop.params
    if pop.generation > 0 and pop.parent_traj is not None and hp.alpha > 0:
        params = ancestral_learning_batch(env, params, pop.parent_traj, hp.alpha)
    if hp.arl_mutation:
        params = mutate(env, params, hp.sigma, streams["mutation"])
    returns, traj = evaluate_population(env, params, streams["rollout"], plan, jobs)
    return _select_next(pop, params, returns, traj, hp, streams["selection"])


def initial_params(env, hp, rng, algorithm):
    """Starting parameters: uniform tables for finite envs, N(0, init_scale^2) weights otherwise.

    ZOO gets a single master parameter block; POGA and ARL get one block per agent.
    """
    if isinstance(env, FiniteMDP):
        if algorithm == "zoo":
            return np.zeros((env.n_states, env.n_actions))
        return np.full((hp.pop_size, env.n_states, env.n_actions), 1.0 / env.n_actions)
    dim = env.dim if isinstance(env, QuadraticBlackBox) else env.obs_dim
    if algorithm == "zoo":
        return hp.init_scale * rng.standard_normal(dim)
    return hp.init_scale * rng.standard_normal((hp.pop_size, dim))


def run_algorithm(algorithm, env, hp, rng_for, lifted_plan=False, jobs=1):
    """Iterate ``algorithm`` for ``hp.generations`` generations.

    ``rng_for(generation)`` must return the Generator for that generation and
    ``rng_for("init")`` the one used for initial parameters. Yields one
    ``GenerationResult`` per generation.
    """
    if algorithm not in ALGORITHMS:
        raise ConfigurationError(f"unknown algorithm {algorithm!r}", key="algorithm")
    params = initial_params(env, hp, rng_for("init"), algorithm)
    pop = None if algorithm == "zoo" else Population(params)
    step = {"poga": poga_iteration, "arl": arl_iteration}.get(algorithm)
    for n in range(hp.generations):
        rng = rng_for(n)
        plan = None
        if lifted_plan and not isinstance(env, QuadraticBlackBox):
            plan = sample_lifted_plan(env, env.horizon, rng.spawn(1)[0])
        if algorithm == "zoo":
            params, best, diag = zoo_iteration(params, env, hp, rng, plan, jobs)
            yield GenerationResult(n, best, diag["mean_return"])
        else:
            pop = step(pop, env, hp, rng, plan, jobs)
            yield GenerationResult(n, float(pop.returns.max()), float(pop.returns.mean()))
