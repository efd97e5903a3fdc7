"""MDP core: finite MDP specs, trajectories, returns and lifted transition plans.

Finite MDPs carry a full transition kernel ``kernel[x, a, x']``. A deterministic
MDP is the special case where every kernel row is a point mass, so the same
rollout code serves deterministic and stochastic environments.

Continuous-state environments (cart-pole) are duck-typed: they expose
``gamma``, ``horizon``, ``n_actions``, ``obs_dim``, ``reset_batch(rng, n)`` and
``step_batch(states, actions)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit

from .exceptions import ConfigurationError, InvalidInputError

# Purpose tags for hierarchical seeding: (master_seed, trial, generation, purpose).
PURPOSES = {
    "init": 0,
    "mutation": 1,
    "rollout": 2,
    "selection": 3,
    "plan": 4,
    "reset": 5,
}


def rng_stream(master_seed, *keys):
    """Return a Generator derived from ``master_seed`` and an integer key path.

    Streams with different key paths are statistically independent, and the
    stream for a key path never depends on which other streams were created.
    """
    keys = tuple(PURPOSES[k] if isinstance(k, str) else int(k) for k in keys)
    return np.random.default_rng(np.random.SeedSequence(int(master_seed), spawn_key=keys))


@dataclass(frozen=True, eq=False)
class FiniteMDP:
    """Finite MDP with rewards ``r[x, a]`` and kernel ``T(x' | x, a)``.

    Parameters
    ----------
    rewards : array (n_states, n_actions)
    kernel : array (n_states, n_actions, n_states)
    gamma : discount factor in (0, 1]
    horizon : number of decision steps per episode
    initial : initial-state distribution; defaults to a point mass on state 0
    """

    rewards: np.ndarray
    kernel: np.ndarray
    gamma: float = 0.9
    horizon: int = 30
    initial: Optional[np.ndarray] = None

    def __post_init__(self):
        rewards = np.asarray(self.rewards, dtype=float)
        kernel = np.asarray(self.kernel, dtype=float)
        if rewards.ndim != 2:
            raise ConfigurationError("rewards must be (n_states, n_actions)")
        n_states, n_actions = rewards.shape
        if kernel.shape != (n_states, n_actions, n_states):
            raise ConfigurationError(f"kernel shape {kernel.shape} does not match rewards {rewards.shape}")
        if np.any(kernel < 0) or np.max(np.abs(kernel.sum(axis=2) - 1.0)) > 1e-12:
            raise ConfigurationError("kernel rows must be probability vectors")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigurationError("gamma must lie in (0, 1]", key="gamma")
        if int(self.horizon) < 1:
            raise ConfigurationError("horizon must be >= 1", key="horizon")
        if self.initial is None:
            initial = np.zeros(n_states)
            initial[0] = 1.0
        else:
            initial = np.asarray(self.initial, dtype=float)
            if initial.shape != (n_states,) or abs(initial.sum() - 1.0) > 1e-12 or np.any(initial < 0):
                raise ConfigurationError("initial must be a distribution over states")
        for name, value in (("rewards", rewards), ("kernel", kernel), ("initial", initial)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "horizon", int(self.horizon))

    @classmethod
    def deterministic(cls, next_state, rewards, gamma=0.9, horizon=30, initial_state=0):
        """Build a point-mass-kernel MDP from a successor table ``f[x, a]``."""
        next_state = np.asarray(next_state, dtype=int)
        rewards = np.asarray(rewards, dtype=float)
        n_states = rewards.shape[0]
        kernel = np.zeros(next_state.shape + (n_states,))
        np.put_along_axis(kernel, next_state[..., None], 1.0, axis=2)
        initial = np.zeros(n_states)
        initial[initial_state] = 1.0
        return cls(rewards, kernel, gamma, horizon, initial)

    @property
    def n_states(self):
        return self.rewards.shape[0]

    @property
    def n_actions(self):
        return self.rewards.shape[1]

    @property
    def is_deterministic(self):
        return bool(np.all(self.kernel.max(axis=2) == 1.0)) and bool(self.initial.max() == 1.0)

    def successor_table(self):
        """Successor map ``f[x, a]``; only meaningful for deterministic kernels."""
        if not np.all(self.kernel.max(axis=2) == 1.0):
            raise InvalidInputError("successor_table requires a deterministic kernel")
        return self.kernel.argmax(axis=2)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """State/action/reward history of one episode.

    ``states`` has one more entry than ``actions`` and ``rewards``. For
    continuous environments each state is a vector.
    """

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    terminated_at: Optional[int] = None

    def __post_init__(self):
        states = np.asarray(self.states)
        actions = np.asarray(self.actions, dtype=int)
        rewards = np.asarray(self.rewards, dtype=float)
        if not len(actions) == len(states) - 1 == len(rewards):
            raise InvalidInputError(
                f"inconsistent lengths: states={len(states)} actions={len(actions)} rewards={len(rewards)}"
            )
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "rewards", rewards)

    def __len__(self):
        return len(self.actions)


def discounted_return(trajectory, gamma):
    """Sum of ``gamma**t * r_t`` over the recorded steps."""
    if len(trajectory) == 0:
        raise InvalidInputError("empty trajectory")
    if not 0.0 < gamma <= 1.0:
        raise InvalidInputError("gamma must lie in (0, 1]")
    return float(np.dot(gamma ** np.arange(len(trajectory)), trajectory.rewards))


@dataclass(frozen=True, eq=False)
class LiftedPlan:
    """Initial state plus per-time deterministic transition maps.

    ``maps[t, x, a]`` is the state reached from ``x`` under ``a`` at step ``t``.
    ``maps`` is None for the trivial plan of a deterministic or continuous
    environment, where only the shared initial state matters.
    """

    initial_state: object
    maps: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.maps is not None:
            maps = np.asarray(self.maps, dtype=int)
            maps.setflags(write=False)
            object.__setattr__(self, "maps", maps)

    def next_state(self, t, x, a):
        return int(self.maps[t, x, a])


def _inverse_cdf(probs, u):
    """Sample indices from rows of ``probs`` using uniforms ``u`` (same leading shape)."""
    cdf = np.cumsum(probs, axis=-1)
    u = np.asarray(u)
    idx = np.sum(cdf[..., :-1] <= u[..., None], axis=-1)
    return np.minimum(idx, probs.shape[-1] - 1)


def sample_lifted_plan(env, horizon, rng):
    """Draw one realisation of the lifted MDP for ``horizon`` steps.

    For finite environments every ``(t, x, a)`` gets an independent draw from
    ``T(. | x, a)``. Continuous environments get the trivial plan carrying one
    shared initial state.
    """
    if isinstance(env, FiniteMDP):
        x0 = int(_inverse_cdf(env.initial, rng.random()))
        u = rng.random((horizon, env.n_states, env.n_actions))
        maps = _inverse_cdf(np.broadcast_to(env.kernel, u.shape + (env.n_states,)), u)
        return LiftedPlan(x0, maps)
    return LiftedPlan(env.reset_batch(rng, 1)[0], None)


@dataclass(frozen=True, eq=False)
class BatchTrajectory:
    """Trajectories of ``n`` agents stored as padded arrays.

    Entries past ``lengths[i]`` are padding and must be ignored.
    """

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    lengths: np.ndarray
    terminated: np.ndarray

    def __len__(self):
        return self.actions.shape[0]

    def returns(self, gamma):
        return self.rewards @ (gamma ** np.arange(self.rewards.shape[1]))

    def trajectory(self, i):
        n = int(self.lengths[i])
        return Trajectory(
            self.states[i, : n + 1],
            self.actions[i, :n],
            self.rewards[i, :n],
            n if self.terminated[i] else None,
        )

    def take(self, idx):
        idx = np.asarray(idx)
        return BatchTrajectory(
            self.states[idx], self.actions[idx], self.rewards[idx], self.lengths[idx], self.terminated[idx]
        )


def stack_plans(plans):
    """Combine independent finite-env plans into one whose row ``i`` drives agent ``i``.

    The stacked plan has ``maps`` of shape ``(n, T, S, A)`` and one initial
    state per agent.
    """
    return LiftedPlan(np.array([p.initial_state for p in plans]), np.stack([p.maps for p in plans]))


@dataclass(frozen=True, eq=False)
class RolloutNoise:
    """Pre-drawn randomness for a batch of rollouts.

    Row ``i`` belongs to agent ``i``, so any partition of the agents into
    chunks reproduces the same trajectories.
    """

    init_states: np.ndarray
    uniforms: np.ndarray

    def rows(self, sl):
        return RolloutNoise(self.init_states[sl], self.uniforms[sl])


def draw_rollout_noise(env, n, horizon, rng, plan=None):
    if isinstance(env, FiniteMDP):
        u0 = rng.random(n)
        uniforms = rng.random((n, horizon, 2))
        if plan is not None:
            init = np.broadcast_to(np.asarray(plan.initial_state, dtype=int), (n,)).copy()
        else:
            init = _inverse_cdf(np.broadcast_to(env.initial, (n, env.n_states)), u0)
        return RolloutNoise(init, uniforms)
    init = env.reset_batch(rng, n)
    uniforms = rng.random((n, horizon))
    if plan is not None:
        init = np.broadcast_to(np.asarray(plan.initial_state, dtype=float), init.shape).copy()
    return RolloutNoise(init, uniforms)


def rollout_batch(env, policies, noise, plan=None):
    """Simulate a batch of agents.

    Parameters
    ----------
    env : FiniteMDP or continuous environment
    policies : for finite envs an array ``(n, n_states, n_actions)`` of action
        probabilities; for continuous envs an array ``(n, obs_dim)`` of
        linear-sigmoid weights.
    noise : RolloutNoise with ``n`` rows
    plan : optional LiftedPlan shared by all agents

    Returns
    -------
    BatchTrajectory
    """
    policies = np.asarray(policies, dtype=float)
    if isinstance(env, FiniteMDP):
        return _rollout_finite(env, policies, noise, plan)
    return _rollout_continuous(env, policies, noise)


def _rollout_finite(env, probs, noise, plan):
    n, horizon = noise.uniforms.shape[:2]
    if probs.shape[1:] != (env.n_states, env.n_actions) or probs.shape[0] != n:
        raise ConfigurationError(f"policy table shape {probs.shape} does not fit env/noise")
    if plan is not None and plan.maps is not None and plan.maps.shape[-3] < horizon:
        raise ConfigurationError("lifted plan shorter than horizon")
    states = np.empty((n, horizon + 1), dtype=int)
    actions = np.empty((n, horizon), dtype=int)
    rewards = np.empty((n, horizon))
    rows = np.arange(n)
    x = np.asarray(noise.init_states, dtype=int)
    states[:, 0] = x
    for t in range(horizon):
        a = _inverse_cdf(probs[rows, x], noise.uniforms[:, t, 0])
        rewards[:, t] = env.rewards[x, a]
        if plan is not None and plan.maps is not None:
            x = plan.maps[rows, t, x, a] if plan.maps.ndim == 4 else plan.maps[t, x, a]
        else:
            x = _inverse_cdf(env.kernel[x, a], noise.uniforms[:, t, 1])
        actions[:, t] = a
        states[:, t + 1] = x
    return BatchTrajectory(states, actions, rewards, np.full(n, horizon), np.zeros(n, dtype=bool))


def _rollout_continuous(env, thetas, noise):
    n, horizon = noise.uniforms.shape
    if thetas.shape != (n, env.obs_dim):
        raise ConfigurationError(f"policy weights shape {thetas.shape} does not fit obs_dim={env.obs_dim}")
    states = np.empty((n, horizon + 1, env.obs_dim))
    actions = np.zeros((n, horizon), dtype=int)
    rewards = np.zeros((n, horizon))
    lengths = np.full(n, horizon)
    terminated = np.zeros(n, dtype=bool)
    alive = np.ones(n, dtype=bool)
    x = np.array(noise.init_states, dtype=float)
    states[:, 0] = x
    for t in range(horizon):
        # pi(a_left | x) = sigmoid(theta . x); action 0 is "left"
        p_left = expit(np.einsum("ij,ij->i", thetas, x))
        a = (noise.uniforms[:, t] >= p_left).astype(int)
        nxt, r, done = env.step_batch(x, a)
        nxt = np.where(alive[:, None], nxt, x)
        actions[:, t] = np.where(alive, a, 0)
        rewards[:, t] = np.where(alive, r, 0.0)
        states[:, t + 1] = nxt
        ended = alive & done
        lengths[ended] = t + 1
        terminated |= ended
        alive &= ~done
        x = nxt
        if not alive.any():
            states[:, t + 2 :] = x[:, None, :]
            break
    return BatchTrajectory(states, actions, rewards, lengths, terminated)


def rollout(policy, env, horizon=None, rng=None, plan=None):
    """Run one episode of ``policy`` in ``env``.

    Transitions come from ``plan`` when given (common random numbers across
    agents sharing the plan) and from ``rng`` otherwise. Repeated calls with an
    identically seeded ``rng`` and the same plan replay the same trajectory.
    """
    horizon = env.horizon if horizon is None else int(horizon)
    rng = np.random.default_rng() if rng is None else rng
    if isinstance(env, FiniteMDP):
        if getattr(policy, "n_states", None) != env.n_states or policy.n_actions != env.n_actions:
            raise ConfigurationError("policy state/action space does not match env")
        table = np.array([policy.action_distribution(x) for x in range(env.n_states)])[None]
    else:
        theta = np.asarray(getattr(policy, "theta", None) if hasattr(policy, "theta") else [], dtype=float)
        if theta.shape != (env.obs_dim,) or policy.n_actions != env.n_actions:
            raise ConfigurationError("policy does not match the environment's observation/action space")
        table = theta[None]
    noise = draw_rollout_noise(env, 1, horizon, rng, plan)
    return rollout_batch(env, table, noise, plan).trajectory(0)
