"""Concrete environments: the two-state tableau MDP, cart-pole and a quadratic black box."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError, InvalidInputError
from .mdp import FiniteMDP

# two-state env: action 0 switches state, action 1 stays
SWITCH, STAY = 0, 1
# cart-pole actions
LEFT, RIGHT = 0, 1


def two_state_env(gamma=0.9, horizon=30):
    """Two states, reward 1 while in state 0, start in state 0."""
    next_state = np.array([[1, 0], [0, 1]])
    rewards = np.array([[1.0, 1.0], [0.0, 0.0]])
    return FiniteMDP.deterministic(next_state, rewards, gamma=gamma, horizon=horizon, initial_state=0)


@dataclass(frozen=True)
class CartPoleEnv:
    """Cart-pole with explicit Euler integration.

    Constants and termination thresholds follow the classic control benchmark.
    State is ``(x, x_dot, theta, theta_dot)``; reward is 1 for every step taken,
    including the terminating one, so the undiscounted return is the episode
    length.
    """

    gravity: float = 9.8
    masscart: float = 1.0
    masspole: float = 0.1
    length: float = 0.5  # half the pole length
    force_mag: float = 10.0
    tau: float = 0.02
    theta_threshold: float = 12 * 2 * np.pi / 360
    x_threshold: float = 2.4
    horizon: int = 500
    gamma: float = 1.0
    init_bound: float = 0.05

    n_actions = 2
    obs_dim = 4

    @property
    def total_mass(self):
        return self.masspole + self.masscart

    @property
    def polemass_length(self):
        return self.masspole * self.length

    def step_batch(self, states, actions):
        states = np.asarray(states, dtype=float)
        if not np.all(np.isfinite(states)):
            raise FloatingPointError("non-finite cart-pole state")
        x, x_dot, theta, theta_dot = states.T
        force = np.where(np.asarray(actions) == RIGHT, self.force_mag, -self.force_mag)
        costheta = np.cos(theta)
        sintheta = np.sin(theta)
        temp = (force + self.polemass_length * theta_dot**2 * sintheta) / self.total_mass
        thetaacc = (self.gravity * sintheta - costheta * temp) / (
            self.length * (4.0 / 3.0 - self.masspole * costheta**2 / self.total_mass)
        )
        xacc = temp - self.polemass_length * thetaacc * costheta / self.total_mass
        nxt = np.empty_like(states)
        nxt[:, 0] = x + self.tau * x_dot
        nxt[:, 1] = x_dot + self.tau * xacc
        nxt[:, 2] = theta + self.tau * theta_dot
        nxt[:, 3] = theta_dot + self.tau * thetaacc
        done = (np.abs(nxt[:, 0]) > self.x_threshold) | (np.abs(nxt[:, 2]) > self.theta_threshold)
        return nxt, np.ones(len(nxt)), done

    def step(self, state, action):
        if action not in (LEFT, RIGHT):
            raise InvalidInputError(f"action must be {LEFT} (left) or {RIGHT} (right)")
        nxt, reward, done = self.step_batch(np.asarray(state, dtype=float)[None], np.array([action]))
        return nxt[0], float(reward[0]), bool(done[0])

    def reset_batch(self, rng, n):
        return rng.uniform(-self.init_bound, self.init_bound, size=(n, self.obs_dim))

    def reset(self, rng):
        return self.reset_batch(rng, 1)[0]


def cartpole_step(state, action, env=None):
    return (env or CartPoleEnv()).step(state, action)


def cartpole_reset(rng, env=None):
    return (env or CartPoleEnv()).reset(rng)


@dataclass(frozen=True)
class QuadraticBlackBox:
    """Objective ``R(theta) = -||theta||^2``; its Gaussian smoothing has gradient ``-2 theta``."""

    dim: int = 2

    def evaluate(self, theta):
        theta = np.asarray(theta, dtype=float)
        return -np.sum(theta**2, axis=-1)

    def smoothed_gradient(self, theta, sigma=None):
        return -2.0 * np.asarray(theta, dtype=float)


def make_env(name, gamma=None, horizon=None):
    """Look up an environment by its harness name."""
    if name == "two_state":
        return two_state_env(gamma=0.9 if gamma is None else gamma, horizon=30 if horizon is None else horizon)
    if name == "cartpole":
        kwargs = {}
        if gamma is not None:
            kwargs["gamma"] = gamma
        if horizon is not None:
            kwargs["horizon"] = int(horizon)
        return CartPoleEnv(**kwargs)
    if name == "quadratic":
        return QuadraticBlackBox()
    raise ConfigurationError(f"unknown environment {name!r}", key="env")
