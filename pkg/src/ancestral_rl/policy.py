"""Parametric policies and parent-imitation updates.

Three families are provided:

* ``TableauPolicy`` -- the parameters are the action probabilities themselves.
* ``SoftmaxTableauPolicy`` -- unconstrained logits per (state, action); used
  where additive Gaussian perturbations are applied (ZOO, POGA mutation).
* ``LinearSigmoidPolicy`` -- two actions, ``pi(left | x) = sigmoid(theta . x)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit, softmax

from .exceptions import InvalidInputError, SingularGradientError


@dataclass(frozen=True, eq=False)
class TableauPolicy:
    probs: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float)
        if probs.ndim != 2:
            raise InvalidInputError("tableau must be (n_states, n_actions)")
        if np.any(probs < 0) or np.max(np.abs(probs.sum(axis=1) - 1.0)) > 1e-12:
            raise InvalidInputError("tableau rows must lie on the simplex")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    family = "tableau"

    @classmethod
    def uniform(cls, n_states, n_actions):
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    @property
    def n_states(self):
        return self.probs.shape[0]

    @property
    def n_actions(self):
        return self.probs.shape[1]

    @property
    def params(self):
        return self.probs

    def action_distribution(self, x):
        if not 0 <= x < self.n_states:
            raise InvalidInputError(f"state {x} out of range")
        return self.probs[x].copy()

    def log_prob_grad(self, x, a):
        """Gradient of ``log pi(a|x)`` w.r.t. the probability table: ``1/pi(a|x)`` at ``(x, a)``."""
        p = self.action_distribution(x)[a]
        if p == 0.0:
            raise SingularGradientError(f"pi({a}|{x}) = 0")
        grad = np.zeros_like(self.probs)
        grad[x, a] = 1.0 / p
        return grad

    def with_params(self, probs):
        return TableauPolicy(probs)


@dataclass(frozen=True, eq=False)
class SoftmaxTableauPolicy:
    logits: np.ndarray

    def __post_init__(self):
        logits = np.array(self.logits, dtype=float)
        if logits.ndim != 2:
            raise InvalidInputError("logits must be (n_states, n_actions)")
        logits.setflags(write=False)
        object.__setattr__(self, "logits", logits)

    family = "softmax_tableau"

    @property
    def n_states(self):
        return self.logits.shape[0]

    @property
    def n_actions(self):
        return self.logits.shape[1]

    @property
    def params(self):
        return self.logits

    def action_distribution(self, x):
        if not 0 <= x < self.n_states:
            raise InvalidInputError(f"state {x} out of range")
        return softmax(self.logits[x])

    def log_prob_grad(self, x, a):
        grad = np.zeros_like(self.logits)
        grad[x] = -self.action_distribution(x)
        grad[x, a] += 1.0
        return grad

    def to_tableau(self):
        return TableauPolicy(softmax(self.logits, axis=1))

    def with_params(self, logits):
        return SoftmaxTableauPolicy(logits)


@dataclass(frozen=True, eq=False)
class LinearSigmoidPolicy:
    theta: np.ndarray

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float)
        if theta.ndim != 1:
            raise InvalidInputError("theta must be a vector")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    family = "linear_sigmoid"
    n_actions = 2

    @property
    def params(self):
        return self.theta

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != self.theta.shape:
            raise InvalidInputError(f"observation shape {x.shape} != {self.theta.shape}")
        return x

    def action_distribution(self, x):
        p_left = float(expit(self.theta @ self._check(x)))
        return np.array([p_left, 1.0 - p_left])

    def log_prob(self, x, a):
        z = self.theta @ self._check(x)
        return float(log_expit(z) if a == 0 else log_expit(-z))

    def log_prob_grad(self, x, a):
        x = self._check(x)
        p_left = expit(self.theta @ x)
        if a == 0:
            if p_left == 0.0:
                raise SingularGradientError("pi(left|x) underflowed to 0")
            return (1.0 - p_left) * x
        if p_left == 1.0:
            raise SingularGradientError("pi(right|x) underflowed to 0")
        return -p_left * x

    def with_params(self, theta):
        return LinearSigmoidPolicy(theta)


_FAMILIES = {
    "tableau": (TableauPolicy, "probs"),
    "softmax_tableau": (SoftmaxTableauPolicy, "logits"),
    "linear_sigmoid": (LinearSigmoidPolicy, "theta"),
}


def action_distribution(policy, x):
    return policy.action_distribution(x)


def log_prob_grad(policy, x, a):
    return policy.log_prob_grad(x, a)


def policy_to_json(policy):
    """Serialise as ``{"family": ..., "shape": [...], "params": [...]}``."""
    params = np.asarray(policy.params)
    return json.dumps({"family": policy.family, "shape": list(params.shape), "params": params.ravel().tolist()})


def policy_from_json(text):
    data = json.loads(text)
    try:
        cls, _ = _FAMILIES[data["family"]]
    except KeyError:
        raise InvalidInputError(f"unknown policy family {data.get('family')!r}") from None
    return cls(np.asarray(data["params"], dtype=float).reshape(data["shape"]))


@dataclass(frozen=True, eq=False)
class EmpiricalParentPolicy:
    """Visit counts of a parent trajectory over (state, action) pairs."""

    counts: np.ndarray

    @property
    def horizon(self):
        return int(self.counts.sum())

    @property
    def joint(self):
        return self.counts / self.counts.sum()

    @property
    def visited(self):
        return self.counts.sum(axis=1) > 0

    @property
    def state_frequency(self):
        return self.counts.sum(axis=1) / self.counts.sum()

    @property
    def conditional(self):
        """``pi_B(a|x)``; rows of unvisited states are NaN."""
        totals = self.counts.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(totals > 0, self.counts / totals, np.nan)


def empirical_parent_policy(parent_traj, n_states, n_actions):
    if len(parent_traj) == 0:
        raise InvalidInputError("empty parent trajectory")
    counts = np.zeros((n_states, n_actions))
    np.add.at(counts, (parent_traj.states[:-1].astype(int), parent_traj.actions), 1.0)
    return EmpiricalParentPolicy(counts)


def mixture_update(policy, pb, alpha):
    """Mix each visited row with the parent's conditional action frequencies.

    ``pi'(.|x) = (pi(.|x) + alpha * pi_B(.|x)) / (1 + alpha)`` for visited ``x``;
    unvisited rows are returned unchanged. ``alpha`` may be a scalar or a
    per-state array.
    """
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (policy.n_states,))
    if np.any(alpha < 0):
        raise InvalidInputError("alpha must be non-negative")
    visited = pb.visited
    cond = np.nan_to_num(pb.conditional)
    mixed = (policy.probs + alpha[:, None] * cond) / (1.0 + alpha[:, None])
    return TableauPolicy(np.where(visited[:, None], mixed, policy.probs))


def natural_gradient_tableau(policy, parent_traj, alpha):
    """Natural-gradient ascent step along the parent's log-likelihood gradient.

    With the Fisher metric ``diag(1/pi(.|x))`` per state, the preconditioned
    gradient ``(1/T) sum_t e_{x_t, a_t} / pi(a_t|x_t)`` becomes the parent's
    joint visit frequency, so the step reduces to a row-wise mixture with the
    parent's conditional frequencies at step ``alpha * (visits(x) / T)``.
    """
    if alpha < 0:
        raise InvalidInputError("alpha must be non-negative")
    if len(parent_traj) == 0:
        return policy
    xs = parent_traj.states[:-1].astype(int)
    acts = parent_traj.actions
    p = policy.probs[xs, acts]
    if np.any(p == 0.0):
        raise SingularGradientError("parent took an action with zero probability; Fisher metric is singular")
    grad = np.zeros_like(policy.probs)
    np.add.at(grad, (xs, acts), 1.0 / p)
    grad /= len(parent_traj)
    stepped = policy.probs + alpha * policy.probs * grad
    return TableauPolicy(stepped / stepped.sum(axis=1, keepdims=True))


def perturb_params(params, sigma, rng):
    """Return ``(params + sigma * eps, eps)`` with ``eps`` i.i.d. standard normal."""
    if sigma < 0:
        raise InvalidInputError("sigma must be non-negative")
    params = np.asarray(params, dtype=float)
    eps = rng.standard_normal(params.shape)
    return params + sigma * eps, eps


# Batched forms used by the population algorithms. Each row is one agent.


def natural_gradient_tableau_batch(probs, states, actions, lengths, alpha):
    """Vectorised ``natural_gradient_tableau`` over agents ``probs[i]``."""
    n, horizon = actions.shape
    mask = np.arange(horizon)[None, :] < lengths[:, None]
    rows = np.repeat(np.arange(n), horizon)[mask.ravel()]
    xs = states[:, :-1].ravel()[mask.ravel()]
    acts = actions.ravel()[mask.ravel()]
    counts = np.zeros_like(probs)
    np.add.at(counts, (rows, xs, acts), 1.0)
    if np.any((counts > 0) & (probs == 0.0)):
        raise SingularGradientError("parent took an action with zero probability")
    # pi * (counts / pi) / T  ==  counts / T wherever counts > 0
    stepped = probs + alpha * counts / np.maximum(lengths, 1)[:, None, None]
    return stepped / stepped.sum(axis=2, keepdims=True)


def sigmoid_ancestral_gradient_batch(thetas, states, actions, lengths):
    """``(1/T_i) sum_t grad log pi(a_t|x_t)`` for linear-sigmoid agents."""
    horizon = actions.shape[1]
    xs = states[:, :horizon]
    p_left = expit(np.einsum("nd,ntd->nt", thetas, xs))
    coef = np.where(actions == 0, 1.0 - p_left, -p_left)
    coef = np.where(np.arange(horizon)[None, :] < lengths[:, None], coef, 0.0)
    return np.einsum("nt,ntd->nd", coef, xs) / np.maximum(lengths, 1)[:, None]
