import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ancestral_rl.algorithms import (
    HyperParams,
    Population,
    ancestral_gradient,
    ancestral_learning,
    arl_iteration,
    evaluate_population,
    fitness_weights,
    initial_params,
    poga_iteration,
    run_algorithm,
    select,
    zoo_gradient,
    zoo_iteration,
)
from ancestral_rl.environments import CartPoleEnv, QuadraticBlackBox, two_state_env
from ancestral_rl.exceptions import ConfigurationError, InvalidInputError, SingularGradientError
from ancestral_rl.mdp import FiniteMDP, Trajectory, rng_stream, sample_lifted_plan
from ancestral_rl.oracle import infinite_population_step, value_recursion
from ancestral_rl.policy import (
    LinearSigmoidPolicy,
    TableauPolicy,
    empirical_parent_policy,
    log_prob_grad,
    mixture_update,
)
from ancestral_rl.verify import check_zoo_unbiased, random_parent, stochastic_two_state

STAY = np.array([[0.0, 1.0], [1.0, 0.0]])
SWITCH_ALWAYS = np.array([[1.0, 0.0], [1.0, 0.0]])


def exact_return(env, probs):
    return value_recursion(env, TableauPolicy(probs), 0.0)[0, 0]


# fitness and selection


def test_equal_returns_give_uniform_weights():
    np.testing.assert_array_equal(fitness_weights([2.5] * 4, 3.0), np.full(4, 0.25))


def test_fitness_example():
    np.testing.assert_allclose(fitness_weights([1.0, 0.0], 1.0), [np.e / (np.e + 1), 1 / (np.e + 1)], rtol=1e-15)
    np.testing.assert_allclose(fitness_weights([1.0, 0.0], 1.0), [0.7311, 0.2689], atol=5e-5)


@settings(max_examples=50, deadline=None)
@given(
    returns=st.lists(st.integers(-50, 50), min_size=1, max_size=20),
    shift=st.integers(-1000, 1000),
    beta=st.sampled_from([0.0, 0.05, 0.5, 1.0, 4.0]),
)
def test_fitness_shift_invariance_is_exact(returns, shift, beta):
    r = np.array(returns, dtype=float)
    assert fitness_weights(r + shift, beta).tobytes() == fitness_weights(r, beta).tobytes()


def test_large_returns_do_not_overflow():
    w = fitness_weights([1e6, 1e6 - 1.0], 1.0)
    assert np.all(np.isfinite(w)) and w[0] > w[1]


@pytest.mark.parametrize("bad", [[1.0, np.nan], [np.inf, 0.0], []])
def test_invalid_returns(bad):
    with pytest.raises(InvalidInputError):
        fitness_weights(bad, 1.0)


def test_point_mass_selection():
    assert np.all(select(np.array([1.0, 0, 0, 0]), 100, np.random.default_rng(0)) == 0)


@pytest.mark.parametrize("weights, index, expected", [([0.25] * 4, 2, 0.25), ([np.e / (np.e + 1), 1 / (np.e + 1)], 0, 0.7311)])
def test_selection_frequencies(weights, index, expected):
    draws = select(np.array(weights), 100_000, np.random.default_rng(1))
    assert abs(np.mean(draws == index) - expected) <= 0.007


# ZOO


def test_zoo_zero_returns_leave_params_unchanged():
    env = FiniteMDP.deterministic([[1, 0], [0, 1]], np.zeros((2, 2)), horizon=5)
    master = np.array([[0.3, -0.1], [1.0, 2.0]])
    new, best, diag = zoo_iteration(master, env, HyperParams(pop_size=50), rng_stream(0))
    np.testing.assert_array_equal(new, master)
    assert best == 0.0 and np.all(diag["gradient"] == 0)


def test_zoo_gradient_scaling():
    eps = np.array([[1.0, 0.0], [0.0, -1.0]])
    np.testing.assert_allclose(zoo_gradient([2.0, 4.0], eps, 0.5), [2.0, -4.0])


def test_zoo_unbiased_on_quadratic():
    (res,) = check_zoo_unbiased()
    assert res["pass"], res


def test_zoo_ascent_on_two_state_logits():
    env = two_state_env()
    # sigma = 0.05 leaves the one-step signal below the rollout noise (68/100); 0.5 gives 100/100
    hp = HyperParams(alpha=0.01, sigma=0.5, pop_size=1000)
    start = np.random.default_rng(2).normal(scale=0.3, size=(2, 2))
    j0 = exact_return(env, np.exp(start) / np.exp(start).sum(axis=1, keepdims=True))
    ups = 0
    for seed in range(100):
        new, _, _ = zoo_iteration(start, env, hp, rng_stream(seed, 99))
        ups += exact_return(env, np.exp(new) / np.exp(new).sum(axis=1, keepdims=True)) > j0
    assert ups >= 95


def test_zoo_quadratic_step_moves_towards_origin():
    hp = HyperParams(alpha=0.05, sigma=0.1, pop_size=5000)
    theta = np.array([1.0, -0.5])
    new, _, _ = zoo_iteration(theta, QuadraticBlackBox(), hp, rng_stream(4))
    assert np.linalg.norm(new) < np.linalg.norm(theta)


def test_zoo_needs_noise():
    with pytest.raises(ConfigurationError):
        zoo_iteration(np.zeros(2), QuadraticBlackBox(), HyperParams(sigma=0.0), rng_stream(0))


# POGA


def frozen_population(tables, counts):
    return Population(np.repeat(np.array(tables), counts, axis=0))


def test_poga_zero_beta_selects_uniformly():
    env = two_state_env()
    pop = frozen_population([STAY, SWITCH_ALWAYS], [500, 500])
    nxt = poga_iteration(pop, env, HyperParams(beta=0.0, sigma=0.0, pop_size=1000), rng_stream(5))
    share = np.mean(nxt.parent_index < 500)
    assert abs(share - 0.5) <= 3 * np.sqrt(0.25 / 1000)


def test_poga_one_step_matches_replicator():
    # stay earns sum 0.9^t = 9.576; always-switch never collects the reward of this variant
    env = FiniteMDP.deterministic([[1, 0], [0, 1]], [[0.0, 1.0], [0.0, 0.0]], gamma=0.9, horizon=30)
    assert exact_return(env, STAY) == pytest.approx(9.576, abs=1e-3)
    assert exact_return(env, SWITCH_ALWAYS) == 0.0
    n = 10_000
    for beta in (1.0, 0.3):
        pop = frozen_population([STAY, SWITCH_ALWAYS], [n // 2, n // 2])
        nxt = poga_iteration(pop, env, HyperParams(beta=beta, sigma=0.0, pop_size=n), rng_stream(6))
        share = np.mean(nxt.parent_index < n // 2)
        expected = infinite_population_step([0.5, 0.5], [exact_return(env, STAY), 0.0], beta)[0]
        assert abs(share - expected) <= 3 * np.sqrt(expected * (1 - expected) / n) + 1e-12


def test_poga_selection_drives_maximiser_to_fixation():
    env = two_state_env()
    uniform = np.full((2, 2), 0.5)
    pop = frozen_population([STAY, uniform, SWITCH_ALWAYS], [100, 800, 100])
    hp = HyperParams(beta=0.5, sigma=0.0, pop_size=1000)
    lambdas = [value_recursion(env, TableauPolicy(t), 0.5)[0, 0] for t in (STAY, uniform, SWITCH_ALWAYS)]
    p = np.array([0.1, 0.8, 0.1])
    for n in range(15):
        pop = poga_iteration(pop, env, hp, rng_stream(7, n))
        p = infinite_population_step(p, lambdas, 0.5)
    share = np.mean(np.all(pop.params == STAY, axis=(1, 2)))
    assert p[0] > 0.999 and share > 0.99


def test_poga_keeps_population_size_and_valid_parents():
    env = two_state_env()
    pop = Population(initial_params(env, HyperParams(pop_size=64), None, "poga"))
    for n in range(3):
        pop = poga_iteration(pop, env, HyperParams(pop_size=64, sigma=0.1), rng_stream(8, n))
        assert len(pop) == 64 and pop.generation == n + 1
        assert pop.parent_index.min() >= 0 and pop.parent_index.max() < 64
        np.testing.assert_allclose(pop.params.sum(axis=2), 1.0, atol=1e-12)


def test_shared_plan_makes_identical_agents_tie():
    env = stochastic_two_state(horizon=8)
    plan = sample_lifted_plan(env, 8, rng_stream(9))
    deterministic = np.broadcast_to(np.array([[1.0, 0.0], [1.0, 0.0]]), (50, 2, 2))
    returns, _ = evaluate_population(env, deterministic, rng_stream(10), plan)
    assert np.all(returns == returns[0])
    live, _ = evaluate_population(env, deterministic, rng_stream(10))
    assert len(np.unique(live)) > 1


@pytest.mark.parametrize("env", [two_state_env(), CartPoleEnv(horizon=60)], ids=["tableau", "cartpole"])
def test_evaluation_independent_of_worker_count(env):
    hp = HyperParams(pop_size=37)
    params = initial_params(env, hp, rng_stream(11), "poga")
    one = evaluate_population(env, params, rng_stream(12), jobs=1)
    four = evaluate_population(env, params, rng_stream(12), jobs=4)
    assert one[0].tobytes() == four[0].tobytes()
    assert one[1].states.tobytes() == four[1].states.tobytes()


# ancestral gradient and learning


def test_ancestral_gradient_empty_parent():
    traj = Trajectory(np.zeros(1, dtype=int), np.zeros(0, dtype=int), np.zeros(0))
    np.testing.assert_array_equal(ancestral_gradient(TableauPolicy.uniform(1, 2), traj), np.zeros((1, 2)))


def test_ancestral_gradient_hand_expansion():
    policy = TableauPolicy.uniform(1, 2)
    traj = Trajectory(np.zeros(5, dtype=int), np.array([0, 0, 1, 0]), np.zeros(4))
    g = ancestral_gradient(policy, traj)
    # three visits of a0 at 1/0.5 = 2 each and one visit of a1 at 2, averaged over T = 4
    np.testing.assert_allclose(g, [[1.5, 0.5]])
    per_term = sum(
        (np.log(0.5 + 1e-7) - np.log(0.5 - 1e-7)) / 2e-7 * np.eye(2)[a][None] for a in traj.actions
    ) / 4
    np.testing.assert_allclose(g, per_term, rtol=1e-8)


def test_ancestral_gradient_singular_parent_action():
    traj = Trajectory(np.zeros(2, dtype=int), np.array([1]), np.zeros(1))
    with pytest.raises(SingularGradientError):
        ancestral_gradient(TableauPolicy(np.array([[1.0, 0.0]])), traj)


def test_ancestral_learning_zero_step():
    policy = LinearSigmoidPolicy(np.array([0.1, -0.2, 0.3, 0.4]))
    traj = Trajectory(np.ones((3, 4)), np.array([0, 1]), np.ones(2))
    np.testing.assert_array_equal(ancestral_learning(policy, traj, 0.0).theta, policy.theta)


@pytest.mark.parametrize("seed", range(10))
def test_tableau_learning_equals_mixture(seed):
    rng = np.random.default_rng(seed)
    policy = TableauPolicy(rng.dirichlet(np.ones(2), 3))
    traj = random_parent(rng, 3, 2, max_len=15)
    pb = empirical_parent_policy(traj, 3, 2)
    np.testing.assert_allclose(
        ancestral_learning(policy, traj, 0.7).probs, mixture_update(policy, pb, 0.7 * pb.state_frequency).probs, atol=1e-10
    )


def test_sigmoid_learning_pushes_left_where_parent_pushed_left():
    rng = np.random.default_rng(13)
    states = np.abs(rng.normal(scale=0.05, size=(11, 4)))  # positive-angle states
    traj = Trajectory(states, np.zeros(10, dtype=int), np.ones(10))
    policy = LinearSigmoidPolicy(rng.normal(size=4))
    new = ancestral_learning(policy, traj, 0.5)
    assert np.all(states[:-1] @ new.theta > states[:-1] @ policy.theta)
    np.testing.assert_allclose(
        new.theta - policy.theta, 0.5 * np.mean([log_prob_grad(policy, x, 0) for x in states[:-1]], axis=0)
    )


# ARL


def test_arl_without_learning_is_pure_selection():
    env = two_state_env()
    pop = frozen_population([STAY, SWITCH_ALWAYS], [30, 30])
    hp = HyperParams(beta=0.5, alpha=0.0, sigma=0.0, pop_size=60)
    a = b = pop
    for n in range(4):
        a = arl_iteration(a, env, hp, rng_stream(14, n))
        b = poga_iteration(b, env, hp, rng_stream(14, n))
        np.testing.assert_array_equal(a.parent_index, b.parent_index)
        np.testing.assert_array_equal(a.params, b.params)


def test_arl_skips_learning_at_generation_zero():
    env = two_state_env(horizon=5)
    params = np.random.default_rng(15).dirichlet(np.ones(2), (8, 2))
    fake_parent = evaluate_population(env, params, rng_stream(16))[1]
    pop = Population(params, generation=0, parent_traj=fake_parent)
    nxt = arl_iteration(pop, env, HyperParams(alpha=5.0, pop_size=8), rng_stream(17))
    np.testing.assert_array_equal(nxt.params, params[nxt.parent_index])


def test_arl_learns_from_parent_after_generation_zero():
    env = two_state_env(horizon=5)
    hp = HyperParams(alpha=0.5, pop_size=16)
    pop = arl_iteration(Population(initial_params(env, hp, None, "arl")), env, hp, rng_stream(18))
    traj = pop.parent_traj
    nxt = arl_iteration(pop, env, hp, rng_stream(19))
    i = 3
    expected = ancestral_learning(TableauPolicy(pop.params[i]), traj.trajectory(i), 0.5).probs
    learned = np.array([np.allclose(row, expected, atol=1e-12) for row in nxt.params])
    assert learned[nxt.parent_index == i].all()


def test_arl_cartpole_population_invariants():
    env = CartPoleEnv(horizon=40)
    hp = HyperParams(beta=0.05, alpha=1.0, pop_size=20)
    pop = Population(initial_params(env, hp, rng_stream(20), "arl"))
    for n in range(3):
        pop = arl_iteration(pop, env, hp, rng_stream(21, n))
        assert len(pop) == 20 and pop.params.shape == (20, 4)
        assert np.all(pop.returns >= 1) and np.all(pop.returns <= 40)


# driver


def test_run_algorithm_yields_every_generation():
    hp = HyperParams(pop_size=10, generations=4)
    for algo in ("zoo", "poga", "arl"):
        out = list(run_algorithm(algo, two_state_env(horizon=5), hp, lambda g: rng_stream(0, 0 if g == "init" else g + 1)))
        assert [r.generation for r in out] == [0, 1, 2, 3]
        assert all(r.best_return >= r.mean_return for r in out)


def test_run_algorithm_with_lifted_plan():
    hp = HyperParams(pop_size=10, generations=2)
    out = list(run_algorithm("arl", stochastic_two_state(5), hp, lambda g: rng_stream(1, 0 if g == "init" else g + 1), lifted_plan=True))
    assert len(out) == 2


def test_unknown_algorithm():
    with pytest.raises(ConfigurationError):
        next(run_algorithm("cmaes", two_state_env(), HyperParams(), lambda g: rng_stream(0)))


@pytest.mark.parametrize(
    "kwargs, key",
    [(dict(beta=-1.0), "beta"), (dict(alpha=np.nan), "alpha"), (dict(pop_size=1), "pop_size"), (dict(generations=0), "generations")],
)
def test_hyperparameter_validation(kwargs, key):
    with pytest.raises(ConfigurationError) as err:
        HyperParams(**kwargs)
    assert err.value.key == key
