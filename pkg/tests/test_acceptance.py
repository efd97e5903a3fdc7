"""Acceptance criteria, one test each; every test records a pass/fail line shown in the summary."""
import time

import numpy as np
import pytest
from conftest import record_acceptance

from ancestral_rl import cli
from ancestral_rl.harness import run_experiment, shipped_config
from ancestral_rl.verify import run_suite

OPTIMUM = (1 - 0.9**30) / 0.1


def report(number, name, ok, detail, seconds, budget):
    ok = bool(ok) and seconds < budget
    record_acceptance(f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {name}: {detail} ({seconds:.1f} s, budget {budget:g} s)")
    return ok


def suite_criterion(number, name, suite, budget):
    start = time.perf_counter()
    results = run_suite(suite)
    seconds = time.perf_counter() - start
    detail = "; ".join(f"{r['check']} {r['residual']:.3g} <= {r['tolerance']:g}" for r in results)
    assert report(number, name, all(r["pass"] for r in results), detail, seconds, budget), results


def test_01_kl_bellman_identity():
    suite_criterion(1, "KL-regularized Bellman identity", "theorem2", 10)


def test_02_ancestral_gradient_parallel_to_fitness_gradient():
    suite_criterion(2, "expected ancestral gradient vs finite-difference fitness gradient", "theorem1", 30)


def test_03_natural_gradient_equals_mixture():
    suite_criterion(3, "natural-gradient step equals mixture update", "natgrad", 5)


def test_04_variational_representation():
    suite_criterion(4, "variational representation of the generalized value", "variational", 10)


def test_05_replicator_fixation():
    suite_criterion(5, "replicator dynamics fix the fittest policy", "lemma1", 1)


def test_06_zoo_unbiased():
    suite_criterion(6, "ZOO estimator unbiased on the quadratic", "zoo_unbiased", 10)


def test_07_lifted_plan_law():
    suite_criterion(7, "lifted plans preserve the path law and ADDS", "lifted", 30)


def test_08_small_beta_limit():
    suite_criterion(8, "fitness tends to expected return as beta -> 0", "beta_limit", 5)


def final_best(records):
    last = max(r.generation for r in records)
    return np.array([r.best_return for r in sorted(records, key=lambda r: r.trial) if r.generation == last])


def test_09_tableau_ordering(tableau_runs):
    finals = {algo: final_best(tableau_runs[algo]) for algo in ("arl", "zoo", "poga")}
    hits = {algo: int(np.sum(finals[algo] >= 9.4)) for algo in finals}
    means = {algo: finals[algo].mean() for algo in finals}
    ok = hits["arl"] >= 4 and hits["zoo"] >= 4 and means["poga"] < min(means["arl"], means["zoo"])
    detail = (
        f"best >= 9.4 in ARL {hits['arl']}/5, ZOO {hits['zoo']}/5 (optimum {OPTIMUM:.4f}); "
        f"mean final best ARL {means['arl']:.4f}, ZOO {means['zoo']:.4f}, POGA {means['poga']:.4f}"
    )
    assert report(9, "two-state tableau experiment", ok, detail, tableau_runs["seconds"], 300), detail


@pytest.mark.slow
def test_10_cartpole_ordering():
    start = time.perf_counter()
    finals = {algo: final_best(run_experiment(shipped_config(f"cartpole_{algo}"))) for algo in ("arl", "poga", "zoo")}
    seconds = time.perf_counter() - start
    solved = {algo: int(np.sum(finals[algo] >= 500)) for algo in finals}
    means = {algo: finals[algo].mean() for algo in finals}
    ok = solved["arl"] >= 3 and solved["poga"] >= 3 and means["zoo"] < min(means["arl"], means["poga"])
    detail = (
        f"return 500 in ARL {solved['arl']}/5, POGA {solved['poga']}/5; "
        f"mean final best ARL {means['arl']:.1f}, POGA {means['poga']:.1f}, ZOO {means['zoo']:.1f}"
    )
    assert report(10, "cart-pole experiment", ok, detail, seconds, 1200), detail


@pytest.mark.parametrize("jobs_list", [("1", "2", "4")])
def test_11_determinism_across_jobs(tmp_path, jobs_list):
    start = time.perf_counter()
    cases = [
        ["--algo", "arl", "--env", "two_state", "--set", "lifted_plan=true"],
        ["--algo", "poga", "--env", "two_state"],
        ["--algo", "zoo", "--env", "two_state"],
        ["--algo", "arl", "--env", "cartpole", "--set", "horizon=80", "--set", "alpha=5"],
        ["--algo", "poga", "--env", "cartpole", "--set", "horizon=80"],
        ["--algo", "zoo", "--env", "cartpole", "--set", "horizon=80"],
    ]
    common = ["--seed", "11", "--set", "pop_size=40", "--set", "generations=5", "--set", "trials=2"]
    mismatches = 0
    for i, case in enumerate(cases):
        outputs = set()
        for k, jobs in enumerate(jobs_list + jobs_list[:1]):
            out = tmp_path / f"{i}_{k}.csv"
            assert cli.main(["run", *case, *common, "--jobs", jobs, "--out", str(out)]) == 0
            outputs.add(out.read_bytes())
        mismatches += len(outputs) != 1
    seconds = time.perf_counter() - start
    detail = f"{len(cases) - mismatches}/{len(cases)} configs byte-identical over repeats at --jobs {','.join(jobs_list)}"
    assert report(11, "determinism", mismatches == 0, detail, seconds, 60), detail
