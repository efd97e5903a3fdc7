"""Selection turns imitation of a parent into ascent on population fitness.

On the two-state MDP, the expected ancestral gradient under the backward path
law is parallel to the exact gradient of population fitness. Both are
computed by path enumeration, so no sampling noise is involved.
"""
import numpy as np

from ancestral_rl.environments import two_state_env
from ancestral_rl.oracle import (
    backward_distribution,
    enumerate_paths,
    expected_ancestral_gradient,
    expected_return,
    grad_lambda,
    population_fitness,
)
from ancestral_rl.policy import TableauPolicy

env = two_state_env(horizon=8)
policy = TableauPolicy(np.array([[0.6, 0.4], [0.3, 0.7]]))
table = enumerate_paths(env, policy)

print(f"{len(table.returns)} histories; expected return J = {expected_return(table):.4f}")
for beta in (0.01, 0.5, 2.0):
    pb = backward_distribution(table, beta).pb
    anc = expected_ancestral_gradient(env, policy, beta)
    fd = grad_lambda(env, policy, beta, method="finite_difference")
    cos = anc.ravel() @ fd.ravel() / np.linalg.norm(anc) / np.linalg.norm(fd)
    print(
        f"beta={beta:<5} lambda={population_fitness(table, beta):.4f}  "
        f"E_PB[R]={pb @ table.returns:.4f}  cos(ancestral, grad lambda)={cos:.12f}"
    )
