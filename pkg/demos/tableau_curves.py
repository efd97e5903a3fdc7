"""Learning curves of ZOO, POGA and ARL on the two-state MDP.

Runs the shipped configs (5 trials, 1000 agents, 200 generations; about a
minute in total) and prints the moving-average best return every 20
generations.
"""
from ancestral_rl.harness import aggregate_trials, run_experiment, shipped_config

curves = {}
for algo in ("zoo", "poga", "arl"):
    cfg = shipped_config(f"two_state_{algo}")
    curves[algo] = aggregate_trials(run_experiment(cfg), window=cfg.moving_average_window)

print("gen   " + "  ".join(f"{a:>14}" for a in curves))
for g in list(range(0, 200, 20)) + [199]:
    print(f"{g:>3}   " + "  ".join(f"{c['mean'][g]:8.4f}±{c['std'][g]:.3f}" for c in curves.values()))
