"""
Longer time domains
===================

Case 2 has two RC branches with time constants 1 s and 10 s. We keep the
point density at 35 per 10 s and stretch the domain to 100 s and 300 s.
"""

from pinn_rc import CASE2, TrainConfig, domain_sweep

ITERATIONS = 15000

sweep = domain_sweep(CASE2, TrainConfig(iterations=ITERATIONS), [10, 100, 300])
for name, cfg in sweep.configs.items():
    err = sweep.errors()[name]
    print(f"{name:>5}: {cfg.n_collocation:5d} points, relative L2 error {err:.3e}")
print("error grows with domain length:", sweep.degrades_monotonically())
