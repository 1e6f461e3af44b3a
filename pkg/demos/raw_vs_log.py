"""
Raw current versus log current
==============================

Case 1 adds a 10 ohm resistor in parallel, so the current settles at 0.1 A
instead of decaying to zero. Both arms share the seed, network, collocation
grid and iteration budget. The only difference is whether the network
outputs I or ln I.
"""

from pinn_rc import CASE1, TrainConfig, compare_formulations

ITERATIONS = 15000

cmp = compare_formulations(CASE1, TrainConfig(iterations=ITERATIONS))
for name, err in cmp.errors.items():
    print(f"{name:>3}: relative L2 error {err:.3e}")
print("lower error:", cmp.verdict)

###############################################################################
# The ordering depends on the seed for this fixture, whose current spans
# barely one decade. Looping over a handful of seeds shows the spread.
for seed in range(3):
    c = compare_formulations(CASE1, TrainConfig(iterations=ITERATIONS, seed=seed))
    print(seed, {k: f"{v:.2e}" for k, v in c.errors.items()})
