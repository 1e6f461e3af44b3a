"""
Forward solve of a single RC branch
===================================

A 1 V source discharges through R = 1 ohm into C = 1 F, so the current is
exactly exp(-t). We train a 3x40 tanh network on 35 collocation points in
[0, 10] s and compare with the closed form.
"""

import numpy as np

from pinn_rc import CASE0, TrainConfig, analytical_current, train_forward

# Reduce to a few thousand for a quick look; 15000 is the default budget.
ITERATIONS = 15000

###############################################################################
# Train. ``keep_best`` returns the logged snapshot with the lowest training
# loss, which smooths over the spikes a constant-rate Adam run produces.
config = TrainConfig(iterations=ITERATIONS, formulation="raw", seed=0)
fit = train_forward(CASE0, config)
print(f"selected iteration {fit.selected_iteration}, loss {fit.selected_loss.total:.3e}")
print(f"relative L2 error on {fit.test_times.size} test points: {fit.l2_relative_error:.3e}")

###############################################################################
# A few predictions next to the oracle.
for t in (0.0, 1.0, 2.5, 5.0, 10.0):
    k = int(np.argmin(np.abs(fit.test_times - t)))
    tk = fit.test_times[k]
    print(f"t={tk:5.2f}  pinn={fit.prediction[k]:.6f}  exact={analytical_current(CASE0, tk):.6f}")
