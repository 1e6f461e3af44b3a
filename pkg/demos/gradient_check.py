"""
Checking the hand-written derivatives
=====================================

Every derivative in the package is coded by hand: the time tangent through
the network, the reverse pass over it, and the closed-form parameter
Jacobians. Each is compared with central finite differences.
"""

from pinn_rc.gradcheck import run_gradcheck

for result in run_gradcheck(seed=0):
    flag = "ok  " if result.passed else "FAIL"
    print(f"{flag} {result.name:<34} {result.max_rel:.2e} (tol {result.tol:.0e})")

###############################################################################
# A deliberately broken backward pass is caught.
broken = run_gradcheck(seed=0, corrupt=True)
print("corrupted build detected:", not all(r.passed for r in broken))
