"""
The BDF integrator on textbook problems
========================================

Fixed-step BDF-k has order k; the adaptive variable-order BDF handles the
stiff problem y' = -1e6 (y - cos t) - sin t in a few dozen steps where the
explicit Dormand-Prince pair needs hundreds of thousands.
"""
import numpy as np

from hopfzero.stiff_integrator import (IntegratorConfig, IvpProblem, bdf_fixed_step,
                                       bdf_integrate, convergence_order, rk_integrate)

decay = IvpProblem(lambda t, y: -y, 0.0, 1.0, [1.0])
steps = [0.1, 0.05, 0.025, 0.0125]
for k in range(1, 6):
    slope, errs = convergence_order(
        lambda p, h: bdf_fixed_step(p, h, k, start=lambda t: [np.exp(-t)]),
        decay, lambda t: np.exp(-t), steps)
    print(f"BDF-{k}: slope {slope:.2f}, errors {np.array2string(errs, precision=2)}")

stiff = IvpProblem(lambda t, y: -1e6 * (y - np.cos(t)) - np.sin(t), 0.0, 1.0, [1.0])
cfg = IntegratorConfig(rtol=1e-8, atol=1e-12)
b = bdf_integrate(stiff, cfg)
r = rk_integrate(stiff, cfg)
print("BDF:", b.nsteps, "steps, error", abs(b.y_final[0] - np.cos(1)))
print("RK: ", r.nsteps, "steps, error", abs(r.y_final[0] - np.cos(1)))
print("orders used by the adaptive BDF:", np.bincount(b.orders)[1:])
