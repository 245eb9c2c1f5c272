"""
Why the NS point is area preserving
====================================

The FHN field has constant divergence c - b d.  At a fixed point of the
section map det DPi = exp((c - b d) T), so a complex pair on the unit circle
needs c = b d exactly.  At that parameter value the map preserves area; off
it, areas shrink or grow uniformly and no invariant circle can surround the
fixed point.  Here we check each step on Example 2.
"""
import numpy as np

from hopfzero import bifurcation as bf
from hopfzero import torus_verify as tv
from hopfzero.averaging import predictions_family_b
from hopfzero.dynsys import FamilyBCoeffs
from hopfzero.poincare import SectionMap, fixed_point, map_derivatives

c = FamilyBCoeffs(d=4, w=0.5, eps=1 / 20, alpha=(0.5, -1, 0.03),
                  beta=(0.25, -1.000435384, 1 / 50), gamma=(1, -4, 1 / 100))
pr = predictions_family_b(c)
m = SectionMap(c)
fp = fixed_point(m, (pr.rstar, pr.zstar))
div = bf.flow_divergence(c)
print("divergence c - b d =", div)
print("det DPi =", np.linalg.det(fp.jacobian), " exp(div T) =", np.exp(div * fp.return_time))

# the secant on |lambda| - 1 against the closed-form c = b d
mu_vol = bf.divergence_free_parameter(c, "beta2")
ns = bf.locate_ns_curve(m, "beta2", c.beta[1], fp.rz)
print("beta2 where c = b d:", mu_vol, "  numerical NS:", ns.mu)

# the first Lyapunov coefficient there is zero to stencil accuracy
cn = bf.with_param(c, "beta2", mu_vol)
mn = SectionMap(cn)
fpn = fixed_point(mn, fp.rz)
res = bf.lyapunov_coeff(map_derivatives(mn, fpn.rz))
print("l1 / eps^3 (normalized):", res.value_normalized / c.eps ** 3,
      "  closed form l13:", pr.l13, "  printed: -10725 pi / 8 =", -10725 * np.pi / 8)

# circles of every small radius are invariant, all at the same parameter
P, _ = bf.real_jordan_frame(fpn.jacobian)
for R in (0.03, 0.05):
    seed = tv.InvariantCircle(fpn.rz, P, np.eye(1, 17)[0] * R)
    pt = tv.continue_invariant_circle(mn, seed, "beta2", mu_vol, order=8)
    print(f"frame radius {R}: beta2 - beta2(c = b d) = {pt.mu - mu_vol:.2e}, "
          f"defect {pt.circle.defect:.1e}")
