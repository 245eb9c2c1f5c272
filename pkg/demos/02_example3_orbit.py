"""
Example 3: an attracting periodic orbit of Family B2
=====================================================

Newton on the section map finds the orbit; its multipliers are compared to
the series 1 + eps lambda1 and 1 + eps^3 lambda2, and a trajectory from the
standard-coordinate point (1, 1, 1) is followed into it.
"""
import numpy as np

from hopfzero.averaging import lyapunov_schmidt_b2, predictions_family_b
from hopfzero.dynsys import FamilyBCoeffs
from hopfzero.poincare import SectionMap, fixed_point, orbit_from_section
from hopfzero.torus_verify import iterate_section, section_entry

c = FamilyBCoeffs(d=10 / 7, w=11 / 7, eps=1 / 15, alpha=(15 / 7, 2, 1),
                  beta=(1452 / 343, -1502 / 343, 1), gamma=(12 / 7, -2 / 7, 1))
pr = predictions_family_b(c)
print("lambda1 =", pr.lambda1, " lambda2 =", pr.lambda2)

# seed from the Lyapunov-Schmidt branch
ls = lyapunov_schmidt_b2(c)
seed = (ls.rstar, c.eps * ls.zeta1(ls.rstar))
m = SectionMap(c)
fp = fixed_point(m, seed)
print("seed", seed, "-> fixed point", fp.rz, "after", fp.iterations, "Newton steps")

# multipliers against the series, at two eps values
for eps in (1 / 15, 1 / 30):
    f = fixed_point(SectionMap(c.with_eps(eps)), fp.rz)
    mu = np.sort(f.eigenvalues.real)
    print(f"eps = 1/{round(1 / eps)}: multipliers {mu}, series "
          f"{1 + eps * pr.lambda1:.4f}, {1 + eps ** 3 * pr.lambda2:.5f}")

orb = orbit_from_section(m, fp.rz)
print("period", orb.period, " 2 pi / w =", 2 * np.pi / c.w, " closure", orb.closure_error)

# the trajectory from (1, 1, 1) enters the section and spirals in
r, z, _ = section_entry(m, (1.0, 1.0, 1.0), standard=True)
traj = iterate_section(m, (r, z), 400)
dist = np.linalg.norm(traj.points - fp.rz, axis=1)
for k in (0, 50, 100, 200, 400):
    print(f"return {k:3d}: distance to the orbit {dist[k]:.3e}")
