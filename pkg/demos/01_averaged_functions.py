"""
Averaged functions: closed forms against the series engine
===========================================================

The averaged functions g_1, g_2, g_3 decide where periodic orbits of the
FitzHugh-Nagumo system are born near the Hopf-zero point.  We evaluate the
transcribed closed forms and the numerical engine side by side, and see
which displays survive the comparison.
"""
import numpy as np

from hopfzero import averaging as av
from hopfzero.dynsys import FamilyACoeffs, FamilyBCoeffs

# A generic Family A coefficient set and a B1 set (d w^2 = 1, beta1 = gamma1 w^2)
cA = FamilyACoeffs(d=2.0, w=0.5, eps=0.01, alpha1=0.7, alpha2=-0.3, beta1=0.4,
                   beta2=0.2, gamma1=-0.5, gamma2=0.6)
w = 0.8
cB1 = FamilyBCoeffs(d=1 / w ** 2, w=w, eps=0.01, alpha=(0.3, 0.5, -0.2),
                    beta=(0.7 * w * w, 0.4, 0.9), gamma=(0.7, -0.3, 0.25))
p = (0.9, 0.3)

# The engine returns [g_1, ..., g_k] at one point
gA = av.averaged_functions(p, cA, 2)
print("Family A g1 closed form", av.g1_family_a(p, cA), "engine", gA[0])
print("Family A g2 closed form", av.g2_family_a(p, cA), "engine", gA[1])
# the second component of g2 does not match: the printed display is damaged

gB = av.averaged_functions(p, cB1, 3)
print("B1 g2 closed form", av.g2_family_b1(p, cB1), "engine", gB[1])
print("B1 g3 closed form", av.g3_family_b1(p, cB1), "engine", gB[2])

# Zeros of g_1 (Family A) are periodic orbits; the Jacobian there decides stability
pr = av.predictions_family_a(cA)
J = av.closed_form_jacobian(av.g1_family_a, (pr.rstar_plus, pr.zstar), cA)
print("r*, z* =", pr.rstar_plus, pr.zstar)
print("det Dg1 =", np.linalg.det(J), " -pi^2 l0 / (d w^6) =", pr.detDg1)
for v in pr.verdicts:
    print(f"  {v.name}: {v.value}   [{v.rule}]")
