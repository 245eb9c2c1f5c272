"""FHN field, unfolding families and coordinate transforms.

Group 1: field and spectrum
  1. field matches the written equations at a sample point
  2. analytic Jacobian equals a central-difference Jacobian
  3. Hopf-zero spectrum {0, +-iw} at eps = 0 for both families
Group 2: coefficient validation
  4. Family A rejects d(1 - d w^2) <= 0, d = 1
  5. Family B rejects w <= 0 and more than five perturbation terms
Group 3: transforms
  6. physical <-> standard round trip to 1e-12 (property based)
  7. cylindrical round trip; r = 0 maps to theta = 0
  8. eps = 0 scaling is rejected
  9. scaled field equals M^-1 F(eps M x) / eps
 10. at eps = 0 the scaled field is the rotation x1' = -w x2, x2' = w x1, x3' = 0
"""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hopfzero.dynsys import (CoefficientError, CylPoint, FamilyACoeffs, FamilyBCoeffs, ParamsFHN,
                             ScalingError, cyl_to_standard, family_params, fhn_field, fhn_jacobian,
                             hopf_zero_spectrum, phys_to_standard, scaled_field, standard_to_cyl,
                             standard_to_phys, transform_matrix)

from conftest import EX1, EX2, EX3

finite = st.floats(-50, 50, allow_nan=False)


# ── Group 1: field and spectrum ─────────────────────────────────────────────

def test_field_matches_equations():
    p = ParamsFHN(a=0.3, b=0.2, c=-0.4, d=1.5)
    x, y, z = 0.7, -0.2, 1.1
    f = fhn_field(np.array([x, y, z]), p)
    expect = [z, 0.2 * (x - 1.5 * y), (x - 0.3) * (x - 1) * x + y - 0.4 * z]
    np.testing.assert_allclose(f, expect, rtol=1e-14)


def test_jacobian_central_difference():
    p = ParamsFHN(a=-0.2, b=0.5, c=0.3, d=2.0)
    u = np.array([0.4, -0.3, 0.8])
    h = 1e-6
    J = np.column_stack([(fhn_field(u + h * e, p) - fhn_field(u - h * e, p)) / (2 * h) for e in np.eye(3)])
    np.testing.assert_allclose(fhn_jacobian(u, p), J, atol=1e-8)


@pytest.mark.parametrize("c", [EX1, EX2, EX3])
def test_hopf_zero_spectrum(c):
    ev = hopf_zero_spectrum(family_params(c.with_eps(0.0)))
    np.testing.assert_allclose(sorted(ev.imag), [-c.w, 0, c.w], atol=1e-12)
    np.testing.assert_allclose(ev.real, 0, atol=1e-12)


# ── Group 2: coefficient validation ─────────────────────────────────────────

def test_family_a_invariants():
    with pytest.raises(CoefficientError, match="d w"):
        FamilyACoeffs(d=2.0, w=1.0, eps=0.1)
    with pytest.raises(CoefficientError, match="d != 1"):
        FamilyACoeffs(d=1.0, w=0.5, eps=0.1)


def test_family_b_invariants():
    with pytest.raises(CoefficientError, match="w > 0"):
        FamilyBCoeffs(d=1.0, w=0.0, eps=0.1)
    with pytest.raises(CoefficientError, match="more than 5"):
        FamilyBCoeffs(d=1.0, w=1.0, eps=0.1, alpha=(1, 2, 3, 4, 5, 6))


# ── Group 3: transforms ─────────────────────────────────────────────────────

@settings(max_examples=60, deadline=None)
@given(finite, finite, finite, st.sampled_from([EX1, EX2, EX3]))
def test_phys_standard_round_trip(x, y, z, c):
    p = np.array([x, y, z])
    back = standard_to_phys(phys_to_standard(p, c), c)
    assert np.allclose(back, p, rtol=1e-12, atol=1e-12 * max(1.0, np.abs(p).max()))


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 50), st.floats(0, 2 * np.pi, exclude_max=True), finite)
def test_cyl_round_trip(r, th, z):
    x = cyl_to_standard(CylPoint(r, z, th))
    q = standard_to_cyl(*x)
    np.testing.assert_allclose(cyl_to_standard(q), x, atol=1e-12 * max(1.0, r))


def test_cyl_origin():
    assert standard_to_cyl(0.0, 0.0, 2.0) == CylPoint(0.0, 2.0, 0.0)


def test_eps_zero_scaling_rejected():
    with pytest.raises(ScalingError):
        phys_to_standard([1.0, 0.0, 0.0], EX2.with_eps(0.0))


@pytest.mark.parametrize("c", [EX1, EX2, EX3])
def test_scaled_field_conjugacy(c):
    rng = np.random.default_rng(1)
    M = transform_matrix(c)
    for x in rng.normal(size=(5, 3)):
        f = np.linalg.solve(M, fhn_field(c.eps * M @ x, family_params(c))) / c.eps
        np.testing.assert_allclose(scaled_field(x, c), f, rtol=1e-9, atol=1e-12)


@pytest.mark.parametrize("c", [EX1, EX2])
def test_scaled_field_at_eps_zero(c):
    x = np.array([0.3, -1.2, 0.7])
    np.testing.assert_allclose(scaled_field(x, c, eps=0.0), [c.w * 1.2, c.w * 0.3, 0.0], atol=1e-12)
