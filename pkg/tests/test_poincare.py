"""Return map to the theta = 0 section, fixed points and map derivatives.

Group 1: the map
  1. eps = 0: the scaled flow is a rigid rotation and the map is the identity
  2. backward map inverts the forward map
  3. scaled and physical frames, and the three backends, agree
  4. escaping orbits raise DivergenceError
Group 2: fixed points
  5. Example 3 fixed point and multipliers at eps = 1/15 (frozen values)
  6. det DPi > 0 and det DPi = exp((c - b d) T) (Liouville)
  7. multipliers are 1 + O(eps)
  8. eps = 0 is rejected as degenerate
Group 3: derivatives
  9. synthetic polynomial map: J, B, C recovered exactly
 10. Richardson estimates bound the Jacobian mismatch between steps h and h/2
 11. B, C symmetrisation residuals below 10x the stencil error at a real fixed point
Group 4: orbits
 12. orbit closes and the period is 2 pi / w + O(eps)
 13. Family B1 orbit matches the first-order cycle shape to O(eps^2)
"""
import numpy as np
import pytest

from hopfzero.averaging import predictions_family_b
from hopfzero.bifurcation import flow_divergence
from hopfzero.poincare import (DegenerateMapError, DivergenceError, SectionMap, fixed_point,
                               map_derivatives, map_jacobian, map_rz, orbit_from_section,
                               poincare_map)
from hopfzero.dynsys import CylPoint

from conftest import EX1, EX2, EX3


@pytest.fixture(scope="module")
def ex3_fixed():
    m = SectionMap(EX3)
    return m, fixed_point(m, (6.6, -0.35))


# ── Group 1: the map ────────────────────────────────────────────────────────

@pytest.mark.parametrize("c", [EX1, EX2, EX3])
def test_identity_at_eps_zero(c):
    m = SectionMap(c.with_eps(0.0))
    for rz in [(0.5, 0.2), (2.0, -1.0), (7.0, 0.3)]:
        np.testing.assert_allclose(map_rz(m, rz), rz, atol=1e-10)


def test_backward_inverts_forward():
    m = SectionMap(EX2)
    p = np.array([1.2, 0.1])
    q = map_rz(m, p)
    np.testing.assert_allclose(map_rz(m.reversed(), q), p, atol=1e-10)


def test_frames_and_backends_agree():
    p = (1.2, 0.1)
    ref = map_rz(SectionMap(EX2), p)
    np.testing.assert_allclose(map_rz(SectionMap(EX2, frame="physical"), p), ref, atol=1e-9)
    for backend in ("rk", "bdf"):
        got = map_rz(SectionMap(EX2, backend=backend, rtol=1e-11, atol=1e-13), p)
        np.testing.assert_allclose(got, ref, atol=1e-7)


def test_poincare_map_cylpoint():
    q = poincare_map(SectionMap(EX2), CylPoint(1.2, 0.1))
    np.testing.assert_allclose([q.r, q.z], map_rz(SectionMap(EX2), (1.2, 0.1)))


def test_divergence_detected():
    with pytest.raises(DivergenceError):
        map_rz(SectionMap(EX3, bound=1e3), (60.0, 40.0))


def test_bad_map_settings():
    for kw in (dict(n=0), dict(backend="euler"), dict(frame="polar")):
        with pytest.raises(ValueError):
            SectionMap(EX2, **kw)


# ── Group 2: fixed points ───────────────────────────────────────────────────

def test_example3_fixed_point(ex3_fixed):
    _, fp = ex3_fixed
    assert fp.residual < 1e-10
    np.testing.assert_allclose(fp.rz, [6.6586, -0.35638], atol=2e-4)
    np.testing.assert_allclose(np.sort(fp.moduli), [0.3342, 0.9783], atol=2e-4)


def test_liouville_determinant(ex3_fixed):
    _, fp = ex3_fixed
    det = np.linalg.det(fp.jacobian)
    assert det > 0
    expect = np.exp(flow_divergence(EX3) * fp.return_time)
    assert abs(det - expect) < 1e-6 * expect


def test_liouville_determinant_b1():
    pr = predictions_family_b(EX2)
    fp = fixed_point(SectionMap(EX2), (pr.rstar, pr.zstar))
    det = np.linalg.det(fp.jacobian)
    assert det > 0
    assert abs(det - np.exp(flow_divergence(EX2) * fp.return_time)) < 1e-7


def test_multipliers_near_one():
    for eps in (1 / 15, 1 / 30):
        fp = fixed_point(SectionMap(EX3.with_eps(eps)), (6.8, -0.3))
        # first-order averaged Jacobian has trace coefficient of order 10
        assert np.max(np.abs(fp.eigenvalues - 1)) < 15 * eps


def test_fixed_point_rejects_eps_zero():
    with pytest.raises(DegenerateMapError):
        fixed_point(SectionMap(EX3.with_eps(0.0)), (6.0, 0.0))


# ── Group 3: derivatives ────────────────────────────────────────────────────

def _poly_map(q):
    x, y = q
    return np.array([0.9 * x - 0.2 * y + 0.3 * x * x - 0.1 * x * y + 0.05 * x ** 3,
                     0.2 * x + 0.9 * y + 0.4 * y * y + 0.02 * x * y * y])


def test_synthetic_tensors():
    md = map_derivatives(None, (0.0, 0.0), F=_poly_map)
    np.testing.assert_allclose(md.jacobian, [[0.9, -0.2], [0.2, 0.9]], atol=1e-9)
    B = np.zeros((2, 2, 2))
    B[0, 0, 0] = 0.6
    B[0, 0, 1] = B[0, 1, 0] = -0.1
    B[1, 1, 1] = 0.8
    np.testing.assert_allclose(md.B, B, atol=1e-6)
    C = np.zeros((2, 2, 2, 2))
    C[0, 0, 0, 0] = 0.3
    for idx in [(0, 1, 1), (1, 0, 1), (1, 1, 0)]:
        C[(1,) + idx] = 0.04
    np.testing.assert_allclose(md.C, C, atol=1e-4)
    assert md.B_asymmetry < 1e-6 and md.C_asymmetry < 1e-4


def test_jacobian_step_halving(ex3_fixed):
    m, fp = ex3_fixed
    F = lambda q: map_rz(m, q)
    h = 1e-4
    J1, J2 = map_jacobian(F, fp.rz, h), map_jacobian(F, fp.rz, h / 2)
    # O(h^2) truncation plus map noise of order rtol / h
    assert np.abs(J1 - J2).max() < 10 * (h ** 2 + m.rtol / h) * max(1.0, np.abs(J1).max())


def test_tensor_symmetry_residual(ex3_fixed):
    m, fp = ex3_fixed
    md = map_derivatives(m, fp.rz)
    assert md.B_asymmetry < 10 * np.max(md.B_error)
    assert md.C_asymmetry < 10 * np.max(md.C_error)
    np.testing.assert_allclose(md.jacobian, fp.jacobian, atol=10 * np.max(md.J_error))


# ── Group 4: orbits ─────────────────────────────────────────────────────────

def test_orbit_closure_and_period(ex3_fixed):
    m, fp = ex3_fixed
    o = orbit_from_section(m, fp.rz)
    assert o.closure_error < 1e-9
    assert abs(o.period - 2 * np.pi / EX3.w) < 2 * np.pi / EX3.w * 10 * EX3.eps
    assert o.period == pytest.approx(fp.return_time, rel=1e-9)


def _cycle_shape_error(eps):
    c = EX2.with_eps(eps)
    pr = predictions_family_b(c)
    fp = fixed_point(SectionMap(c), (pr.rstar, pr.zstar))
    o = orbit_from_section(SectionMap(c), fp.rz, samples=400)
    r, z = fp.rz
    w = c.w
    best = np.inf
    for shift in np.linspace(0, 2 * np.pi / w, 400, endpoint=False):
        t = o.t + shift
        ref = eps * np.column_stack([z / w ** 2 + r * np.sin(w * t) / 2, np.full_like(t, z),
                                     w * r * np.cos(w * t) / 2])
        best = min(best, np.abs(o.physical - ref).max())
    return best


def test_b1_cycle_shape():
    e1, e2 = _cycle_shape_error(1 / 20), _cycle_shape_error(1 / 40)
    assert e1 < 2 * (1 / 20) ** 2
    assert 2.5 < e1 / e2 < 6
