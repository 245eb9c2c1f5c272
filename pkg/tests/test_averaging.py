"""Averaged functions: closed forms, the series engine and its oracle.

The oracle is independent of the series engine: the reduced (r, z) field is
integrated over one turn at complex eps on a circle |eps| = rho with DOP853,
and the eps^k Fourier coefficient of Pi_eps(p) - p is g_k.

Group 1: engine against oracle
  1. g_numeric orders 1..3 match the complex-eps oracle for A, B1, B2
Group 2: closed forms against the engine
  2. first-order forms (A, B) at 5 pseudo-random points, 1e-8
  3. second-order forms (A g^1, B1, B2 corrected) at 5 points, 1e-6
  4. printed transcriptions that disagree are frozen (A g^2_2, B2 printed, B1 g_3)
Group 3: structure
  5. r = 0 kills g^1 and g^1_1 vanishes when beta1 = gamma1 w^2
  6. preconditions name the failed constraint
Group 4: predictions
  7. zeros of g_1 (A) and g_2 (B1); determinant identities
  8. Example predictions frozen against exact expressions
  9. Lyapunov-Schmidt branch: zero of f_2 and convergence of the section-map fixed point
"""
import mpmath as mp
import numpy as np
import pytest
from scipy.integrate import solve_ivp

from hopfzero import averaging as av
from hopfzero.dynsys import FamilyACoeffs, FamilyBCoeffs
from hopfzero.poincare import SectionMap, fixed_point

from conftest import EX1, EX2, EX3

W = 0.8
CA = FamilyACoeffs(d=2.0, w=0.5, eps=0.01, alpha1=0.7, alpha2=-0.3, beta1=0.4, beta2=0.2,
                   gamma1=-0.5, gamma2=0.6)
CA_SMALL_D = FamilyACoeffs(d=0.5, w=1.1, eps=0.01, alpha1=-0.4, alpha2=0.8, beta1=0.3,
                           beta2=-0.6, gamma1=0.9, gamma2=0.1)
CB1 = FamilyBCoeffs(d=1 / W ** 2, w=W, eps=0.01, alpha=(0.3, 0.5, -0.2),
                    beta=(0.7 * W * W, 0.4, 0.9), gamma=(0.7, -0.3, 0.25))
# B1 with k0 > 0, so the second-order zero is real
CB1_K = FamilyBCoeffs(d=1 / W ** 2, w=W, eps=0.01, alpha=(0.3, 0.5, -0.2),
                      beta=(0.7 * W * W, -0.15, 0.9), gamma=(0.7, -0.3, 0.25))
CB2 = FamilyBCoeffs(d=1.7, w=W, eps=0.01, alpha=(0.3, 0.5), beta=(0.7 * W * W, 0.4),
                    gamma=(0.7, -0.3))
# B2 with f_1 = 0 (beta2 = w^2 gamma2 - alpha1 gamma1) and eta > 0
CB2_LS = FamilyBCoeffs(d=1.7, w=W, eps=0.01, alpha=(0.3, 0.5),
                       beta=(0.7 * W * W, W * W * -0.3 - 0.3 * 0.7, -0.5), gamma=(0.7, -0.3, 0.25))


def points(seed, n=5):
    rng = np.random.default_rng(seed)
    return np.column_stack([rng.uniform(0.2, 2.0, n), rng.uniform(-1.0, 1.0, n)])


def oracle(p, c, K=3, rho=0.01, N=16):
    vals = []
    for j in range(N):
        e = rho * np.exp(2j * np.pi * j / N)
        f = lambda t, y: np.array(av.reduced_field(t, y[0], y[1], c, e))
        s = solve_ivp(f, (0, 2 * np.pi), np.array(p, dtype=complex), method="DOP853",
                      rtol=1e-13, atol=1e-13)
        vals.append(s.y[:, -1] - np.asarray(p))
    co = np.fft.fft(np.array(vals), axis=0) / N
    return [(co[k] / rho ** k).real for k in range(1, K + 1)]


# ── Group 1: engine against oracle ──────────────────────────────────────────

@pytest.mark.parametrize("c", [CA, CB1, CB2], ids=["A", "B1", "B2"])
def test_engine_matches_oracle(c):
    p = (0.9, 0.3)
    ref = oracle(p, c)
    got = av.averaged_functions(p, c, 3)
    for k in range(3):
        scale = max(1.0, np.abs(ref[k]).max())
        np.testing.assert_allclose(got[k], ref[k], atol=1e-8 * scale)


def test_engine_error_estimate():
    g, err = av.averaged_functions((0.9, 0.3), CB1, 3, error_estimate=True)
    assert np.max(err) < 1e-10


def test_engine_order_range():
    with pytest.raises(ValueError):
        av.g_numeric(6, (1.0, 0.0), CB1)


# ── Group 2: closed forms against the engine ────────────────────────────────

@pytest.mark.parametrize("c,g", [(CA, av.g1_family_a), (CA_SMALL_D, av.g1_family_a), (EX1, av.g1_family_a),
                                 (CB1, av.g1_family_b), (CB2, av.g1_family_b), (EX3, av.g1_family_b)])
def test_first_order_closed_forms(c, g):
    for p in points(1):
        ref = av.g_numeric(1, p, c)
        np.testing.assert_allclose(g(p, c), ref, rtol=1e-8, atol=1e-8 * max(1.0, np.abs(ref).max()))


@pytest.mark.parametrize("c,g", [(CB1, av.g2_family_b1), (EX2, av.g2_family_b1),
                                 (CB2, lambda p, c: av.g2_family_b2_general(p, c, "corrected")),
                                 (CB1, lambda p, c: av.g2_family_b2_general(p, c, "corrected"))],
                         ids=["B1", "EX2", "B2-corrected", "B1-via-general"])
def test_second_order_closed_forms(c, g):
    for p in points(2):
        ref = av.g_numeric(2, p, c)
        np.testing.assert_allclose(g(p, c), ref, rtol=1e-6, atol=1e-6 * np.abs(ref).max())


@pytest.mark.parametrize("c", [CA, CA_SMALL_D, EX1])
def test_family_a_second_order_first_component(c):
    for p in points(3):
        ref = av.g_numeric(2, p, c)
        assert av.g2_family_a(p, c)[0] == pytest.approx(ref[0], rel=1e-6, abs=1e-6 * np.abs(ref).max())


def test_errata_frozen():
    p = (0.9, 0.3)
    # Family A, second component of g_2: printed vs engine
    assert av.g2_family_a(p, CA)[1] == pytest.approx(-2.94738046, rel=1e-7)
    assert av.g_numeric(2, p, CA)[1] == pytest.approx(10.37042184, rel=1e-7)
    # B2 general g^1_2: the literal cube
    assert av.g2_family_b2_general(p, CB2)[0] == pytest.approx(-2.0847364, rel=1e-7)
    assert av.g_numeric(2, p, CB2)[0] == pytest.approx(-3.14673861, rel=1e-7)
    # B1 third order
    np.testing.assert_allclose(av.g3_family_b1(p, CB1), [27.20752877, 3.05629276], rtol=1e-7)
    np.testing.assert_allclose(av.g_numeric(3, p, CB1), [-6.55580782, 3.02451002], rtol=1e-7)


# ── Group 3: structure ──────────────────────────────────────────────────────

def test_r_zero_kills_radial_component():
    for c, f in [(CA, av.g1_family_a), (CB1, av.g1_family_b), (CB1, av.g2_family_b1)]:
        assert f((0.0, 0.4), c)[0] == 0.0


@pytest.mark.parametrize("c", [CA, EX1])
def test_family_a_second_order_at_r_zero(c):
    # r-independent terms of the printed g^1_2, evaluated separately in 40 digits
    mp.mp.dps = 40
    d, w, a1 = mp.mpf(c.d), mp.mpf(c.w), mp.mpf(c.alpha1)
    k = d * mp.mpf(c.beta1) - mp.mpf(c.gamma1)
    z = mp.mpf("0.4")
    q = d * w ** 2 - 1
    expect = mp.pi / (48 * d ** 5 * w ** 10) * (
        d * w * mp.sqrt(1 / d - w ** 2) * (-96 * d ** 2 * w ** 3 * (d - 1) * q ** 2 * k * z ** 2
                                           + 96 * a1 * d ** 4 * w ** 5 * q * k * z)
        -576 * (d - 1) ** 2 * q ** 4 * z ** 3
        + 864 * d ** 2 * w ** 2 * a1 * (d - 1) * q ** 3 * z ** 2
        - 16 * q * 18 * d ** 4 * a1 ** 2 * w ** 4 * q * z)
    assert av.g2_family_a((0.0, 0.4), c)[0] == pytest.approx(float(expect), rel=1e-12)


def test_first_order_b_reduces():
    for p in points(4):
        g = av.g1_family_b(p, CB2)
        assert g[0] == 0.0
        expect = 2 * 0.7 * p[1] * np.pi * (1 - 1.7 * W * W) / W
        assert g[1] == pytest.approx(expect, rel=1e-14)


def test_family_a_radial_degree_three():
    # leading r^3 coefficient of g^1_2 at z = 0 is nonzero
    f = lambda r: av.g2_family_a((r, 0.0), CA)[0]
    rs = np.array([0.5, 1.0, 1.5, 2.0, 2.5])
    coef = np.polyfit(rs, [f(r) for r in rs], 4)
    assert abs(coef[0]) < 1e-9 * abs(coef[1]) and abs(coef[1]) > 1e-6


def test_preconditions():
    bad = FamilyBCoeffs(d=1.7, w=W, eps=0.01, alpha=(0.3,), beta=(0.1,), gamma=(0.7,))
    with pytest.raises(av.PreconditionError, match="beta1 = gamma1 w\\^2"):
        av.g2_family_b2_general((1.0, 0.0), bad)
    with pytest.raises(av.PreconditionError, match="d = 1/w\\^2"):
        av.g2_family_b1((1.0, 0.0), CB2)
    with pytest.raises(av.PreconditionError, match="Family B"):
        av.g2_family_b1((1.0, 0.0), CA)
    with pytest.raises(ValueError):
        av.g2_family_b2_general((1.0, 0.0), CB2, variant="other")
    with pytest.raises(av.ReductionError):
        av.lyapunov_schmidt_b2(CB1)


# ── Group 4: predictions ────────────────────────────────────────────────────

@pytest.mark.parametrize("c", [CA, EX1])
def test_family_a_zeros_and_determinant(c):
    pr = av.predictions_family_a(c)
    for r in (pr.rstar_plus, pr.rstar_minus):
        g = av.g1_family_a((r, pr.zstar), c)
        assert np.abs(g).max() < 1e-10 * max(1.0, abs(r))
    J = av.closed_form_jacobian(av.g1_family_a, (pr.rstar_plus, pr.zstar), c)
    assert np.linalg.det(J) == pytest.approx(pr.detDg1, rel=1e-10)
    assert pr.detDg1 * c.d * c.w ** 6 == pytest.approx(-np.pi ** 2 * pr.l0, rel=1e-10)
    # trace_coeff is the linear coefficient of the characteristic polynomial
    assert np.trace(J) == pytest.approx(-pr.trace_coeff, rel=1e-8)


@pytest.mark.parametrize("c", [CB1_K, EX2])
def test_b1_zero_and_determinant(c):
    pr = av.predictions_family_b(c)
    g = av.g2_family_b1((pr.rstar, pr.zstar), c)
    assert np.abs(g).max() < 1e-10
    assert np.trace(av.closed_form_jacobian(av.g2_family_b1, (pr.rstar, pr.zstar), c)) == \
        pytest.approx(-pr.trace_coeff, rel=1e-8)
    J = av.closed_form_jacobian(av.g2_family_b1, (pr.rstar, pr.zstar), c)
    assert np.linalg.det(J) == pytest.approx(pr.detDg2, rel=1e-10)
    assert pr.detDg2 * c.w ** 6 == pytest.approx(2 * np.pi ** 2 * pr.k0, rel=1e-10)


def test_example_predictions_exact():
    mp.mp.dps = 30
    p3 = av.predictions_family_b(EX3)
    assert p3.lambda1 == pytest.approx(float(-20808 * mp.pi / 3773), rel=1e-12)
    # formula value; the printed constant is ledgered as an erratum
    assert p3.lambda2 == pytest.approx(-70.557, rel=1e-4)
    p2 = av.predictions_family_b(EX2)
    assert p2.l13 == pytest.approx(float(429 * mp.pi / 64), rel=1e-12)
    assert p2.rstar == pytest.approx(0.9428086841456885, rel=1e-12)


def test_lyapunov_schmidt_branch():
    ls = av.lyapunov_schmidt_b2(CB2_LS)
    assert ls.f1_vanishes and ls.eta > 0
    assert ls.rstar == pytest.approx(4 * W * np.sqrt(ls.eta), rel=1e-14)
    assert ls.f2(ls.rstar) == pytest.approx(0.0, abs=1e-12)
    assert ls.f2_prime_at_rstar != 0
    assert ls.delta_r == pytest.approx(2 * 0.7 * np.pi * (1 - 1.7 * W * W) / W, rel=1e-14)


def test_lyapunov_schmidt_branch_numerics():
    ls = av.lyapunov_schmidt_b2(CB2_LS)
    gaps = []
    for eps in (0.02, 0.01):
        c = CB2_LS.with_eps(eps)
        fp = fixed_point(SectionMap(c), (ls.rstar, eps * ls.zeta1(ls.rstar)))
        gaps.append(abs(fp.rz[0] - ls.rstar))
        assert fp.rz[1] / eps == pytest.approx(ls.zeta1(ls.rstar), rel=0.05)
    # the radial offset is O(eps)
    assert 1.7 < gaps[0] / gaps[1] < 2.4
