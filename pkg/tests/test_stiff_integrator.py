"""Adaptive BDF, the Dormand-Prince oracle and fixed-step order checks.

Group 1: adaptive BDF
  1. linear decay y' = -y against exp(-t)
  2. stiff problem y' = -1e6 (y - cos t) - sin t: accuracy and step count
  3. FHN Example 3 trajectory (standard start (1,1,1)) against the RK oracle
  4. terminal event located on the dense output
Group 2: RK oracle
  5. harmonic oscillator returns after one period
  6. exponential growth
  7. energy drift over 100 periods
Group 3: fixed-step orders
  8. BDF-k slopes on y' = -y for k = 1..5
  9. BDF-k reproduces polynomial solutions of degree <= k
 10. A-stability smoke test for BDF-1 and BDF-2
Group 4: configuration
 11. invalid configurations and problems are rejected
 12. step limit raises IntegrationError
"""
import numpy as np
import pytest

from hopfzero.dynsys import family_params, fhn_field, fhn_jacobian, standard_to_phys
from hopfzero.stiff_integrator import (Event, IntegrationError, IntegratorConfig, IvpProblem,
                                       bdf_fixed_step, bdf_integrate, convergence_order,
                                       fd_jacobian, rk_fixed_step, rk_integrate)

from conftest import EX3


def decay():
    return IvpProblem(lambda t, y: -y, 0.0, 1.0, [1.0])


def stiff():
    return IvpProblem(lambda t, y: -1e6 * (y - np.cos(t)) - np.sin(t), 0.0, 1.0, [1.0],
                      jac=lambda t, y: np.array([[-1e6]]))


def oscillator(t1):
    return IvpProblem(lambda t, y: np.array([y[1], -y[0]]), 0.0, t1, [1.0, 0.0])


# ── Group 1: adaptive BDF ───────────────────────────────────────────────────

def test_bdf_linear_decay():
    cfg = IntegratorConfig(rtol=1e-8, atol=1e-12)
    tr = bdf_integrate(decay(), cfg)
    assert abs(tr.y_final[0] - np.exp(-1)) < 10 * cfg.rtol


def test_bdf_stiff_beats_explicit():
    cfg = IntegratorConfig(rtol=1e-8, atol=1e-12)
    b = bdf_integrate(stiff(), cfg)
    assert abs(b.y_final[0] - np.cos(1.0)) < 100 * cfg.rtol
    r = rk_integrate(stiff(), cfg)
    assert r.nsteps >= 10 * b.nsteps


def test_bdf_without_jacobian_hook():
    p = IvpProblem(stiff().fun, 0.0, 1.0, [1.0])
    tr = bdf_integrate(p, IntegratorConfig(rtol=1e-8, atol=1e-12))
    assert abs(tr.y_final[0] - np.cos(1.0)) < 1e-6


def test_fhn_example3_bdf_vs_rk():
    prm = family_params(EX3)
    # (1, 1, 1) is read in standard coordinates; physically it blows up
    u0 = standard_to_phys([1.0, 1.0, 1.0], EX3)
    p = IvpProblem(lambda t, u: fhn_field(u, prm), 0.0, 200.0, u0,
                   jac=lambda t, u: fhn_jacobian(u, prm))
    ref = rk_integrate(p, IntegratorConfig(rtol=1e-10, atol=1e-13))
    b = bdf_integrate(p, IntegratorConfig(rtol=1e-10, atol=1e-13))
    ts = np.linspace(0, 200, 801)
    gap = max(np.max(np.abs(b.sol(t) - ref.sol(t))) for t in ts)
    assert gap < 1e-6


def test_terminal_event():
    ev = Event(lambda t, y: y[0] - 0.5, direction=-1)
    for integ in (bdf_integrate, rk_integrate):
        tr = integ(decay(), IntegratorConfig(rtol=1e-10, atol=1e-13), events=[ev])
        assert tr.t_event == pytest.approx(np.log(2.0), abs=1e-7)


def test_fd_jacobian():
    f = lambda t, y: np.array([y[0] * y[1], np.sin(y[0])])
    J = fd_jacobian(f, 0.0, np.array([0.3, 2.0]))
    np.testing.assert_allclose(J, [[2.0, 0.3], [np.cos(0.3), 0.0]], atol=1e-6)


# ── Group 2: RK oracle ──────────────────────────────────────────────────────

def test_rk_oscillator_period():
    cfg = IntegratorConfig(rtol=1e-9, atol=1e-12)
    tr = rk_integrate(oscillator(2 * np.pi), cfg)
    assert np.max(np.abs(tr.y_final - [1.0, 0.0])) < 10 * cfg.rtol


def test_rk_growth():
    cfg = IntegratorConfig(rtol=1e-9, atol=1e-12)
    tr = rk_integrate(IvpProblem(lambda t, y: y, 0.0, 1.0, [1.0]), cfg)
    assert abs(tr.y_final[0] - np.e) < 10 * cfg.rtol * np.e


def test_rk_energy_drift():
    tr = rk_integrate(oscillator(200 * np.pi), IntegratorConfig(rtol=1e-10, atol=1e-13))
    energy = np.sum(tr.y ** 2, axis=1)
    assert np.max(np.abs(energy - 1.0)) < 1e-6


# ── Group 3: fixed-step orders ──────────────────────────────────────────────

@pytest.mark.parametrize("k", [1, 2, 3, 4, 5])
def test_bdf_order(k):
    steps = [0.1, 0.05, 0.025, 0.0125]
    slope, errs = convergence_order(lambda p, h: bdf_fixed_step(p, h, k, start=lambda t: [np.exp(-t)]),
                                    decay(), lambda t: np.exp(-t), steps)
    assert abs(slope - k) < 0.3
    assert np.all(np.diff(errs) < 0)


def test_rk_fixed_order():
    slope, _ = convergence_order(rk_fixed_step, decay(), lambda t: np.exp(-t), [0.5, 0.25, 0.125])
    assert abs(slope - 5) < 0.5


@pytest.mark.parametrize("k", [1, 2, 3, 4, 5])
def test_bdf_polynomial_exactness(k):
    p = IvpProblem(lambda t, y: np.array([k * t ** (k - 1)]), 0.0, 1.0, [0.0])
    t, y = bdf_fixed_step(p, 0.05, k, start=lambda s: [s ** k])
    np.testing.assert_allclose(y[:, 0], t ** k, atol=1e-12)


@pytest.mark.parametrize("k", [1, 2])
def test_a_stability_smoke(k):
    p = IvpProblem(lambda t, y: -1e6 * y, 0.0, 2.0, [1.0], jac=lambda t, y: np.array([[-1e6]]))
    # start from the backward Euler value so the history is itself decaying
    _, y = bdf_fixed_step(p, 0.1, k, start=lambda t: [1.0 / (1.0 + 1e6 * t)])
    mag = np.abs(y[:, 0])
    assert np.all(np.diff(mag) <= 0)


# ── Group 4: configuration ──────────────────────────────────────────────────

@pytest.mark.parametrize("kw", [dict(rtol=1e-16), dict(atol=0.0), dict(max_order=6)])
def test_bad_config(kw):
    with pytest.raises(ValueError):
        IntegratorConfig(**kw)


def test_bad_problem():
    with pytest.raises(ValueError):
        IvpProblem(lambda t, y: y, 1.0, 1.0, [1.0])
    with pytest.raises(ValueError):
        IvpProblem(lambda t, y: y, 0.0, 1.0, [np.nan])
    with pytest.raises(ValueError):
        bdf_fixed_step(decay(), 0.1, 6)


def test_step_limit():
    with pytest.raises(IntegrationError):
        rk_integrate(stiff(), IntegratorConfig(rtol=1e-8, max_steps=50))
