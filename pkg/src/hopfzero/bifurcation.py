"""Stability verdicts, eigenvalue series and Neimark-Sacker data.

Averaged-Jacobian classification uses Routh-Hurwitz on l^2 - tr l + det.
The Neimark-Sacker (NS) side works on the section map: the NS curve is
located by a secant on |lambda| - 1, the map is conjugated to real Jordan
form, and the first Lyapunov coefficient is evaluated both with the
printed vector p = (1/2, -i/sqrt 2) and with the normalized eigenpair of
the standard normal-form theory.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import averaging as av
from .dynsys import Coeffs, FamilyACoeffs, FamilyBCoeffs, family_params
from .poincare import (FixedPointResult, MapDerivatives, SectionMap, fixed_point,
                       map_derivatives)

__all__ = [
    "StabilityVerdict", "EigSeries", "NSReport", "LyapunovResult", "TorusVerdict",
    "NSPoint", "ResonanceError", "PreconditionError",
    "classify_averaged", "classify_floquet", "jordan_split", "b2_eigen_expansion",
    "ns_conditions", "lyapunov_coeff", "lyapunov_closed_form", "torus_verdict",
    "with_param", "get_param", "locate_ns_curve", "real_jordan_frame",
    "flow_divergence", "divergence_free_parameter",
]

PI = np.pi
P_PRINTED = np.array([0.5, -1j / np.sqrt(2)])


class ResonanceError(ValueError):
    """Strong resonance: e^{i k theta} close to 1 for some k <= 4."""


class PreconditionError(ValueError):
    pass


# ---------------------------------------------------------------- verdicts

@dataclass
class StabilityVerdict:
    classification: str  # attracting, repelling, unstable-saddle, non-hyperbolic
    source: str  # averaged-Jacobian, Murdock-expansion, numerical-floquet
    witnesses: dict = field(default_factory=dict)


def classify_averaged(jac, tol: float = 1e-12) -> StabilityVerdict:
    """Routh-Hurwitz on the 2x2 averaged Jacobian (continuous-time convention)."""
    J = np.asarray(jac, dtype=float)
    tr, det = float(np.trace(J)), float(np.linalg.det(J))
    sc = max(1.0, float(np.abs(J).max()))
    w = dict(trace=tr, det=det, eigenvalues=np.linalg.eigvals(J))
    if abs(det) <= tol * sc * sc or (det > 0 and abs(tr) <= tol * sc):
        return StabilityVerdict("non-hyperbolic", "averaged-Jacobian", w)
    if det < 0:
        return StabilityVerdict("unstable-saddle", "averaged-Jacobian", w)
    return StabilityVerdict("attracting" if tr < 0 else "repelling", "averaged-Jacobian", w)


def classify_floquet(eigenvalues, tol: float = 1e-12) -> StabilityVerdict:
    """Classification of a map fixed point from its multipliers."""
    mod = np.abs(np.asarray(eigenvalues))
    w = dict(eigenvalues=np.asarray(eigenvalues), moduli=mod)
    if np.any(np.abs(mod - 1) <= tol):
        return StabilityVerdict("non-hyperbolic", "numerical-floquet", w)
    if np.all(mod < 1):
        return StabilityVerdict("attracting", "numerical-floquet", w)
    if np.all(mod > 1):
        return StabilityVerdict("repelling", "numerical-floquet", w)
    return StabilityVerdict("unstable-saddle", "numerical-floquet", w)


# ---------------------------------------------------------------- series

@dataclass
class EigSeries:
    """Per-eigenvalue lists of (power of eps, coefficient)."""
    terms: List[List[Tuple[int, complex]]]
    order: int
    verdict: Optional[StabilityVerdict] = None

    def __post_init__(self):
        for t in self.terms:
            pw = [k for k, _ in t]
            if any(b <= a for a, b in zip(pw, pw[1:])):
                raise ValueError("powers must be strictly increasing")

    def evaluate(self, eps):
        return np.array([sum(c * eps ** k for k, c in t) for t in self.terms])


def jordan_split(A0, A1, A2, tol: float = 1e-12) -> EigSeries:
    """Eigenvalue series of A0 + eps A1 + eps^2 A2 with A0 = diag(0, a22)."""
    A0, A1, A2 = (np.asarray(a, dtype=float) for a in (A0, A1, A2))
    a22 = A0[1, 1]
    if abs(a22) <= tol or max(abs(A0[0, 0]), abs(A0[0, 1]), abs(A0[1, 0])) > tol * max(1, abs(a22)):
        raise PreconditionError("A0 must be diag(0, a22) with a22 != 0")
    cross = A1[0, 1] * A1[1, 0]
    first = [(1, A1[0, 0]), (2, (a22 * A2[0, 0] - cross) / a22)]
    second = [(0, a22), (1, A1[1, 1]), (2, (a22 * A2[1, 1] + cross) / a22)]
    return EigSeries([first, second], 2)


def _check_b2(c: FamilyBCoeffs, tol=1e-12):
    if c.family != "B":
        raise PreconditionError("Family B coefficients required")
    (a1, *_), (b1, b2, *_), (g1, g2, *_) = c.alpha, c.beta, c.gamma
    w, d = c.w, c.d
    bad = []
    if abs(b1 - g1 * w * w) > tol * max(1, abs(b1)):
        bad.append("beta1 = gamma1 w^2")
    if abs(b2 - (w * w * g2 - a1 * g1)) > tol * max(1, abs(b2)):
        bad.append("beta2 = w^2 gamma2 - alpha1 gamma1")
    if abs(d * w * w - 1) <= tol:
        bad.append("d != 1/w^2")
    if g1 == 0:
        bad.append("gamma1 != 0")
    if bad:
        raise PreconditionError("B2 constraints violated: " + ", ".join(bad))


def b2_eigen_expansion(c: FamilyBCoeffs) -> EigSeries:
    """lambda1(eps) = 1 + eps lambda1, lambda2(eps) = 1 + eps^3 lambda2."""
    _check_b2(c)
    pr = av.predictions_family_b(c)
    l1, l2 = pr.lambda1, pr.lambda2
    if l1 < 0 and l2 < 0:
        cls = "attracting"
    elif l1 > 0 and l2 > 0:
        cls = "repelling"
    elif l1 * l2 < 0:
        cls = "unstable-saddle"
    else:
        cls = "non-hyperbolic"
    v = StabilityVerdict(cls, "Murdock-expansion", dict(lambda1=l1, lambda2=l2))
    return EigSeries([[(0, 1.0), (1, l1)], [(0, 1.0), (3, l2)]], 3, v)


# ---------------------------------------------------------------- parameters

def _split_name(name):
    base, idx = name.rstrip("0123456789"), name[len(name.rstrip("0123456789")):]
    return base, int(idx) if idx else None


def get_param(c: Coeffs, name: str) -> float:
    if c.family == "A" or name in ("d", "w", "eps"):
        return float(getattr(c, name))
    base, i = _split_name(name)
    return float(getattr(c, base)[i - 1])


def with_param(c: Coeffs, name: str, value: float) -> Coeffs:
    """Copy of c with one unfolding coefficient replaced (e.g. 'gamma1', 'beta2')."""
    if c.family == "A" or name in ("d", "w", "eps"):
        return replace(c, **{name: value})
    base, i = _split_name(name)
    v = list(getattr(c, base))
    v[i - 1] = value
    return replace(c, **{base: tuple(v)})


# ---------------------------------------------------------------- divergence

def flow_divergence(c: Coeffs) -> float:
    """Constant divergence c - b d of the FHN field at the family's (a, b, c).

    det D Pi = exp((c - b d) T) at a fixed point with return time T, so a
    complex multiplier pair on the unit circle forces c = b d.
    """
    p = family_params(c)
    return float(p.c - p.b * p.d)


def divergence_free_parameter(c: Coeffs, parameter: str) -> float:
    """Value of the unfolding coefficient that makes the flow volume preserving.

    c - b d is affine in every alpha/beta/gamma coefficient, so two
    evaluations give the exact root.
    """
    m0 = get_param(c, parameter)
    f0 = flow_divergence(c)
    f1 = flow_divergence(with_param(c, parameter, m0 + 1.0))
    if f1 == f0:
        raise PreconditionError(f"divergence does not depend on {parameter}")
    return m0 - f0 / (f1 - f0)


# ---------------------------------------------------------------- NS data

@dataclass
class NSReport:
    family: str
    parameter: str
    mu0: float
    w0: float
    d0: float
    d0_numeric: float
    w0_numeric: float
    l1_series: Dict[int, float]
    jstar: Optional[int]
    mu_eps: float  # predicted curve value to available order (leading term)
    torus_side: str
    torus_stability: str
    flags: List[str] = field(default_factory=list)
    valid: bool = True
    mu_volume: float = np.nan  # exact NS value at this eps: c = b d


def _averaged_pair(c: Coeffs, mu_name: str, mu: float):
    """(fixed point, Jacobian) of the lowest nonvanishing averaged function at mu."""
    cc = with_param(c, mu_name, mu)
    if cc.family == "A":
        pr = av.predictions_family_a(cc)
        p = (pr.rstar, pr.zstar)
        return p, av.closed_form_jacobian(av.g1_family_a, p, cc)
    pr = av.predictions_family_b(cc)
    p = (pr.rstar, pr.zstar)
    return p, av.closed_form_jacobian(av.g2_family_b1, p, cc)


def ns_conditions(c: Coeffs, parameter: Optional[str] = None, h: float = 1e-6) -> NSReport:
    """NS hypotheses C1/C2 with a finite-difference check of (w0, d0).

    Family A uses gamma1, Family B1 uses beta2 as the bifurcation parameter.
    """
    flags = []
    if c.family == "A":
        parameter = parameter or "gamma1"
        d, w, a1 = c.d, c.w, c.alpha1
        mu0 = c.beta1 * d
        w0 = np.sqrt(2) * PI * abs(a1) * np.sqrt(d * (1 - w * w * d)) / (d * w ** 3)
        d0 = PI / w
        jstar, lval = 2, av.predictions_family_a(c).l12
        series = {1: 0.0, 2: lval}
    else:
        parameter = parameter or "beta2"
        w, a1, g1, g2 = c.w, c.alpha[0], c.gamma[0], c.gamma[1]
        mu0 = g2 * w * w
        w0 = np.sqrt(2) * PI * abs(a1 * g1) / w ** 3
        d0 = -PI
        jstar, lval = 3, av.predictions_family_b(c).l13
        series = {1: 0.0, 2: 0.0, 3: lval}
    valid = True
    if w0 == 0:
        flags.append("NS-degenerate: w0 = 0 (alpha1 = 0 or gamma1 = 0)")
        valid = False
    # numerical crossing of the averaged-Jacobian eigenvalue path
    try:
        sc = max(1.0, abs(mu0))
        _, Jp = _averaged_pair(c, parameter, mu0 + h * sc)
        _, Jm = _averaged_pair(c, parameter, mu0 - h * sc)
        _, J0 = _averaged_pair(c, parameter, mu0)
        d0n = (np.trace(Jp) - np.trace(Jm)) / 2 / (2 * h * sc)
        w0n = float(np.sqrt(max(np.linalg.det(J0) - (np.trace(J0) / 2) ** 2, 0.0)))
    except (ValueError, ZeroDivisionError, FloatingPointError):
        d0n, w0n = np.nan, np.nan
    if np.isfinite(d0n) and abs(d0n - d0) > 1e-6 * max(abs(d0), 1):
        flags.append(f"d0 erratum: printed {d0:.12g}, measured crossing slope {d0n:.12g}")
    if np.isfinite(w0n) and valid and abs(w0n - w0) > 1e-6 * abs(w0):
        flags.append(f"w0 mismatch: closed form {w0:.12g}, measured {w0n:.12g}")
    if abs(lval) == 0:
        jstar = None
    rep = NSReport(c.family, parameter, mu0, w0, d0, float(d0n), w0n, series, jstar, mu0,
                   "", "", flags, valid)
    rep.torus_side = _side_text(rep)
    rep.torus_stability = _stab(lval)
    try:
        rep.mu_volume = divergence_free_parameter(c, parameter)
        rep.flags.append(
            f"volume-preserving NS: |lambda| = 1 forces c = b d, i.e. {parameter} = "
            f"{rep.mu_volume:.15g} at eps = {c.eps:.6g}; the section map is then area "
            "preserving, the first Lyapunov coefficient vanishes identically, and no "
            "invariant circle exists for any other parameter value")
    except PreconditionError:
        pass
    if c.family == "A":
        rep.flags.append("Family A torus side: the general sign condition gives "
                         f"{rep.torus_side}; the Family A theorem statement prints the opposite "
                         "inequality gamma1 - gamma(eps) > 0")
    return rep


def _stab(l):
    return "repelling" if l > 0 else ("attracting" if l < 0 else "undetermined")


def _side_text(ns: NSReport):
    if ns.jstar is None:
        return "undetermined"
    s = np.sign(ns.l1_series[ns.jstar] * ns.d0)
    return "mu - mu(eps) < 0" if s > 0 else "mu - mu(eps) > 0"


@dataclass
class TorusVerdict:
    side: str  # torus side, no-torus side, on-curve, undetermined
    torus_stability: str
    orbit_stability: str
    sign_value: float


def torus_verdict(ns: NSReport, mu: float, mu_curve: Optional[float] = None,
                  tol: float = 0.0) -> TorusVerdict:
    """Evaluate l_{1,j*} (mu - mu(eps)) d0 < 0 (torus side) versus >= 0."""
    mc = ns.mu_eps if mu_curve is None else mu_curve
    if ns.jstar is None:
        return TorusVerdict("undetermined", "undetermined", "undetermined", np.nan)
    l = ns.l1_series[ns.jstar]
    s = l * (mu - mc) * ns.d0
    ts = _stab(l)
    opp = {"repelling": "attracting", "attracting": "repelling"}.get(ts, "undetermined")
    if abs(mu - mc) <= tol:
        return TorusVerdict("on-curve", ts, "non-hyperbolic", s)
    if s < 0:
        return TorusVerdict("torus side", ts, opp, s)
    # no torus; the orbit's stability is that of the torus-less side
    return TorusVerdict("no-torus side", "none", ts, s)


def lyapunov_closed_form(c: Coeffs) -> Tuple[int, float]:
    if c.family == "A":
        return 2, av.predictions_family_a(c).l12
    return 3, av.predictions_family_b(c).l13


# ---------------------------------------------------------------- Lyapunov

def real_jordan_frame(J):
    """P with P^-1 J P = [[a, -b], [b, a]], b > 0.

    The eigenvector q of a + ib is scaled to unit first component, so P is
    the identity when J is already in that form.  Returns (P, lam).
    """
    ev, V = np.linalg.eig(np.asarray(J, dtype=float))
    if abs(ev[0].imag) == 0:
        raise PreconditionError("Jacobian has real eigenvalues; no rotation part")
    i = int(np.argmax(ev.imag))
    q = V[:, i]
    if abs(q[0]) < 1e-14 * np.abs(q).max():
        raise PreconditionError("eigenvector normalization undefined (q0 = 0)")
    q = q / q[0]
    P = np.column_stack([q.real, -q.imag])
    return P, ev[i]


@dataclass
class LyapunovResult:
    value: float  # printed formula, printed p, real Jordan frame
    value_normalized: float  # normalized eigenpair, same frame
    theta: float
    frame: np.ndarray
    frame_condition: float
    eigenvalue: complex
    sign_agree: bool


def _printed_formula(Bf, Cf, theta, p):
    pb = np.conj(p)
    E = np.exp(1j * theta)
    ip = np.vdot
    t = (0.5 * np.exp(-1j * theta) * ip(p, Cf(p, p, pb))
         - np.exp(-2j * theta) * (1 - 2 * E) / (2 * (1 - E)) * ip(p, Bf(p, p)) * ip(p, Bf(p, pb)))
    return float(t.real - abs(ip(p, Bf(pb, pb))) ** 2 / 4 - abs(ip(p, Bf(p, pb))) ** 2 / 2)


def _normalized_formula(J, Bf, Cf, lam):
    I2 = np.eye(2)
    ev, V = np.linalg.eig(J)
    q = V[:, int(np.argmin(abs(ev - lam)))]
    q = q / np.linalg.norm(q)
    evT, W = np.linalg.eig(J.T)
    p = W[:, int(np.argmin(abs(evT - np.conj(lam))))]
    p = p / np.conj(np.vdot(p, q))
    h20 = Bf(q, q)
    h11 = Bf(q, np.conj(q))
    t = (np.vdot(p, Cf(q, q, np.conj(q)))
         + 2 * np.vdot(p, Bf(q, np.linalg.solve(I2 - J, h11)))
         + np.vdot(p, Bf(np.conj(q), np.linalg.solve(lam ** 2 * I2 - J, h20))))
    return float(0.5 * (np.conj(lam) * t).real)


def lyapunov_coeff(md: MapDerivatives, theta: Optional[float] = None,
                   resonance_tol: float = 1e-4) -> LyapunovResult:
    """First Lyapunov coefficient of the section map at a fixed point.

    The map derivatives are pushed to the real Jordan frame; the printed
    formula is evaluated with p = (1/2, -i/sqrt 2) there.  theta defaults
    to the argument of the computed eigenvalue.
    """
    P, lam = real_jordan_frame(md.jacobian)
    th = float(np.angle(lam)) if theta is None else float(theta)
    for k in (1, 2, 3, 4):
        if abs(1 - np.exp(1j * k * th)) < resonance_tol:
            raise ResonanceError(f"strong resonance: |1 - e^(i {k} theta)| < {resonance_tol}")
    Pi = np.linalg.inv(P)
    Jy = Pi @ md.jacobian @ P
    By = np.einsum("ab,bij,ic,jd->acd", Pi, md.B, P, P)
    Cy = np.einsum("ab,bijk,ic,jd,ke->acde", Pi, md.C, P, P, P)
    Bf = lambda u, v: np.einsum("aij,i,j->a", By, u, v)
    Cf = lambda u, v, x: np.einsum("aijk,i,j,k->a", Cy, u, v, x)
    val = _printed_formula(Bf, Cf, th, P_PRINTED)
    lam_y = np.linalg.eigvals(Jy)
    lam_y = lam_y[np.argmax(lam_y.imag)]
    nval = _normalized_formula(Jy, Bf, Cf, lam_y)
    return LyapunovResult(val, nval, th, P, float(np.linalg.cond(P)), lam,
                          bool(np.sign(val) == np.sign(nval)))


# ---------------------------------------------------------------- NS curve

@dataclass
class NSPoint:
    mu: float
    fixed: FixedPointResult
    modulus_defect: float  # |lambda| - 1 at mu
    theta: float
    iterations: int
    history: List[Tuple[float, float]]


def locate_ns_curve(m: SectionMap, parameter: str, mu_seed: float, guess,
                    mu_step: Optional[float] = None, tol: float = 1e-12,
                    max_iter: int = 30) -> NSPoint:
    """Secant on |lambda(mu)| - 1 with the fixed point re-solved at each mu."""
    c = m.coeffs
    hist = []
    g = np.asarray(guess, dtype=float)

    def defect(mu, g):
        mm = m.with_coeffs(with_param(c, parameter, mu))
        fp = fixed_point(mm, g)
        lam = fp.eigenvalues[np.argmax(np.abs(fp.eigenvalues.imag))]
        if lam.imag == 0:
            raise PreconditionError(f"real multipliers at mu={mu}; not an NS point")
        return abs(lam) - 1, fp, lam

    step = mu_step if mu_step is not None else 1e-3 * max(abs(mu_seed), 1e-3)
    m0, m1 = mu_seed, mu_seed + step
    f0, fp0, _ = defect(m0, g)
    f1, fp1, lam = defect(m1, fp0.rz)
    hist += [(m0, f0), (m1, f1)]
    it = 0
    while abs(f1) > tol and it < max_iter:
        if f1 == f0:
            break
        m2 = m1 - f1 * (m1 - m0) / (f1 - f0)
        m0, f0 = m1, f1
        m1 = m2
        f1, fp1, lam = defect(m1, fp1.rz)
        hist.append((m1, f1))
        it += 1
        if abs(m1 - m0) <= 1e-15 * max(1.0, abs(m1)):
            break
    return NSPoint(m1, fp1, f1, float(np.angle(lam)), it, hist)
