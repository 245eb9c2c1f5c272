"""Invariant circles of the section map (invariant tori of the flow).

Circles are represented as radial graphs rho(phi) around a fixed point in
the real Jordan frame of its multipliers, y = P^-1 (x - x*), with rho a
truncated Fourier series.  A circle can come from a long orbit tail
(attracting circles forward, repelling ones under the reversed-time map)
or from a Gauss-Newton solve of the invariance equation

    |y'(phi)| = rho(arg y'(phi)),   y'(phi) = image of rho(phi) u(phi),

at collocation angles, which needs no iteration and handles either
stability.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .dynsys import phys_to_standard, scaled_field
from .poincare import MapError, SectionMap, _ReversedMap, map_rz

__all__ = [
    "SectionOrbit", "InvariantCircle", "CircleFitError", "ClassificationError",
    "WindingError", "iterate_section", "fit_invariant_circle", "rotation_number",
    "classify_circle", "polish_invariant_circle", "radial_growth", "seed_circle",
    "section_entry", "invariance_defect", "continue_invariant_circle", "CirclePoint",
    "TorusCheck", "verify_torus",
]

TWO_PI = 2 * np.pi


class CircleFitError(ValueError):
    pass


class ClassificationError(ValueError):
    """Probes disagree: not a normally hyperbolic circle at this resolution."""


class WindingError(ValueError):
    pass


@dataclass
class SectionOrbit:
    points: np.ndarray  # (n + 1, 2) section points (r, z)
    map: object
    n: int
    backward: bool = False
    diverged: bool = False

    def tail(self, frac: float = 0.5):
        k = int(len(self.points) * frac)
        return SectionOrbit(self.points[k:], self.map, len(self.points) - k - 1, self.backward)


def iterate_section(m, start, n: int, backward: bool = False,
                    stop_on_divergence: bool = True) -> SectionOrbit:
    """n images of start under the map (reversed-time map if backward)."""
    mm = m.reversed() if (backward and not isinstance(m, _ReversedMap)) else m
    pts = [np.array([start[0], start[1]], dtype=float)]
    diverged = False
    for _ in range(n):
        try:
            pts.append(map_rz(mm, pts[-1]))
        except MapError:
            if not stop_on_divergence:
                raise
            diverged = True
            break
    return SectionOrbit(np.array(pts), m, len(pts) - 1, backward, diverged)


def section_entry(m: SectionMap, point, t_max: Optional[float] = None, standard: bool = False):
    """First crossing of theta = 0 (x2 = 0, x1 > 0) of the flow from a point.

    point is physical unless standard=True (scaled standard coordinates).
    Returns (r, z, t).
    """
    c = m.coeffs
    p = np.asarray(point, dtype=float)
    x0 = p if standard else phys_to_standard(p, c)
    t_max = t_max if t_max is not None else 10 * TWO_PI / c.w

    def rhs(t, x):
        return scaled_field(x, c)

    def ev(t, x):
        return x[1]
    ev.terminal = True
    ev.direction = 1  # theta increases through 0 with x1 > 0
    sol = solve_ivp(rhs, (0, t_max), x0, method="DOP853", rtol=m.rtol, atol=m.atol * max(1, np.abs(x0).max()),
                    events=ev)
    if not sol.t_events[0].size:
        raise MapError("no section crossing within the time window")
    xe = sol.y_events[0][0]
    return float(np.hypot(xe[0], xe[1])), float(xe[2]), float(sol.t_events[0][0])


# ---------------------------------------------------------------- circles

def _basis(phi, order):
    phi = np.atleast_1d(phi)
    cols = [np.ones_like(phi)]
    for k in range(1, order + 1):
        cols += [np.cos(k * phi), np.sin(k * phi)]
    return np.stack(cols, axis=-1)


def _dbasis(phi, order):
    phi = np.atleast_1d(phi)
    cols = [np.zeros_like(phi)]
    for k in range(1, order + 1):
        cols += [-k * np.sin(k * phi), k * np.cos(k * phi)]
    return np.stack(cols, axis=-1)


@dataclass
class InvariantCircle:
    center: np.ndarray  # fixed point (r, z)
    frame: np.ndarray  # P, x = center + P y
    coeffs: np.ndarray  # Fourier coefficients of rho(phi): a0, a1, b1, a2, b2, ...
    residual: float = np.nan
    defect: float = np.nan
    rotation: float = np.nan
    warnings: List[str] = field(default_factory=list)

    @property
    def order(self):
        return (len(self.coeffs) - 1) // 2

    def rho(self, phi):
        return _basis(phi, self.order) @ self.coeffs

    def points(self, phi):
        phi = np.atleast_1d(phi)
        rho = self.rho(phi)
        y = np.stack([rho * np.cos(phi), rho * np.sin(phi)], axis=-1)
        return self.center + y @ self.frame.T

    def to_frame(self, x):
        y = np.linalg.solve(self.frame, (np.atleast_2d(x) - self.center).T).T
        return np.hypot(y[:, 0], y[:, 1]), np.arctan2(y[:, 1], y[:, 0])

    def distance(self, x):
        """Radial distance (in the section metric) of points x to the curve."""
        rho, phi = self.to_frame(x)
        dr = rho - self.rho(phi)
        u = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
        return np.linalg.norm((dr[:, None] * u) @ self.frame.T, axis=1)

    @property
    def mean_radius(self):
        """Mean distance of the curve from the fixed point in the section metric."""
        phi = np.linspace(0, TWO_PI, 256, endpoint=False)
        return float(np.mean(np.linalg.norm(self.points(phi) - self.center, axis=1)))


def fit_invariant_circle(orbit: SectionOrbit, center, frame=None, order: int = 8,
                         max_residual: Optional[float] = None, min_points: int = 64,
                         coverage: float = 0.9) -> InvariantCircle:
    """Least-squares Fourier fit of rho(phi) to an orbit tail."""
    pts = np.asarray(orbit.points, dtype=float)
    if len(pts) < min_points:
        raise CircleFitError(f"need at least {min_points} points, got {len(pts)}")
    P = np.eye(2) if frame is None else np.asarray(frame, dtype=float)
    c = np.asarray(center, dtype=float)
    y = np.linalg.solve(P, (pts - c).T).T
    rho, phi = np.hypot(y[:, 0], y[:, 1]), np.arctan2(y[:, 1], y[:, 0])
    bins = np.unique(np.floor((phi + np.pi) / TWO_PI * 64).astype(int) % 64)
    if len(bins) < coverage * 64:
        raise CircleFitError(f"angular coverage {len(bins) / 64:.2f} below {coverage} "
                             "(possible rational rotation lock)")
    order = min(order, (len(pts) - 1) // 4)
    A = _basis(phi, order)
    co = np.linalg.lstsq(A, rho, rcond=None)[0]
    circ = InvariantCircle(c, P, co)
    circ.residual = float(circ.distance(pts).max())
    if max_residual is not None and circ.residual > max_residual:
        raise CircleFitError(f"fit residual {circ.residual:.3e} above {max_residual:.3e}")
    return circ


def invariance_defect(m, circle: InvariantCircle, samples: int = 32) -> float:
    """max over curve samples of the distance from the image point to the curve."""
    phi = np.linspace(0, TWO_PI, samples, endpoint=False)
    imgs = np.array([map_rz(m, x) for x in circle.points(phi)])
    return float(circle.distance(imgs).max())


def _defect_system(m, co, c, P, Pi, phi, h, m_mu=None):
    """Radial defect R, its Jacobian in the Fourier coefficients, and dR/dmu.

    m_mu = (m_plus, m_minus, 2 h_mu) adds a parameter column by central
    differences.
    """
    order = (len(co) - 1) // 2
    Bk = _basis(phi, order)
    u = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
    X = c + ((Bk @ co)[:, None] * u) @ P.T
    hh = h if h is not None else 1e-5 * max(1.0, float(np.abs(X).max()))
    R = np.empty(len(phi))
    G = np.empty((len(phi), len(co)))
    Gm = np.empty(len(phi)) if m_mu is not None else None
    for i in range(len(phi)):
        img = map_rz(m, X[i])
        J = np.empty((2, 2))
        for j in range(2):
            e = np.zeros(2)
            e[j] = hh
            J[:, j] = (map_rz(m, X[i] + e) - map_rz(m, X[i] - e)) / (2 * hh)
        y = Pi @ (img - c)
        rr, ph = np.hypot(*y), np.arctan2(y[1], y[0])
        b, db = _basis(ph, order)[0], _dbasis(ph, order)[0] @ co
        gr, gp = y / rr, np.array([-y[1], y[0]]) / rr ** 2
        R[i] = rr - b @ co
        # d y / d co_j = Pi J P u_i basis_j(phi_i)
        dy = (Pi @ J @ P @ u[i])[:, None] * Bk[i][None, :]
        G[i] = gr @ dy - b - db * (gp @ dy)
        if m_mu is not None:
            dym = Pi @ (map_rz(m_mu[0], X[i]) - map_rz(m_mu[1], X[i])) / m_mu[2]
            Gm[i] = gr @ dym - db * (gp @ dym)
    return R, G, Gm


def _finish(m, circle, hist):
    circle.residual = hist[-1] if hist else np.nan
    circle.defect = invariance_defect(m, circle)
    if circle.rho(np.linspace(0, TWO_PI, 256)).min() <= 0:
        circle.warnings.append("radius profile not positive: not a circle around the fixed point")
    return circle


def _start(circle, order, nodes):
    order = circle.order if order is None else order
    nodes = nodes if nodes is not None else 4 * order + 8
    co = np.zeros(2 * order + 1)
    k = min(len(co), len(circle.coeffs))
    co[:k] = circle.coeffs[:k]
    return co, np.linspace(0, TWO_PI, nodes, endpoint=False)


def polish_invariant_circle(m, circle: InvariantCircle, order: Optional[int] = None,
                            nodes: Optional[int] = None, iters: int = 12, tol: float = 1e-11,
                            h: Optional[float] = None) -> InvariantCircle:
    """Gauss-Newton on the radial invariance defect at collocation angles.

    Residual R_k = |y'_k| - rho(arg y'_k), y'_k the frame image of the curve
    point at phi_k.  The map Jacobian at each node comes from central
    differences, so one step costs 5 K map evaluations.  With the parameter
    fixed the fixed point itself (rho = 0) also solves the system; use
    continue_invariant_circle to pin the amplitude instead.
    """
    co, phi = _start(circle, order, nodes)
    P, Pi, c = circle.frame, np.linalg.inv(circle.frame), circle.center
    hist = []
    for _ in range(iters):
        R, G, _ = _defect_system(m, co, c, P, Pi, phi, h)
        step = np.linalg.lstsq(G, -R, rcond=None)[0]
        co = co + step
        hist.append(float(np.abs(R).max()))
        if np.abs(step).max() <= tol * max(1.0, abs(co[0])):
            break
        if len(hist) > 1 and hist[-1] > 0.9 * hist[-2]:
            break
    return _finish(m, InvariantCircle(c, P, co), hist)


@dataclass
class CirclePoint:
    circle: InvariantCircle
    parameter: str
    mu: float
    iterations: int
    converged: bool


def continue_invariant_circle(m, circle: InvariantCircle, parameter: str, mu: float,
                              order: Optional[int] = None, nodes: Optional[int] = None,
                              iters: int = 15, tol: float = 1e-9, h: Optional[float] = None,
                              h_mu: Optional[float] = None) -> CirclePoint:
    """Invariant circle with prescribed mean frame radius a0, parameter free.

    Unknowns are the non-constant Fourier coefficients and the parameter
    value; the sign of mu - mu_NS along the branch gives the torus side.
    """
    from .bifurcation import with_param

    co, phi = _start(circle, order, nodes)
    P, Pi, c = circle.frame, np.linalg.inv(circle.frame), circle.center
    base = m.coeffs

    def at(v):
        return m.with_coeffs(with_param(base, parameter, v))

    hist, ok, it = [], False, 0
    for it in range(1, iters + 1):
        hm = h_mu if h_mu is not None else 1e-6 * max(1.0, abs(mu))
        R, G, Gm = _defect_system(at(mu), co, c, P, Pi, phi, h, (at(mu + hm), at(mu - hm), 2 * hm))
        A = np.column_stack([G[:, 1:], Gm])
        step = np.linalg.lstsq(A, -R, rcond=None)[0]
        co[1:] += step[:-1]
        mu += step[-1]
        hist.append(float(np.abs(R).max()))
        small = np.abs(step[:-1]).max() <= tol * max(1.0, abs(co[0]))
        # least-squares floor: residual no longer decreasing
        stalled = len(hist) > 1 and hist[-1] > 0.9 * hist[-2]
        if small or stalled:
            ok = True
            break
    circ = _finish(at(mu), InvariantCircle(c, P, co), hist)
    return CirclePoint(circ, parameter, float(mu), it, ok)


# ---------------------------------------------------------------- dynamics

def rotation_number(orbit: SectionOrbit, center, frame=None) -> float:
    """Birkhoff-weighted mean angular increment per iterate, over 2 pi."""
    P = np.eye(2) if frame is None else np.asarray(frame, dtype=float)
    y = np.linalg.solve(P, (np.asarray(orbit.points) - np.asarray(center)).T).T
    ang = np.arctan2(y[:, 1], y[:, 0])
    d = np.angle(np.exp(1j * np.diff(ang)))
    if len(d) < 2 or abs(np.sum(d)) < TWO_PI:
        raise WindingError("orbit does not wind around the center")
    t = (np.arange(len(d)) + 0.5) / len(d)
    wgt = np.exp(-1 / (t * (1 - t)))
    return float(np.sum(wgt * d) / np.sum(wgt) / TWO_PI)


def radial_growth(m, center, frame, radius: float, n: int, phi0: float = 0.0) -> float:
    """Mean log growth of |y| per iterate for a start at frame radius `radius`."""
    P = np.asarray(frame, dtype=float)
    x0 = np.asarray(center) + P @ (radius * np.array([np.cos(phi0), np.sin(phi0)]))
    orb = iterate_section(m, x0, n)
    if orb.diverged:
        return np.inf
    y = np.linalg.solve(P, (orb.points - np.asarray(center)).T).T
    rr = np.hypot(y[:, 0], y[:, 1])
    return float(np.mean(np.diff(np.log(rr))))


def seed_circle(m, center, frame, radii: Sequence[float], n: int) -> Optional[float]:
    """Radius where the mean radial growth changes sign (linear interpolation)."""
    g = [radial_growth(m, center, frame, r, n) for r in radii]
    for (r0, g0), (r1, g1) in zip(zip(radii, g), zip(radii[1:], g[1:])):
        if np.isfinite(g0) and np.isfinite(g1) and g0 * g1 < 0:
            return r0 - g0 * (r1 - r0) / (g1 - g0)
    return None


@dataclass
class CircleClass:
    stability: str
    forward: List[float]  # distance ratios after n iterates (inner, outer)
    backward: List[float]


def classify_circle(m, circle: InvariantCircle, delta: float = 0.1, n: int = 50,
                    phi0: float = 0.3) -> CircleClass:
    """Launch probes at rho (1 +- delta) and compare distances after n iterates.

    attracting: both probes approach forward and recede under the reversed map;
    repelling: the mirror image.  Anything else (neutral circles of an area
    preserving map, slow spirals) is mixed.
    """
    rho0 = float(circle.rho(phi0)[0])
    u = np.array([np.cos(phi0), np.sin(phi0)])
    probes = [circle.center + circle.frame @ (rho0 * (1 + s * delta) * u) for s in (-1, 1)]

    def ratios(mm):
        out = []
        for p in probes:
            d0 = circle.distance(p)[0]
            orb = iterate_section(mm, p, n)
            if orb.diverged:
                out.append(np.inf)
                continue
            out.append(float(circle.distance(orb.points[-1])[0] / d0))
        return out

    fw = ratios(m)
    bw = ratios(m.reversed() if not isinstance(m, _ReversedMap) else m.base)
    if all(r < 1 for r in fw) and all(r > 1 for r in bw):
        return CircleClass("attracting", fw, bw)
    if all(r > 1 for r in fw) and all(r < 1 for r in bw):
        return CircleClass("repelling", fw, bw)
    raise ClassificationError(f"mixed probe behavior: forward {fw}, backward {bw}")


# ---------------------------------------------------------------- pipeline

@dataclass
class TorusCheck:
    """Everything measured when looking for an invariant circle at one parameter value."""
    mu: float
    divergence: float  # c - b d; nonzero rules out invariant circles
    fixed_point: np.ndarray
    multipliers: np.ndarray
    fixed_stability: str
    frame: np.ndarray
    orbit: SectionOrbit
    circle: Optional[InvariantCircle]
    mean_radius: float = np.nan
    defect: float = np.nan
    defect_tight: float = np.nan  # same, integrator tolerances / 10
    radial_drift: float = np.nan  # relative change of the fitted a0 per iterate
    rotation: float = np.nan
    classification: str = "none"
    class_detail: str = ""
    invariant: bool = False
    notes: List[str] = field(default_factory=list)


def _fixed_stability(mods, tol=1e-12):
    if np.all(mods < 1 - tol):
        return "attracting"
    if np.all(mods > 1 + tol):
        return "repelling"
    if np.all(np.abs(mods - 1) <= tol):
        return "neutral"
    return "saddle"


def verify_torus(m: SectionMap, start, guess, n_iter: int = 600, order: int = 8,
                 defect_rel: float = 1e-3, probe_delta: float = 0.1, probe_n: int = 50) -> TorusCheck:
    """Iterate, fit, test invariance (including the tolerance-refinement test), classify."""
    from .bifurcation import flow_divergence, real_jordan_frame
    from .poincare import fixed_point

    c = m.coeffs
    fp = fixed_point(m, guess)
    mods = np.abs(fp.eigenvalues)
    P, _ = real_jordan_frame(fp.jacobian)
    div = flow_divergence(c)
    orb = iterate_section(m, start, n_iter)
    chk = TorusCheck(mu=np.nan, divergence=div, fixed_point=fp.rz, multipliers=fp.eigenvalues,
                     fixed_stability=_fixed_stability(mods), frame=P, orbit=orb, circle=None)
    if orb.diverged:
        chk.notes.append(f"orbit left the domain after {orb.n} iterates")
        return chk
    tail = orb.tail(0.5)
    try:
        circ = fit_invariant_circle(tail, fp.rz, P, order=order)
    except CircleFitError as e:
        chk.notes.append(f"fit failed: {e}")
        return chk
    chk.circle = circ
    chk.mean_radius = circ.mean_radius
    half = len(tail.points) // 2
    try:
        a = fit_invariant_circle(SectionOrbit(tail.points[:half], m, half - 1), fp.rz, P, order=order)
        b = fit_invariant_circle(SectionOrbit(tail.points[half:], m, half - 1), fp.rz, P, order=order)
        chk.radial_drift = float((b.coeffs[0] - a.coeffs[0]) / circ.coeffs[0] / half)
    except CircleFitError:
        pass
    chk.defect = invariance_defect(m, circ)
    tight = replace(m, rtol=m.rtol / 10, atol=m.atol / 10)
    chk.defect_tight = invariance_defect(tight, circ)
    try:
        chk.rotation = rotation_number(tail, fp.rz, P)
    except WindingError as e:
        chk.notes.append(str(e))
    try:
        cl = classify_circle(m, circ, delta=probe_delta, n=probe_n)
        chk.classification = cl.stability
        chk.class_detail = f"forward {cl.forward}, backward {cl.backward}"
    except ClassificationError as e:
        chk.classification = "mixed"
        chk.class_detail = str(e)
    small = chk.defect < defect_rel * chk.mean_radius
    shrinks = chk.defect_tight < 0.5 * chk.defect
    chk.invariant = bool(small and shrinks)
    if small and not shrinks:
        chk.notes.append("invariance defect does not shrink with tighter tolerances: "
                         "dynamics-dominated (slow drift), not an invariant curve")
    if div != 0:
        chk.notes.append(f"flow divergence c - b d = {div:.6g} != 0: the map scales the flux "
                         "area by exp(div T) > 0 everywhere, so no invariant circle can enclose "
                         "the fixed point")
    return chk
