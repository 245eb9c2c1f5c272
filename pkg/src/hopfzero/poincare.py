"""Return map of the cylindrical standard form on the section theta = 0 (mod 2 pi).

A section point (r, z) is lifted to the standard coordinates (r, 0, z),
the full cubic flow is integrated, and the angle theta of (x1, x2) is
carried along as an extra state variable (theta' = (x1 x2' - x2 x1') / r^2),
so the return is the first time theta reaches 2 pi n.  The flow is
integrated in the eps-scaled standard coordinates, an exact linear
conjugate of the physical flow (X, Y, Z) = eps (x1, x2, x3),
(x, y, z) = M (X, Y, Z); ``frame="physical"`` integrates the physical
state instead (eps != 0 only).

Derivatives of the map (Jacobian, bilinear B, trilinear C) come from
central finite differences with optional Richardson extrapolation, or
from a least-squares Chebyshev fit of the map on a small square around
the base point (``map_derivatives_fit``), which is far less sensitive to
the integrator noise.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from math import factorial
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import chebyshev as cheb
from scipy.integrate import solve_ivp

from .dynsys import Coeffs, CylPoint, family_params, transform_matrix
from .stiff_integrator import (Event, IntegratorConfig, IvpProblem, bdf_integrate,
                               rk_integrate)

__all__ = [
    "SectionMap", "ExplicitMap", "FixedPointResult", "MapDerivatives", "OrbitSamples",
    "MapError", "DivergenceError", "SectionFoldError", "DegenerateMapError",
    "NewtonError", "poincare_map", "map_rz", "fixed_point", "map_jacobian",
    "map_derivatives", "map_derivatives_fit", "tensor_derivatives", "orbit_from_section",
]

TWO_PI = 2 * np.pi
ULP = np.finfo(float).eps


class MapError(RuntimeError):
    pass


class DivergenceError(MapError):
    """Trajectory left the bounding box before returning to the section."""


class SectionFoldError(MapError):
    """theta stopped increasing: the section is not transversal along this orbit."""


class DegenerateMapError(MapError):
    """The map is the identity (eps = 0); fixed points are not isolated."""


class NewtonError(MapError):
    pass


@dataclass(frozen=True)
class SectionMap:
    coeffs: Coeffs
    n: int = 1
    rtol: float = 1e-12
    atol: float = 1e-14
    backend: str = "dop853"  # or "rk", "bdf" (own integrators)
    frame: str = "scaled"  # or "physical"
    bound: float = 1e7
    max_periods: float = 50.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("return count n must be positive")
        if self.backend not in ("dop853", "rk", "bdf"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.frame not in ("scaled", "physical"):
            raise ValueError(f"unknown frame {self.frame!r}")
        if self.frame == "physical" and self.coeffs.eps == 0:
            raise ValueError("physical frame needs eps != 0")

    @property
    def family(self):
        return self.coeffs.family

    def with_coeffs(self, coeffs):
        return replace(self, coeffs=coeffs)

    def reversed(self):
        return _ReversedMap(self)


class _ReversedMap:
    """Backward-time return map (inverse of the forward map)."""

    def __init__(self, m: SectionMap):
        self.base = m

    def __getattr__(self, k):
        return getattr(self.base, k)


@dataclass(frozen=True)
class ExplicitMap:
    """A planar map given in closed form, for driving the section tools directly.

    `fun` maps an (r, z) array to its image; `inverse` (optional) is used
    wherever the reversed map is needed.
    """
    fun: Callable
    inverse: Optional[Callable] = None

    def reversed(self):
        if self.inverse is None:
            raise MapError("explicit map has no inverse")
        return ExplicitMap(self.inverse, self.fun)


@dataclass
class FixedPointResult:
    location: CylPoint
    residual: float
    jacobian: np.ndarray
    eigenvalues: np.ndarray
    iterations: int
    jacobian_error: float = float("nan")
    return_time: float = float("nan")

    @property
    def rz(self):
        return np.array([self.location.r, self.location.z])

    @property
    def moduli(self):
        return np.abs(self.eigenvalues)


@dataclass
class MapDerivatives:
    jacobian: np.ndarray
    B: np.ndarray  # B[a, i, j]
    C: np.ndarray  # C[a, i, j, k]
    base: CylPoint
    steps: dict
    B_error: np.ndarray = field(default=None)
    C_error: np.ndarray = field(default=None)
    J_error: np.ndarray = field(default=None)
    B_asymmetry: float = 0.0
    C_asymmetry: float = 0.0

    def bilinear(self, u, v):
        return np.einsum("aij,i,j->a", self.B, u, v)

    def trilinear(self, u, v, x):
        return np.einsum("aijk,i,j,k->a", self.C, u, v, x)


@dataclass
class OrbitSamples:
    t: np.ndarray
    standard: np.ndarray  # (N, 3) scaled standard coordinates
    physical: np.ndarray  # (N, 3)
    period: float
    closure_error: float


# ----------------------------------------------------------- the flow

def _rhs_factory(c: Coeffs, frame: str):
    a, b, cc = c.abc()
    d, e = c.d, c.eps
    M = transform_matrix(c)
    Mi = np.linalg.inv(M)
    if frame == "scaled":
        def rhs(t, s):
            x1, x2, x3 = s[0], s[1], s[2]
            ux = M[0, 0] * x1 + M[0, 1] * x2 + M[0, 2] * x3
            uy = M[1, 0] * x1 + M[1, 1] * x2 + M[1, 2] * x3
            uz = M[2, 0] * x1 + M[2, 1] * x2 + M[2, 2] * x3
            f0 = uz
            f1 = b * (ux - d * uy)
            f2 = e * e * ux ** 3 - e * (1 + a) * ux * ux + a * ux + uy + cc * uz
            d1 = Mi[0, 0] * f0 + Mi[0, 1] * f1 + Mi[0, 2] * f2
            d2 = Mi[1, 0] * f0 + Mi[1, 1] * f1 + Mi[1, 2] * f2
            d3 = Mi[2, 0] * f0 + Mi[2, 1] * f1 + Mi[2, 2] * f2
            th = (x1 * d2 - x2 * d1) / (x1 * x1 + x2 * x2)
            return np.array([d1, d2, d3, th])

        def to_std(s):
            return s[:3]

        def from_std(x):
            return np.asarray(x, dtype=float)
    else:
        def rhs(t, s):
            x, y, z = s[0], s[1], s[2]
            f = np.array([z, b * (x - d * y), (x - a) * (x - 1) * x + y + cc * z])
            xs = Mi @ s[:3] / e
            ds = Mi @ f / e
            th = (xs[0] * ds[1] - xs[1] * ds[0]) / (xs[0] ** 2 + xs[1] ** 2)
            return np.array([f[0], f[1], f[2], th])

        def to_std(s):
            return Mi @ s[:3] / e

        def from_std(x):
            return e * (M @ np.asarray(x, dtype=float))
    return rhs, to_std, from_std


def _integrate_return(m: SectionMap, rz, backward=False, dense=False):
    """Integrate from (r, 0, z) until theta = +-2 pi n.  Returns (state, t, sol)."""
    c = m.coeffs
    rhs, to_std, from_std = _rhs_factory(c, m.frame)
    r, z = float(rz[0]), float(rz[1])
    if not (np.isfinite(r) and np.isfinite(z)):
        raise MapError("non-finite section point")
    x0 = from_std([r, 0.0, z])
    s0 = np.r_[x0, 0.0]
    sgn = -1.0 if backward else 1.0
    target = sgn * TWO_PI * m.n
    w = c.w
    t_max = sgn * m.max_periods * m.n * TWO_PI / w
    scale = max(1.0, abs(r), abs(z))
    phys_scale = abs(c.eps) * np.abs(transform_matrix(c)).max() if m.frame == "physical" else 1.0
    atol = np.array([m.atol * scale * phys_scale] * 3 + [m.atol])

    def ev_section(t, s):
        return s[3] - target
    ev_section.terminal = True
    ev_section.direction = sgn

    def ev_bound(t, s):
        return m.bound - np.max(np.abs(to_std(s)))
    ev_bound.terminal = True
    ev_bound.direction = -1

    if m.backend == "dop853":
        sol = solve_ivp(rhs, (0.0, t_max), s0, method="DOP853", rtol=m.rtol, atol=atol,
                        events=(ev_section, ev_bound), dense_output=dense)
        if sol.status == -1:
            raise DivergenceError(f"integration failed: {sol.message}")
        if sol.t_events[1].size:
            raise DivergenceError("trajectory left the bounding box")
        if not sol.t_events[0].size:
            _check_fold(sol.y[3], sgn)
            raise MapError("no return to the section within the time window")
        _check_fold(sol.y[3], sgn)
        te = float(sol.t_events[0][0])
        se = sol.y_events[0][0]
        return se, te, sol

    integ = rk_integrate if m.backend == "rk" else bdf_integrate
    cfg = IntegratorConfig(rtol=max(m.rtol, 1e-14), atol=float(np.min(atol)))
    prob = IvpProblem(rhs, 0.0, t_max, s0)
    tr = integ(prob, cfg, events=(Event(ev_section, int(sgn)), Event(ev_bound, -1)))
    _check_fold(tr.y[:, 3], sgn)
    if tr.t_event is None:
        raise MapError("no return to the section within the time window")
    if abs(ev_bound(tr.t_event, tr.y_event)) < 1e-9 * m.bound:
        raise DivergenceError("trajectory left the bounding box")
    # refine on the true flow: secant in t on theta(t) - target, re-integrating
    # from the last accepted step before the crossing
    k = int(np.searchsorted(sgn * tr.t, sgn * tr.t_event)) - 1
    k = max(k, 0)
    ta, sa = tr.t[k], tr.y[k]

    def theta_at(t):
        if t == ta:
            return sa
        sub = IvpProblem(rhs, ta, t, sa)
        return integ(sub, cfg).y_final

    t0, t1 = tr.t_event, tr.t_event + 1e-6 * sgn
    s_0, s_1 = theta_at(t0), theta_at(t1)
    g0, g1 = s_0[3] - target, s_1[3] - target
    for _ in range(20):
        if abs(g0) < 1e-13 or g1 == g0:
            break
        t2 = t0 - g0 * (t0 - t1) / (g0 - g1)
        t1, s_1, g1 = t0, s_0, g0
        t0 = t2
        s_0 = theta_at(t0)
        g0 = s_0[3] - target
    return s_0, t0, tr


def _check_fold(theta, sgn):
    dth = np.diff(sgn * np.asarray(theta))
    if dth.size and np.min(dth) < 0:
        raise SectionFoldError("theta is not monotone along the orbit")


def _to_rz(m: SectionMap, s):
    _, to_std, _ = _rhs_factory(m.coeffs, m.frame)
    x = to_std(s)
    return np.array([np.hypot(x[0], x[1]), x[2]])


def map_rz(m, rz, return_time=False):
    """Map a section point given as an array (r, z); r = 0 is singular."""
    if isinstance(m, ExplicitMap):
        out = np.asarray(m.fun(np.asarray(rz, dtype=float)), dtype=float)
        if not np.all(np.isfinite(out)):
            raise DivergenceError("explicit map returned a non-finite image")
        return (out, np.nan) if return_time else out
    backward = isinstance(m, _ReversedMap)
    base = m.base if backward else m
    s, t, _ = _integrate_return(base, rz, backward=backward)
    out = _to_rz(base, s)
    return (out, t) if return_time else out


def poincare_map(m, p: CylPoint) -> CylPoint:
    r, z = map_rz(m, (p.r, p.z))
    return CylPoint(float(r), float(z))


# ----------------------------------------------------------- derivatives

def _scale(m, p):
    return max(float(np.linalg.norm(p)), abs(m.coeffs.eps), 1e-300)


def map_jacobian(F: Callable, p, h):
    p = np.asarray(p, dtype=float)
    n = p.size
    J = np.empty((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        J[:, i] = (F(p + e) - F(p - e)) / (2 * h)
    return J


def _noise(m):
    return max(ULP, getattr(m, "rtol", ULP))


def fixed_point(m: SectionMap, guess, tol: Optional[float] = None, max_iter: int = 50,
                h: Optional[float] = None) -> FixedPointResult:
    """Newton iteration on Pi(p) - p with a central-difference Jacobian."""
    if m.coeffs.eps == 0:
        raise DegenerateMapError("eps = 0: every point is fixed")
    F = lambda q: map_rz(m, q)
    p = np.array([guess[0], guess[1]], dtype=float)
    sc = _scale(m, p)
    tol = tol if tol is not None else 1e-11 * max(sc, 1.0)
    hj = h if h is not None else _noise(m) ** (1 / 3) * sc
    Fp = F(p) - p
    res = np.linalg.norm(Fp)
    it = 0
    while res > tol:
        if it >= max_iter:
            raise NewtonError(f"Newton did not converge in {max_iter} iterations "
                              f"(residual {res:.3e}, last iterate {p})")
        J = map_jacobian(F, p, hj) - np.eye(2)
        if not np.all(np.isfinite(J)) or abs(np.linalg.det(J)) < 1e3 * ULP * np.abs(J).max() ** 2:
            raise NewtonError("Jacobian of Pi - id is singular to working precision")
        step = np.linalg.solve(J, -Fp)
        lam = 1.0
        while True:
            q = p + lam * step
            try:
                Fq = F(q) - q
                rq = np.linalg.norm(Fq)
            except MapError:
                rq = np.inf
            if rq < res or lam < 1e-3:
                break
            lam *= 0.5
        if not np.isfinite(rq):
            raise NewtonError("Newton step left the domain of the map")
        stalled = rq >= res
        p, Fp, res = q, Fq, rq
        it += 1
        if stalled:
            if res <= 100 * tol:
                break
            raise NewtonError(f"Newton stalled at residual {res:.3e}")
    J = map_jacobian(F, p, hj)
    J2 = map_jacobian(F, p, 2 * hj)
    _, tret = map_rz(m, p, return_time=True)
    ev = np.linalg.eigvals(J)
    ev = ev[np.lexsort((-ev.imag, -ev.real))]
    return FixedPointResult(CylPoint(float(p[0]), float(p[1])), float(res), J, ev, it,
                            jacobian_error=float(np.abs(J - J2).max() / 3), return_time=tret)


def tensor_derivatives(F: Callable, p, hJ, hB, hC):
    """Central-difference J, B, C of a map R^2 -> R^2 at p (not symmetrized)."""
    p = np.asarray(p, dtype=float)
    n = p.size
    cache = {}

    def Fe(offset):
        key = tuple(np.round(offset / max(hJ, hB, hC), 12))
        if key not in cache:
            cache[key] = np.asarray(F(p + offset), dtype=float)
        return cache[key]

    E = np.eye(n)
    J = np.empty((n, n))
    for i in range(n):
        J[:, i] = (Fe(hJ * E[i]) - Fe(-hJ * E[i])) / (2 * hJ)
    B = np.empty((n, n, n))
    for i, j in itertools.product(range(n), repeat=2):
        ei, ej = hB * E[i], hB * E[j]
        B[:, i, j] = (Fe(ei + ej) - Fe(ei - ej) - Fe(-ei + ej) + Fe(-ei - ej)) / (4 * hB * hB)
    C = np.empty((n, n, n, n))
    for i, j, k in itertools.product(range(n), repeat=3):
        acc = 0.0
        for sg in itertools.product((1, -1), repeat=3):
            acc = acc + sg[0] * sg[1] * sg[2] * Fe(hC * (sg[0] * E[i] + sg[1] * E[j] + sg[2] * E[k]))
        C[:, i, j, k] = acc / (8 * hC ** 3)
    return J, B, C


def _symmetrize(B, C):
    Bs = 0.5 * (B + B.transpose(0, 2, 1))
    perms = list(itertools.permutations((1, 2, 3)))
    Cs = sum(C.transpose((0,) + p) for p in perms) / len(perms)
    return Bs, Cs, float(np.abs(B - Bs).max()), float(np.abs(C - Cs).max())


def map_derivatives(m, base, h: Optional[dict] = None, richardson: bool = True,
                    F: Optional[Callable] = None) -> MapDerivatives:
    """J, B, C of the section map at `base` by central differences.

    Default steps balance truncation against the map's own accuracy
    (the integrator tolerance, not the machine epsilon): h_J = delta^(1/3) s,
    h_B = delta^(1/4) s, h_C = delta^(1/5) s with s = max(|base|, eps).
    With ``richardson`` the stencils are also evaluated at 2h and the O(h^2)
    term is eliminated; the per-entry error estimate is the difference.
    `F` overrides the map (synthetic maps in tests).
    """
    p = np.array([base[0], base[1]], dtype=float)
    if F is None:
        F = lambda q: map_rz(m, q)
        delta = _noise(m)
        sc = _scale(m, p)
    else:
        delta = ULP
        sc = max(float(np.linalg.norm(p)), 1.0)
    h = dict(h or {})
    hJ = h.get("J", delta ** (1 / 3) * sc)
    hB = h.get("B", delta ** (1 / 4) * sc)
    hC = h.get("C", delta ** (1 / 5) * sc)
    J1, B1, C1 = tensor_derivatives(F, p, hJ, hB, hC)
    J2, B2, C2 = tensor_derivatives(F, p, 2 * hJ, 2 * hB, 2 * hC)
    if richardson:
        J, B, C = (4 * J1 - J2) / 3, (4 * B1 - B2) / 3, (4 * C1 - C2) / 3
    else:
        J, B, C = J1, B1, C1
    # truncation (step-halving) plus propagated map noise
    Je = np.abs(J1 - J2) / 3 + delta * sc / hJ
    Be = np.abs(B1 - B2) / 3 + delta * sc / hB ** 2
    Ce = np.abs(C1 - C2) / 3 + delta * sc / hC ** 3
    B, C, basym, casym = _symmetrize(B, C)
    return MapDerivatives(J, B, C, CylPoint(float(p[0]), float(p[1])),
                          dict(J=hJ, B=hB, C=hC, richardson=richardson),
                          B_error=Be, C_error=Ce, J_error=Je,
                          B_asymmetry=basym, C_asymmetry=casym)


def _taylor_from_fit(F, p, rho, deg, nodes):
    """Taylor coefficients a[i, j, comp] of F(p + rho (u, v)) from a Chebyshev fit."""
    x = np.cos(np.pi * (np.arange(nodes) + 0.5) / nodes)
    U, V = (g.ravel() for g in np.meshgrid(x, x, indexing="ij"))
    keep = np.array([i + j <= deg for i in range(deg + 1) for j in range(deg + 1)])
    A = cheb.chebvander2d(U, V, [deg, deg])[:, keep]
    vals = np.array([F(p + rho * np.array([u, v])) for u, v in zip(U, V)])
    co = np.zeros(((deg + 1) ** 2, vals.shape[1]))
    co[keep] = np.linalg.lstsq(A, vals, rcond=None)[0]
    co = co.reshape(deg + 1, deg + 1, -1)
    T = np.zeros((deg + 1, deg + 1))
    for k in range(deg + 1):
        pc = cheb.cheb2poly(np.eye(deg + 1)[k])
        T[:len(pc), k] = pc
    return np.einsum("ik,jl,kla->ija", T, T, co)


def _tensors_from_taylor(a, rho):
    n = 2
    J = np.empty((n, n))
    B = np.empty((n, n, n))
    C = np.empty((n, n, n, n))

    def coef(idx):
        e = [0, 0]
        for i in idx:
            e[i] += 1
        return a[e[0], e[1]] * factorial(e[0]) * factorial(e[1]) / rho ** len(idx)

    for i in range(n):
        J[:, i] = coef((i,))
    for i, j in itertools.product(range(n), repeat=2):
        B[:, i, j] = coef((i, j))
    for i, j, k in itertools.product(range(n), repeat=3):
        C[:, i, j, k] = coef((i, j, k))
    return J, B, C


def map_derivatives_fit(m, base, rho: Optional[float] = None, deg: int = 10, nodes: int = 16,
                        F: Optional[Callable] = None) -> MapDerivatives:
    """J, B, C from a degree-`deg` Chebyshev least-squares fit on a square.

    The half-width rho defaults to 0.03 max(|base|, 1).  The error estimate
    is the difference against a fit on half the half-width.
    """
    p = np.array([base[0], base[1]], dtype=float)
    if F is None:
        F = lambda q: map_rz(m, q)
    rho = rho if rho is not None else 0.03 * max(float(np.linalg.norm(p)), 1.0)
    J, B, C = _tensors_from_taylor(_taylor_from_fit(F, p, rho, deg, nodes), rho)
    J2, B2, C2 = _tensors_from_taylor(_taylor_from_fit(F, p, rho / 2, deg - 2, nodes - 2), rho / 2)
    B, C, basym, casym = _symmetrize(B, C)
    return MapDerivatives(J, B, C, CylPoint(float(p[0]), float(p[1])),
                          dict(rho=rho, deg=deg, nodes=nodes, method="fit"),
                          B_error=np.abs(B - 0.5 * (B2 + B2.transpose(0, 2, 1))),
                          C_error=np.abs(C - _symmetrize(B2, C2)[1]), J_error=np.abs(J - J2),
                          B_asymmetry=basym, C_asymmetry=casym)


# ----------------------------------------------------------- orbits

def orbit_from_section(m: SectionMap, p, samples: int = 400) -> OrbitSamples:
    """One full return of the flow from the section point p, densely sampled."""
    base = m.base if isinstance(m, _ReversedMap) else m
    rz = np.array([p[0], p[1]], dtype=float)
    s_end, te, sol = _integrate_return(replace(base, backend="dop853"), rz, dense=True)
    ts = np.linspace(0.0, te, samples)
    S = sol.sol(ts).T
    _, to_std, _ = _rhs_factory(base.coeffs, base.frame)
    std = np.array([to_std(s) for s in S])
    M = transform_matrix(base.coeffs)
    phys = base.coeffs.eps * std @ M.T
    start = np.array([rz[0], 0.0, rz[1]])
    end = to_std(s_end)
    return OrbitSamples(ts, std, phys, float(te), float(np.linalg.norm(end - start)))
