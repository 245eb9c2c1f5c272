"""FitzHugh-Nagumo vector field, the two Hopf-zero unfoldings and coordinate maps.

The cubic field is

    x' = z,  y' = b (x - d y),  z' = (x - a)(x - 1) x + y + c z.

Family A keeps d generic and puts the Hopf-zero point at a = -1/d,
b = beta0, c = d beta0; Family B sits at a = -w^2, b = c = 0.  Both come
with a linear change of variables that puts the linear part at eps = 0 in
real Jordan form diag(rot(w), 0), followed by the scaling (X, Y, Z) =
eps (x1, x2, x3) and cylindrical coordinates on (x1, x2).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence, Union

import numpy as np

__all__ = [
    "ParamsFHN", "FamilyACoeffs", "FamilyBCoeffs", "PhasePoint", "CylPoint",
    "CoefficientError", "ScalingError",
    "fhn_field", "fhn_jacobian", "params_from_family_a", "params_from_family_b",
    "family_params", "hopf_zero_spectrum", "transform_matrix",
    "phys_to_standard_a", "standard_to_phys_a", "phys_to_standard_b",
    "standard_to_phys_b", "phys_to_standard", "standard_to_phys",
    "standard_to_cyl", "cyl_to_standard", "scaled_field",
]


class CoefficientError(ValueError):
    """Coefficient set violates the standing assumptions of its family."""


class ScalingError(ValueError):
    """The eps-scaling step is undefined (eps == 0)."""


@dataclass(frozen=True)
class ParamsFHN:
    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        if not np.all(np.isfinite([self.a, self.b, self.c, self.d])):
            raise CoefficientError("FHN parameters must be finite")

    def as_tuple(self):
        return (self.a, self.b, self.c, self.d)


class PhasePoint(NamedTuple):
    x: float
    y: float
    z: float


class CylPoint(NamedTuple):
    """Point of the reduced (r, z) system; theta is 0 on the section."""
    r: float
    z: float
    theta: float = 0.0


@dataclass(frozen=True)
class FamilyACoeffs:
    """Unfolding a = -1/d + eps a1 + eps^2 a2, b = beta0 + ..., c = d beta0 + ..."""
    d: float
    w: float
    eps: float
    alpha1: float = 0.0
    alpha2: float = 0.0
    beta1: float = 0.0
    beta2: float = 0.0
    gamma1: float = 0.0
    gamma2: float = 0.0
    family: str = field(default="A", init=False)

    def __post_init__(self):
        d, w = self.d, self.w
        if not np.all(np.isfinite([d, w, self.eps, self.alpha1, self.alpha2,
                                   self.beta1, self.beta2, self.gamma1, self.gamma2])):
            raise CoefficientError("Family A coefficients must be finite")
        if not d > 0:
            raise CoefficientError(f"Family A needs d > 0 (got d={d})")
        if d == 1:
            raise CoefficientError("Family A needs d != 1")
        if not w > 0:
            raise CoefficientError(f"Family A needs w > 0 (got w={w})")
        if not d * (1 - d * w * w) > 0:
            raise CoefficientError(
                f"Family A needs d(1 - d w^2) > 0 (got {d * (1 - d * w * w):.6g})")

    @property
    def beta0(self) -> float:
        return np.sqrt(1 / self.d - self.w ** 2) / self.d

    def with_eps(self, eps):
        return replace(self, eps=eps)

    def abc(self, eps=None):
        """(a, b, c) at eps; eps may be complex (used by the averaging engine)."""
        e = self.eps if eps is None else eps
        b0 = self.beta0
        a = -1 / self.d + e * self.alpha1 + e ** 2 * self.alpha2
        b = b0 + e * self.beta1 + e ** 2 * self.beta2
        c = self.d * b0 + e * self.gamma1 + e ** 2 * self.gamma2
        return a, b, c


def _pad5(v, name):
    v = tuple(float(x) for x in np.atleast_1d(np.asarray(v, dtype=float)))
    if len(v) > 5:
        raise CoefficientError(f"{name} has more than 5 perturbation terms")
    return v + (0.0,) * (5 - len(v))


@dataclass(frozen=True)
class FamilyBCoeffs:
    """Unfolding a = -w^2 + sum eps^i alpha_i, b = sum eps^i beta_i, c = sum eps^i gamma_i."""
    d: float
    w: float
    eps: float
    alpha: Sequence[float] = (0.0,) * 5
    beta: Sequence[float] = (0.0,) * 5
    gamma: Sequence[float] = (0.0,) * 5
    family: str = field(default="B", init=False)

    def __post_init__(self):
        object.__setattr__(self, "alpha", _pad5(self.alpha, "alpha"))
        object.__setattr__(self, "beta", _pad5(self.beta, "beta"))
        object.__setattr__(self, "gamma", _pad5(self.gamma, "gamma"))
        if not np.all(np.isfinite([self.d, self.w, self.eps, *self.alpha,
                                   *self.beta, *self.gamma])):
            raise CoefficientError("Family B coefficients must be finite")
        if not self.w > 0:
            raise CoefficientError(f"Family B needs w > 0 (got w={self.w})")

    def with_eps(self, eps):
        return replace(self, eps=eps)

    def abc(self, eps=None):
        e = self.eps if eps is None else eps
        pw = [e ** (i + 1) for i in range(5)]
        a = -self.w ** 2 + sum(p * q for p, q in zip(pw, self.alpha))
        b = sum(p * q for p, q in zip(pw, self.beta))
        c = sum(p * q for p, q in zip(pw, self.gamma))
        return a, b, c


Coeffs = Union[FamilyACoeffs, FamilyBCoeffs]


def fhn_field(p, params: ParamsFHN):
    """Vector field at p; p may carry leading batch dimensions (..., 3)."""
    p = np.asarray(p)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    a, b, c, d = params.as_tuple()
    return np.stack([z, b * (x - d * y), (x - a) * (x - 1) * x + y + c * z], axis=-1)


def fhn_jacobian(p, params: ParamsFHN):
    x = p[0]
    a, b, c, d = params.as_tuple()
    return np.array([[0.0, 0.0, 1.0],
                     [b, -b * d, 0.0],
                     [3 * x * x - 2 * (1 + a) * x + a, 1.0, c]])


def params_from_family_a(c: FamilyACoeffs) -> ParamsFHN:
    a, b, cc = c.abc()
    return ParamsFHN(a, b, cc, c.d)


def params_from_family_b(c: FamilyBCoeffs) -> ParamsFHN:
    a, b, cc = c.abc()
    return ParamsFHN(a, b, cc, c.d)


def family_params(c: Coeffs) -> ParamsFHN:
    return params_from_family_a(c) if c.family == "A" else params_from_family_b(c)


def hopf_zero_spectrum(params: ParamsFHN):
    """Eigenvalues of the Jacobian at the origin, sorted by |Im| then Re."""
    ev = np.linalg.eigvals(fhn_jacobian(np.zeros(3), params))
    order = np.lexsort((ev.real, np.round(np.abs(ev.imag), 12)))
    return ev[order]


def transform_matrix(c: Coeffs):
    """M with (x, y, z) = M (X, Y, Z)."""
    d, w = c.d, c.w
    if c.family == "A":
        b0 = c.beta0
        dw2 = d * w * w
        return np.array([
            [0.0, 1 / (2 * dw2), (dw2 - 1) / dw2],
            [-b0 / (2 * w), (1 - dw2) / (2 * d * dw2), -(1 - dw2) / (d * dw2)],
            [1 / (2 * w * d), 0.0, 0.0],
        ])
    return np.array([[0.0, 0.5, 1 / w ** 2],
                     [0.0, 0.0, 1.0],
                     [w / 2, 0.0, 0.0]])


def _check_eps(c):
    if c.eps == 0:
        raise ScalingError("eps = 0: the scaling (X,Y,Z) = eps (x1,x2,x3) is undefined")


def phys_to_standard(p, c: Coeffs):
    _check_eps(c)
    M = transform_matrix(c)
    return np.linalg.solve(M, np.asarray(p, dtype=float).T).T / c.eps


def standard_to_phys(x, c: Coeffs):
    _check_eps(c)
    return c.eps * (np.asarray(x, dtype=float) @ transform_matrix(c).T)


def phys_to_standard_a(p, c: FamilyACoeffs):
    return phys_to_standard(p, c)


def standard_to_phys_a(x, c: FamilyACoeffs):
    return standard_to_phys(x, c)


def phys_to_standard_b(p, c: FamilyBCoeffs):
    return phys_to_standard(p, c)


def standard_to_phys_b(x, c: FamilyBCoeffs):
    return standard_to_phys(x, c)


def standard_to_cyl(x1, x2, x3) -> CylPoint:
    """Polar coordinates on (x1, x2); theta in [0, 2 pi), and 0 at r = 0."""
    r = float(np.hypot(x1, x2))
    th = float(np.arctan2(x2, x1)) % (2 * np.pi) if r > 0 else 0.0
    if th >= 2 * np.pi:
        th = 0.0
    return CylPoint(r, float(x3), th)


def cyl_to_standard(p: CylPoint):
    if p.r < 0:
        raise ValueError("r must be non-negative")
    return np.array([p.r * np.cos(p.theta), p.r * np.sin(p.theta), p.z])


def scaled_field(x, c: Coeffs, eps=None):
    """Time derivative of the eps-scaled standard coordinates.

    Equals M^-1 F(eps M x) / eps, expanded so that eps = 0 (or complex eps)
    is admissible.  x has shape (..., 3).
    """
    e = c.eps if eps is None else eps
    a, b, cc = c.abc(e)
    M = transform_matrix(c)
    u = np.asarray(x) @ M.T
    ux, uy, uz = u[..., 0], u[..., 1], u[..., 2]
    f = np.stack([uz + 0 * ux,
                  b * (ux - c.d * uy),
                  e * e * ux ** 3 - e * (1 + a) * ux ** 2 + a * ux + uy + cc * uz], axis=-1)
    return f @ np.linalg.inv(M).T
