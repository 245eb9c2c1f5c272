"""Stiff BDF integrator (orders 1-5) and an explicit Runge-Kutta oracle.

The adaptive BDF uses the quasi-constant step-size formulation: the history
is kept as backward differences of y, a step-size change rescales that
difference table, and each step solves the implicit corrector with a
simplified Newton iteration that reuses one LU factorisation of I - c J.
Local error is estimated from the corrector update (the difference between
predictor and corrector scaled by the order's error constant).

The RK oracle is the Dormand-Prince 5(4) pair with the usual PI-free
step-size controller.

Both integrators return a :class:`Trajectory` whose dense output is a
piecewise cubic Hermite interpolant on accepted steps.  A terminal event
(scalar g(t, y) changing sign) can be located on that interpolant.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.optimize import brentq

__all__ = [
    "IvpProblem", "IntegratorConfig", "Trajectory", "DenseSegment",
    "IntegrationError", "Event",
    "bdf_integrate", "rk_integrate", "bdf_fixed_step", "rk_fixed_step",
    "convergence_order", "fd_jacobian", "BDF_FIXED_COEFFS",
]

EPS = np.finfo(float).eps
MAX_ORDER = 5
NEWTON_MAXITER = 4
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0


class IntegrationError(RuntimeError):
    """Integration could not be completed (step limit, Newton failure, non-finite rhs)."""


@dataclass(frozen=True)
class IvpProblem:
    fun: Callable
    t0: float
    t1: float
    y0: Sequence[float]
    jac: Optional[Callable] = None

    def __post_init__(self):
        if self.t1 == self.t0:
            raise ValueError("t1 must differ from t0")
        y0 = np.atleast_1d(np.asarray(self.y0, dtype=float))
        if y0.ndim != 1 or not np.all(np.isfinite(y0)):
            raise ValueError("y0 must be a finite 1-d vector")
        object.__setattr__(self, "y0", y0)

    @property
    def dimension(self) -> int:
        return self.y0.size


@dataclass(frozen=True)
class IntegratorConfig:
    rtol: float = 1e-6
    atol: float = 1e-9
    max_order: int = 5
    initial_step: Optional[float] = None
    max_steps: int = 500_000
    newton_tol: Optional[float] = None
    newton_max_iters: int = NEWTON_MAXITER

    def __post_init__(self):
        if not self.rtol >= 1e-14:
            raise ValueError("rtol must be >= 1e-14")
        if not self.atol > 0:
            raise ValueError("atol must be positive")
        if self.max_order not in range(1, 6):
            raise ValueError("max_order must be in 1..5")
        if self.max_steps < 1 or self.newton_max_iters < 1:
            raise ValueError("max_steps and newton_max_iters must be positive")
        if self.initial_step is not None and not self.initial_step > 0:
            raise ValueError("initial_step must be positive")


@dataclass(frozen=True)
class DenseSegment:
    """Cubic Hermite interpolant on [ta, tb] from end states and slopes."""
    ta: float
    tb: float
    ya: np.ndarray
    yb: np.ndarray
    fa: np.ndarray
    fb: np.ndarray

    def __call__(self, t):
        h = self.tb - self.ta
        s = (t - self.ta) / h
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s * s * (3 - 2 * s)
        h11 = s * s * (s - 1)
        return h00 * self.ya + h10 * h * self.fa + h01 * self.yb + h11 * h * self.fb


@dataclass
class Trajectory:
    t: np.ndarray
    y: np.ndarray  # shape (n_times, dim)
    segments: List[DenseSegment]
    nsteps: int = 0
    nrejected: int = 0
    nfev: int = 0
    njev: int = 0
    nlu: int = 0
    orders: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    t_event: Optional[float] = None
    y_event: Optional[np.ndarray] = None

    def sol(self, t):
        """Dense output at a scalar t inside the integration window."""
        ts = self.t
        forward = ts[-1] >= ts[0]
        if forward:
            i = int(np.searchsorted(ts, t, side="right")) - 1
        else:
            i = int(np.searchsorted(-ts, -t, side="right")) - 1
        i = min(max(i, 0), len(self.segments) - 1)
        return self.segments[i](t)

    @property
    def y_final(self):
        return self.y[-1]


@dataclass(frozen=True)
class Event:
    """Terminal event: stop at the first sign change of fun(t, y) in `direction`."""
    fun: Callable
    direction: int = 0


def _rms(x):
    return np.linalg.norm(x) / x.size ** 0.5


def fd_jacobian(fun, t, y, f0=None):
    """Forward differences with per-column step sqrt(ulp) * max(|y_i|, 1)."""
    if f0 is None:
        f0 = fun(t, y)
    n = y.size
    J = np.empty((n, n))
    for i in range(n):
        h = np.sqrt(EPS) * max(abs(y[i]), 1.0)
        yp = y.copy()
        yp[i] += h
        h = yp[i] - y[i]
        J[:, i] = (fun(t, yp) - f0) / h
    return J


def _initial_step(fun, t0, y0, f0, direction, order, rtol, atol):
    scale = atol + np.abs(y0) * rtol
    d0, d1 = _rms(y0 / scale), _rms(f0 / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y0 + h0 * direction * f0
    f1 = fun(t0 + h0 * direction, y1)
    d2 = _rms((f1 - f0) / scale) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / (order + 1))
    return min(100 * h0, h1)


class _Events:
    def __init__(self, events):
        self.events = list(events or [])
        self.prev = None

    def start(self, t, y):
        self.prev = [ev.fun(t, y) for ev in self.events]

    def check(self, seg: DenseSegment):
        """Earliest root on the segment (or None)."""
        if not self.events:
            return None
        best = None
        new = [ev.fun(seg.tb, seg.yb) for ev in self.events]
        for k, ev in enumerate(self.events):
            ga, gb = self.prev[k], new[k]
            up = ga < 0 <= gb
            down = ga > 0 >= gb
            hit = (ev.direction > 0 and up) or (ev.direction < 0 and down) or \
                  (ev.direction == 0 and (up or down))
            if not hit:
                continue
            g = lambda t: ev.fun(t, seg(t))
            te = brentq(g, seg.ta, seg.tb, xtol=4 * EPS * max(1.0, abs(seg.tb)), rtol=4 * EPS)
            if best is None or abs(te - seg.ta) < abs(best - seg.ta):
                best = te
        self.prev = new
        return best


def _finish(ts, ys, segs, stats, orders, t_event=None, y_event=None):
    return Trajectory(np.array(ts), np.array(ys), segs, orders=np.array(orders, dtype=int),
                      t_event=t_event, y_event=y_event, **stats)


# --------------------------------------------------------------------- BDF

def _compute_R(order, factor):
    I = np.arange(1, order + 1)[:, None]
    J = np.arange(1, order + 1)
    M = np.zeros((order + 1, order + 1))
    M[1:, 1:] = (I - 1 - factor * J) / I
    M[0] = 1
    return np.cumprod(M, axis=0)


def _change_D(D, order, factor):
    """Rescale the backward-difference table for a new step h_new = factor h."""
    R = _compute_R(order, factor)
    U = _compute_R(order, 1)
    RU = R.dot(U)
    D[:order + 1] = RU.T.dot(D[:order + 1])


def bdf_integrate(p: IvpProblem, cfg: IntegratorConfig = IntegratorConfig(),
                  events: Sequence[Event] = ()) -> Trajectory:
    """Adaptive variable-order, variable-step BDF."""
    fun0 = p.fun
    stats = dict(nsteps=0, nrejected=0, nfev=0, njev=0, nlu=0)

    def fun(t, y):
        stats["nfev"] += 1
        f = np.asarray(fun0(t, y), dtype=float)
        return f

    def jac(t, y, f):
        stats["njev"] += 1
        if p.jac is not None:
            return np.asarray(p.jac(t, y), dtype=float)
        J = fd_jacobian(fun0, t, y, f)
        stats["nfev"] += y.size
        return J

    rtol, atol = cfg.rtol, cfg.atol
    max_order = cfg.max_order
    t, t_end = float(p.t0), float(p.t1)
    direction = np.sign(t_end - t)
    y = p.y0.copy()
    n = y.size
    f = fun(t, y)
    if not np.all(np.isfinite(f)):
        raise IntegrationError("non-finite right-hand side at t0")
    h_abs = cfg.initial_step or _initial_step(fun, t, y, f, direction, 1, rtol, atol)
    h_abs = min(h_abs, abs(t_end - t))
    newton_tol = cfg.newton_tol or max(10 * EPS / rtol, min(0.03, rtol ** 0.5))

    kappa = np.zeros(MAX_ORDER + 1)
    gamma = np.hstack((0, np.cumsum(1 / np.arange(1, MAX_ORDER + 1))))
    alpha = gamma.copy()
    error_const = 1 / np.arange(1, MAX_ORDER + 2) + kappa * gamma

    D = np.zeros((MAX_ORDER + 3, n))
    D[0] = y
    D[1] = f * h_abs * direction
    order = 1
    n_equal_steps = 0
    J = jac(t, y, f)
    current_jac = True
    LU = None

    ts, ys, segs, orders = [t], [y.copy()], [], []
    ev = _Events(events)
    ev.start(t, y)
    I = np.eye(n)
    h_min_floor = 10 * EPS

    while direction * (t_end - t) > 0:
        if stats["nsteps"] >= cfg.max_steps:
            raise IntegrationError(f"max_steps={cfg.max_steps} exceeded at t={t}")
        min_step = h_min_floor * max(abs(t), 1.0)
        if h_abs > abs(t_end - t):
            _change_D(D, order, abs(t_end - t) / h_abs)
            h_abs = abs(t_end - t)
            n_equal_steps = 0
            LU = None
        if h_abs < min_step:
            raise IntegrationError(f"step size underflow at t={t}")

        step_accepted = False
        while not step_accepted:
            if h_abs < min_step:
                raise IntegrationError(f"Newton/step failure: step below minimum at t={t}")
            h = h_abs * direction
            t_new = t + h
            if direction * (t_new - t_end) > 0:
                t_new = t_end
                _change_D(D, order, abs(t_new - t) / h_abs)
                n_equal_steps = 0
                LU = None
            h = t_new - t
            h_abs = abs(h)

            y_pred = np.sum(D[:order + 1], axis=0)
            scale = atol + rtol * np.abs(y_pred)
            psi = D[1:order + 1].T.dot(gamma[1:order + 1]) / alpha[order]
            c = h / alpha[order]

            converged = False
            while not converged:
                if LU is None:
                    LU = lu_factor(I - c * J)
                    stats["nlu"] += 1
                converged, n_iter, y_new, d = _newton(fun, t_new, y_pred, c, psi, LU, scale,
                                                      newton_tol, cfg.newton_max_iters)
                if not converged:
                    if current_jac:
                        break
                    J = jac(t_new, y_pred, fun(t_new, y_pred))
                    current_jac = True
                    LU = None
            if not converged:
                factor = 0.5
                h_abs *= factor
                _change_D(D, order, factor)
                n_equal_steps = 0
                LU = None
                stats["nrejected"] += 1
                continue

            safety = 0.9 * (2 * cfg.newton_max_iters + 1) / (2 * cfg.newton_max_iters + n_iter)
            scale = atol + rtol * np.abs(y_new)
            error = error_const[order] * d
            error_norm = _rms(error / scale)
            if error_norm > 1:
                factor = max(MIN_FACTOR, safety * error_norm ** (-1 / (order + 1)))
                h_abs *= factor
                _change_D(D, order, factor)
                n_equal_steps = 0
                LU = None
                stats["nrejected"] += 1
            else:
                step_accepted = True

        stats["nsteps"] += 1
        orders.append(order)
        n_equal_steps += 1
        f_end = fun(t_new, y_new)
        if not np.all(np.isfinite(f_end)):
            raise IntegrationError(f"non-finite right-hand side at t={t_new}")
        seg = DenseSegment(t, t_new, y.copy(), y_new.copy(), f.copy(), f_end)
        segs.append(seg)
        t, y, f = t_new, y_new, f_end
        ts.append(t)
        ys.append(y.copy())
        current_jac = False

        D[order + 2] = d - D[order + 1]
        D[order + 1] = d
        for i in reversed(range(order + 1)):
            D[i] += D[i + 1]

        te = ev.check(seg)
        if te is not None:
            return _finish(ts, ys, segs, stats, orders, te, seg(te))

        if n_equal_steps < order + 1:
            continue
        if order > 1:
            error_m_norm = _rms(error_const[order - 1] * D[order] / scale)
        else:
            error_m_norm = np.inf
        if order < max_order:
            error_p_norm = _rms(error_const[order + 1] * D[order + 2] / scale)
        else:
            error_p_norm = np.inf
        error_norms = np.array([error_m_norm, error_norm, error_p_norm])
        with np.errstate(divide="ignore"):
            factors = error_norms ** (-1 / np.arange(order, order + 3))
        delta_order = int(np.argmax(factors)) - 1
        order += delta_order
        factor = min(MAX_FACTOR, safety * np.max(factors))
        h_abs *= factor
        _change_D(D, order, factor)
        n_equal_steps = 0
        LU = None

    return _finish(ts, ys, segs, stats, orders)


def _newton(fun, t_new, y_pred, c, psi, LU, scale, tol, maxiter):
    d = 0
    y = y_pred.copy()
    dy_norm_old = None
    for k in range(maxiter):
        f = fun(t_new, y)
        if not np.all(np.isfinite(f)):
            return False, k + 1, y, d
        dy = lu_solve(LU, c * f - psi - d)
        dy_norm = _rms(dy / scale)
        rate = None if dy_norm_old is None else dy_norm / dy_norm_old
        if rate is not None and (rate >= 1 or rate ** (maxiter - k) / (1 - rate) * dy_norm > tol):
            return False, k + 1, y, d
        y = y + dy
        d = d + dy
        if dy_norm == 0 or (rate is not None and rate / (1 - rate) * dy_norm < tol):
            return True, k + 1, y, d
        dy_norm_old = dy_norm
    return False, maxiter, y, d


# ---------------------------------------------------------------- RK 5(4)

_DP_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1, 1])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_DP_E = np.array([-71 / 57600, 0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])


def _dp_step(fun, t, y, f, h):
    K = np.empty((7, y.size))
    K[0] = f
    for s in range(1, 7):
        dy = h * np.dot(_DP_A[s], K[:s])
        K[s] = fun(t + _DP_C[s] * h, y + dy)
    y_new = y + h * np.dot(_DP_B, K)
    err = h * np.dot(_DP_E, K)
    return y_new, K[6], err


def rk_integrate(p: IvpProblem, cfg: IntegratorConfig = IntegratorConfig(),
                 events: Sequence[Event] = ()) -> Trajectory:
    """Adaptive Dormand-Prince 5(4)."""
    stats = dict(nsteps=0, nrejected=0, nfev=0, njev=0, nlu=0)

    def fun(t, y):
        stats["nfev"] += 1
        return np.asarray(p.fun(t, y), dtype=float)

    rtol, atol = cfg.rtol, cfg.atol
    t, t_end = float(p.t0), float(p.t1)
    direction = np.sign(t_end - t)
    y = p.y0.copy()
    f = fun(t, y)
    h_abs = cfg.initial_step or _initial_step(fun, t, y, f, direction, 4, rtol, atol)
    ts, ys, segs = [t], [y.copy()], []
    ev = _Events(events)
    ev.start(t, y)
    while direction * (t_end - t) > 0:
        if stats["nsteps"] >= cfg.max_steps:
            raise IntegrationError(f"max_steps={cfg.max_steps} exceeded at t={t}")
        min_step = 10 * EPS * max(abs(t), 1.0)
        while True:
            if h_abs < min_step:
                raise IntegrationError(f"step size underflow at t={t}")
            h = min(h_abs, abs(t_end - t)) * direction
            y_new, f_new, err = _dp_step(fun, t, y, f, h)
            scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            en = _rms(err / scale)
            if np.isfinite(en) and en <= 1:
                fac = MAX_FACTOR if en == 0 else min(MAX_FACTOR, 0.9 * en ** -0.2)
                break
            stats["nrejected"] += 1
            h_abs = abs(h) * (max(MIN_FACTOR, 0.9 * en ** -0.2) if np.isfinite(en) else 0.25)
        if not np.all(np.isfinite(y_new)):
            raise IntegrationError(f"non-finite state at t={t + h}")
        stats["nsteps"] += 1
        t_new = t + h
        seg = DenseSegment(t, t_new, y.copy(), y_new.copy(), f.copy(), f_new.copy())
        segs.append(seg)
        t, y, f = t_new, y_new, f_new
        ts.append(t)
        ys.append(y.copy())
        h_abs = abs(h) * fac
        te = ev.check(seg)
        if te is not None:
            return _finish(ts, ys, segs, stats, [], te, seg(te))
    return _finish(ts, ys, segs, stats, [])


# ------------------------------------------------------- fixed-step modes

# sum_j alpha_j y_{n+1-j} = h beta f(y_{n+1}), alpha_0 = 1
BDF_FIXED_COEFFS = {
    1: ([1, -1], 1),
    2: ([1, -4 / 3, 1 / 3], 2 / 3),
    3: ([1, -18 / 11, 9 / 11, -2 / 11], 6 / 11),
    4: ([1, -48 / 25, 36 / 25, -16 / 25, 3 / 25], 12 / 25),
    5: ([1, -300 / 137, 300 / 137, -200 / 137, 75 / 137, -12 / 137], 60 / 137),
}


def rk_fixed_step(p: IvpProblem, h: float):
    """Constant-step Dormand-Prince (5th-order solution); returns (t, y)."""
    n = int(round(abs(p.t1 - p.t0) / h))
    h = (p.t1 - p.t0) / n
    t = p.t0
    y = p.y0.copy()
    ts, ys = [t], [y.copy()]
    for _ in range(n):
        y, _, _ = _dp_step(lambda s, u: np.asarray(p.fun(s, u), dtype=float), t, y,
                           np.asarray(p.fun(t, y), dtype=float), h)
        t = t + h
        ts.append(t)
        ys.append(y.copy())
    return np.array(ts), np.array(ys)


def bdf_fixed_step(p: IvpProblem, h: float, order: int, start=None,
                   newton_tol: float = 1e-14, newton_max_iters: int = 50):
    """Constant-step, constant-order BDF-k.

    The first k - 1 values after y0 come from `start(t)` when given (exact
    solution), else from a tightly converged RK run.  Returns (t, y).
    """
    if order not in BDF_FIXED_COEFFS:
        raise ValueError("order must be in 1..5")
    a, beta = BDF_FIXED_COEFFS[order]
    n = int(round(abs(p.t1 - p.t0) / h))
    if n < order:
        raise ValueError("need at least `order` steps")
    h = (p.t1 - p.t0) / n
    ts = p.t0 + h * np.arange(n + 1)
    ys = np.empty((n + 1, p.dimension))
    ys[0] = p.y0
    if order > 1:
        if start is not None:
            for i in range(1, order):
                ys[i] = start(ts[i])
        else:
            sub = IvpProblem(p.fun, p.t0, ts[order - 1], p.y0, p.jac)
            tr = rk_integrate(sub, IntegratorConfig(rtol=1e-14, atol=1e-16))
            for i in range(1, order):
                ys[i] = tr.sol(ts[i]) if i < order - 1 else tr.y_final
    fun = lambda t, y: np.asarray(p.fun(t, y), dtype=float)
    I = np.eye(p.dimension)
    for m in range(order, n + 1):
        rhs = -sum(a[j] * ys[m - j] for j in range(1, order + 1))
        y = ys[m - 1].copy()
        t = ts[m]
        for _ in range(newton_max_iters):
            f = fun(t, y)
            G = y - h * beta * f - rhs
            Jf = p.jac(t, y) if p.jac is not None else fd_jacobian(fun, t, y, f)
            dy = np.linalg.solve(I - h * beta * np.asarray(Jf), -G)
            y = y + dy
            if np.max(np.abs(dy)) <= newton_tol * max(1.0, np.max(np.abs(y))):
                break
        else:
            raise IntegrationError(f"fixed-step Newton did not converge at t={t}")
        ys[m] = y
    return ts, ys


def convergence_order(method, problem: IvpProblem, exact: Callable, steps: Sequence[float]):
    """Log-log slope of the final-time error against the step size.

    `method(problem, h)` returns (t, y) on a fixed grid; `exact(t)` the
    reference solution.  Returns (slope, errors).
    """
    errs = []
    for h in steps:
        t, y = method(problem, h)
        errs.append(np.max(np.abs(y[-1] - exact(t[-1]))))
    errs = np.array(errs)
    slope = np.polyfit(np.log(np.asarray(steps)), np.log(errs), 1)[0]
    return float(slope), errs
