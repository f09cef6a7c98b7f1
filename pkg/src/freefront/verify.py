"""
Verification tools: corner compatibility, the steady-state front, manufactured
solutions with convergence studies, and the s'' identity residual.

Steady state. For constant boundary data u(0) = c the stationary profile with
u_x(s) = 0 is u(x) = c*cosh(k*(s - x))/cosh(k*s), k = sqrt(lam), whose integral
over [0, s] is (c/k)*tanh(k*s). The front is stationary when that integral
equals sigma*s, so s* is the positive root of

    Phi(s) = (c/k)*tanh(k*s) - sigma*s.

Phi(0) = 0, Phi'(0) = c - sigma and Phi is concave on s > 0, so a positive root
exists and is unique exactly when c > sigma.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import FrontSeries, Grid, InvalidInput, Parameters, second_difference
from .expr import Expr, numeric_derivative
from .solver import Forcing, Status, run

# first derivatives are cheap to resolve; the one-sided second derivative
# needs a larger step to keep roundoff (~eps/h^2) below the tolerance, and is
# third-order so truncation stays negligible there
H_FIRST = 1e-5
H_SECOND = 1e-3
# manufactured fields use fourth-order central stencils at this step
H_MMS = 1e-3


class NoEquilibrium(ValueError):
    pass


class NeumannViolation(ValueError):
    pass


class StudyAborted(RuntimeError):
    pass


@dataclass(frozen=True)
class Check:
    name: str
    lhs: float
    rhs: float
    gap: float
    passed: bool


@dataclass(frozen=True)
class CompatReport:
    checks: tuple
    tol: float

    @property
    def overall(self) -> bool:
        return all(c.passed for c in self.checks)

    def failing(self) -> list:
        return [c.name for c in self.checks if not c.passed]

    def as_dict(self) -> dict:
        return {
            "overall": self.overall,
            "tol": self.tol,
            "checks": [
                {"name": c.name, "lhs": c.lhs, "rhs": c.rhs, "gap": c.gap, "pass": c.passed}
                for c in self.checks
            ],
        }


def _check(name, lhs, rhs, tol, scale=0.0):
    """Relative test; ``scale`` is the size of terms that cancel inside a side."""
    gap = abs(lhs - rhs)
    return Check(name, lhs, rhs, gap, gap <= tol * (1.0 + max(abs(lhs), abs(rhs), scale)))


def compatibility_check(params: Parameters, f: Callable, phi: Callable, tol: float = 1e-6) -> CompatReport:
    """Evaluate the three corner conditions a classical solution needs:

    f(0) = phi(0),  f'(0) = phi''(0) - lam*phi(0),  phi'(b) = 0.

    Derivatives are one-sided so f is only sampled for t >= 0 and phi only
    on [0, b]. A check passes when gap <= tol*(1 + m), where m is the largest
    of |lhs|, |rhs| and, for the second condition, |phi''(0)| and
    lam*|phi(0)|, whose near-cancellation would otherwise leave a truncation
    error that no absolute tolerance tracks.
    """
    b, lam = params.b, params.lam
    f0 = float(f(0.0))
    phi0 = float(phi(0.0))
    df0 = numeric_derivative(f, 0.0, 1, H_FIRST, side="forward")
    d2phi0 = numeric_derivative(phi, 0.0, 2, H_SECOND, side="forward")
    dphib = numeric_derivative(phi, b, 1, H_FIRST, side="backward")
    checks = (
        _check("f(0) = phi(0)", f0, phi0, tol),
        _check("f'(0) = phi''(0) - lambda*phi(0)", df0, d2phi0 - lam * phi0, tol, max(abs(d2phi0), lam * abs(phi0))),
        _check("phi'(b) = 0", dphib, 0.0, tol),
    )
    return CompatReport(checks, tol)


# -- steady state --------------------------------------------------------------


def equilibrium_residual(s: float, c: float, lam: float, sigma: float) -> float:
    k = math.sqrt(lam)
    return c / k * math.tanh(k * s) - sigma * s


def equilibrium_front(c: float, lam: float, sigma: float) -> float:
    """Stationary front position for constant boundary data c, by bisection."""
    for name, value in (("c", c), ("lambda", lam), ("sigma", sigma)):
        if not (math.isfinite(value) and value > 0):
            raise InvalidInput(f"{name} must be finite and > 0, got {value!r}")
    if c <= sigma:
        raise NoEquilibrium(f"no positive steady front for c={c!r} <= sigma={sigma!r}")
    k = math.sqrt(lam)
    lo = 1e-8 / k
    hi = 2.0 * c / (sigma * k)
    if not (equilibrium_residual(lo, c, lam, sigma) > 0 > equilibrium_residual(hi, c, lam, sigma)):
        raise NoEquilibrium(f"could not bracket a root for c={c!r}, sigma={sigma!r}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if equilibrium_residual(mid, c, lam, sigma) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def equilibrium_phi_text(c: float, lam: float, b: float) -> str:
    """Expression text for the stationary profile c*cosh(k(b - x))/cosh(k b)."""
    k = math.sqrt(lam)
    return f"{c!r}*cosh({k!r}*({b!r} - x))/cosh({k!r}*{b!r})"


# -- manufactured solutions ----------------------------------------------------


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(32)
_GL_NODES = 0.5 * (_GL_NODES + 1.0)
_GL_WEIGHTS = 0.5 * _GL_WEIGHTS


@dataclass(frozen=True)
class MMSCase:
    """A manufactured pair (s_bar, v_bar) with the forcing that makes it exact."""

    s_bar: Expr
    v_bar: Expr
    params: Parameters
    forcing: Forcing
    f_derived: Callable
    phi_derived: Callable

    def g(self, xi, t):
        return self.forcing.g(xi, t)

    def q(self, t):
        return self.forcing.q(t)


def make_mms_case(s_bar: Expr, v_shape: Expr, params: Parameters) -> MMSCase:
    """Derive forcing for a manufactured front s_bar(t) and field v_bar(xi, t).

    ``v_shape`` must be parsed with variables ("xi", "t") and satisfy
    v_xi(1, t) = 0; this is checked at 10 times in [0, t_end]. The returned
    case carries params with b replaced by s_bar(0).
    """
    s = lambda t: float(s_bar(t))  # noqa: E731
    v = lambda xi, t: _eval_field(v_shape, xi, t)  # noqa: E731

    t_end = params.t_end if params.t_end > 0 else 1.0
    for t in np.linspace(0.0, t_end, 10):
        slope = numeric_derivative(lambda z: v(z, t), 1.0, 1, H_FIRST, side="backward")
        if abs(slope) > 1e-8:
            raise NeumannViolation(f"v_xi(1, {t:.4g}) = {slope:.3g}, expected 0")
        if not s(t) > 0:
            raise InvalidInput(f"s_bar must stay positive, s_bar({t:.4g}) = {s(t)!r}")

    lam, sigma = params.lam, params.sigma
    b = s(0.0)

    offsets = np.array([-2.0, -1.0, 0.0, 1.0, 2.0]) * H_MMS
    d1_weights = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / (12 * H_MMS)
    d2_weights = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / (12 * H_MMS**2)

    def g(xi, t):
        xi = np.asarray(xi, dtype=float)
        s_samples = np.asarray(s_bar(t + offsets), dtype=float) * np.ones(5)
        s_t, ds_t = s_samples[2], d1_weights @ s_samples
        in_time = v(xi[None, :], t + offsets[:, None])
        in_space = v(xi[None, :] + offsets[:, None], t)
        v_t = d1_weights @ in_time
        v_xi = d1_weights @ in_space
        v_xixi = d2_weights @ in_space
        return v_t - v_xixi / s_t**2 - xi * ds_t / s_t * v_xi + lam * in_space[2]

    def q(t):
        s_samples = np.asarray(s_bar(t + offsets), dtype=float) * np.ones(5)
        integral = float(_GL_WEIGHTS @ v(_GL_NODES, t))
        return d1_weights @ s_samples - s_samples[2] * (integral - sigma)

    case_params = Parameters(lam, sigma, b, params.t_end, min(params.s_min, 0.5 * b))
    return MMSCase(
        s_bar=s_bar,
        v_bar=v_shape,
        params=case_params,
        forcing=Forcing(g=g, q=q),
        f_derived=lambda t: v(0.0, t),
        phi_derived=lambda x: v(np.asarray(x, dtype=float) / b, 0.0),
    )


def _eval_field(expr: Expr, xi, t):
    out = expr(xi=xi, t=t)
    shape = np.broadcast_shapes(np.shape(xi), np.shape(t))
    return out if shape == () else np.broadcast_to(out, shape)


@dataclass
class ConvergenceTable:
    rows: list = field(default_factory=list)  # (n_xi, dt, err_v_max, err_s_max)
    p_space: Optional[float] = None
    p_time: Optional[float] = None

    def as_dict(self) -> dict:
        return {
            "rows": [dict(zip(("n_xi", "dt", "err_v_max", "err_s_max"), r)) for r in self.rows],
            "p_space": self.p_space,
            "p_time": self.p_time,
        }


def fit_order(h, err) -> Optional[float]:
    """Least-squares slope of log(err) against log(h); None if h does not vary.

    Pass only the finest levels to measure the asymptotic order.
    """
    h = np.asarray(h, dtype=float)
    err = np.asarray(err, dtype=float)
    if np.ptp(np.log(h)) < 1e-12 or np.any(err <= 0):
        return None
    slope, _ = np.polyfit(np.log(h), np.log(err), 1)
    return float(slope)


def _check_levels(levels):
    if len(levels) < 3:
        raise InvalidInput("a convergence study needs at least 3 levels")
    for (n0, dt0), (n1, dt1) in zip(levels, levels[1:]):
        if n1 < n0 or dt1 > dt0 or (n1 == n0 and dt1 == dt0):
            raise InvalidInput(f"level ({n1}, {dt1}) does not refine ({n0}, {dt0})")


def convergence_study(case: MMSCase, levels) -> ConvergenceTable:
    """Run the forced problem at each (n_xi, dt) level and fit observed orders.

    p_space comes from the field error against dxi, p_time from the front
    error against dt, both over the two finest levels (the coarsest level is
    reported but may be pre-asymptotic). An order is None when its step size
    is held fixed.
    """
    levels = [(int(n), float(dt)) for n, dt in levels]
    _check_levels(levels)
    params = case.params
    table = ConvergenceTable()
    for n_xi, dt in levels:
        grid = Grid(n_xi, dt)
        result = run(params, grid, case.f_derived, case.phi_derived, case.forcing, waive_compat=True)
        if result.status is not Status.COMPLETED:
            raise StudyAborted(f"level n_xi={n_xi}, dt={dt}: {result.status.value} ({result.message})")
        final = result.final_state
        exact_v = _eval_field(case.v_bar, grid.nodes, final.t)
        exact_s = float(case.s_bar(final.t))
        table.rows.append((n_xi, dt, float(np.max(np.abs(final.v - exact_v))), abs(final.s - exact_s)))
    fine = table.rows[-2:]
    table.p_space = fit_order([1.0 / r[0] for r in fine], [r[2] for r in fine])
    table.p_time = fit_order([r[1] for r in fine], [r[3] for r in fine])
    return table


# -- identity residual ---------------------------------------------------------


def identity_residual_series(series: FrontSeries, t_min: float = -math.inf):
    """|s''_fd - rhs| on interior rows with t >= t_min; returns (t, residual)."""
    if len(series) < 5:
        raise InvalidInput(f"need at least 5 rows, got {len(series)}")
    t = series.column("t")
    s = series.column("s")
    rhs = series.column("s_dprime_rhs")
    s_fd = second_difference(t, s)
    residual = np.abs(s_fd - rhs[1:-1])
    keep = t[1:-1] >= t_min
    return t[1:-1][keep], residual[keep]
