"""
Front-fixing finite-difference solver for the nonlocal free boundary problem

    u_t = u_xx - lam*u,           0 < x < s(t)
    u(0, t) = f(t),  u_x(s(t), t) = 0,  u(x, 0) = phi(x),  s(0) = b
    s'(t) = int_0^s(t) (u - sigma) dx

With xi = x/s(t) and v(xi, t) = u(xi*s, t) the PDE becomes

    v_t = v_xixi / s^2 + (xi*s'/s) v_xi - lam*v + g

on the unit strip (g is an optional manufactured forcing, zero for the
physical problem), and the front law reads s' = s*(int_0^1 v dxi - sigma) + q.

Each step is semi-implicit: a Heun predictor for s, one backward-Euler
tridiagonal solve for v with coefficients frozen at the predicted front,
and a single trapezoidal corrector pass for s. The second-order identity

    s'' = (v(1) - lam - sigma) s' - lam*sigma*s - v_xi(0)/s

is never integrated; it is only evaluated and logged, so that comparing it
against finite differences of the computed s is an independent check.

Diagonal dominance of the tridiagonal matrix holds for any dt when
|xi*s'|/s <= 2/(s^2*dxi); otherwise it is guaranteed by
dt <= dxi * s_min / max|xi*s'|.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import (
    FrontSeries,
    Grid,
    InvalidInput,
    Parameters,
    State,
    one_sided_derivative_at_0,
    second_difference,
    trapezoid,
)

logger = logging.getLogger(__name__)


class ZeroPivot(ArithmeticError):
    """The tridiagonal elimination hit a vanishing pivot."""


class FrontCollapse(RuntimeError):
    def __init__(self, t: float, s: float):
        self.t = t
        self.s = s
        super().__init__(f"front collapsed to s={s:.6g} at t={t:.6g}")


class Diverged(RuntimeError):
    def __init__(self, t: float):
        self.t = t
        super().__init__(f"non-finite values at t={t:.6g}")


class IncompatibleData(ValueError):
    """Boundary and initial data violate the corner compatibility conditions."""

    def __init__(self, report):
        self.report = report
        failed = ", ".join(c.name for c in report.checks if not c.passed)
        super().__init__(f"compatibility check failed: {failed}")


class Status(str, enum.Enum):
    COMPLETED = "Completed"
    FRONT_COLLAPSE = "FrontCollapse"
    DIVERGED = "Diverged"


@dataclass(frozen=True)
class Forcing:
    """Manufactured source terms; both default to absent.

    g(xi, t) is called with the node array and a scalar time and must return
    an array; q(t) returns a scalar added to the front velocity.
    """

    g: Optional[Callable] = None
    q: Optional[Callable] = None

    def front(self, t: float) -> float:
        return 0.0 if self.q is None else float(self.q(t))


NO_FORCING = Forcing()


@dataclass
class RunResult:
    series: FrontSeries
    snapshots: list = field(default_factory=list)
    status: Status = Status.COMPLETED
    final_state: Optional[State] = None
    message: str = ""
    event_time: Optional[float] = None  # time of the failed step, if any


def thomas_solve(lower, diag, upper, rhs) -> np.ndarray:
    """Solve a tridiagonal system by forward elimination and back substitution.

    ``lower[i]`` multiplies x[i] in row i+1 and ``upper[i]`` multiplies x[i+1]
    in row i, so both have length n-1.
    """
    b = [float(x) for x in diag]
    n = len(b)
    if n == 0:
        raise InvalidInput("empty system")
    a = [float(x) for x in lower]
    c = [float(x) for x in upper]
    d = [float(x) for x in rhs]
    if len(a) != n - 1 or len(c) != n - 1 or len(d) != n:
        raise InvalidInput("inconsistent tridiagonal band lengths")

    cp = [0.0] * n
    dp = [0.0] * n
    scale = max(abs(x) for x in b) if n else 1.0
    tiny = 1e-14 * scale
    pivot = b[0]
    if abs(pivot) <= tiny:
        raise ZeroPivot("zero pivot in row 0")
    cp[0] = c[0] / pivot if n > 1 else 0.0
    dp[0] = d[0] / pivot
    for i in range(1, n):
        pivot = b[i] - a[i - 1] * cp[i - 1]
        if abs(pivot) <= tiny or not math.isfinite(pivot):
            raise ZeroPivot(f"zero pivot in row {i}")
        if i < n - 1:
            cp[i] = c[i] / pivot
        dp[i] = (d[i] - a[i - 1] * dp[i - 1]) / pivot
    x = [0.0] * n
    x[-1] = dp[-1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return np.array(x)


def front_velocity(state: State, params: Parameters) -> float:
    """Front law in xi coordinates: s * (int_0^1 v dxi - sigma)."""
    dxi = 1.0 / (state.v.size - 1)
    return state.s * (trapezoid(state.v, dxi) - params.sigma)


def s_double_prime_rhs(state: State, params: Parameters) -> float:
    """Right-hand side of the identity for s'' at the given state."""
    dxi = 1.0 / (state.v.size - 1)
    v_xi0 = one_sided_derivative_at_0(state.v, dxi)
    lam, sigma = params.lam, params.sigma
    return (state.v[-1] - lam - sigma) * state.s_prime - lam * sigma * state.s - v_xi0 / state.s


def init_state(params: Parameters, phi: Callable, grid: Grid, forcing: Forcing = NO_FORCING) -> State:
    """Sample phi on the physical nodes x_j = xi_j * b and start the front."""
    x = grid.nodes * params.b
    v = np.asarray(phi(x), dtype=float) * np.ones_like(x)
    state = State(0.0, params.b, 0.0, v)
    s_prime = front_velocity(state, params) + forcing.front(0.0)
    return State(0.0, params.b, s_prime, v)


def _implicit_solve(v_old, t_new, dt, s, s_prime, params, f_new, g_new=None):
    """Backward-Euler update of v with coefficients frozen at (s, s_prime).

    Dirichlet value f_new at xi=0; ghost node v[n+1] = v[n-1] at xi=1.
    Returns the full nodal array at t_new.
    """
    n = v_old.size - 1
    dxi = 1.0 / n
    xi = np.arange(1, n + 1) * dxi
    diff = 1.0 / (s * s * dxi * dxi)
    adv = xi * s_prime / (s * 2.0 * dxi)

    diag = np.full(n, 1.0 / dt + 2.0 * diff + params.lam)
    lower = -(diff - adv[1:])
    upper = -(diff + adv[:-1])
    lower[-1] = -2.0 * diff
    rhs = v_old[1:] / dt
    if g_new is not None:
        rhs = rhs + g_new[1:]
    rhs[0] += (diff - adv[0]) * f_new

    v_new = np.empty_like(v_old)
    v_new[0] = f_new
    v_new[1:] = thomas_solve(lower, diag, upper, rhs)
    return v_new


def step(
    state: State,
    params: Parameters,
    grid: Grid,
    f: Callable,
    forcing: Forcing = NO_FORCING,
    dt: Optional[float] = None,
) -> State:
    """Advance one time step; ``dt`` overrides grid.dt (used for a short last step)."""
    dt = grid.dt if dt is None else float(dt)
    if dt < 0:
        raise InvalidInput(f"dt must be >= 0, got {dt!r}")
    if dt == 0:
        return state
    if state.v.size != grid.n_xi + 1:
        raise InvalidInput("state does not match the grid")

    t_new = state.t + dt
    s_pred = state.s + dt * state.s_prime
    if not math.isfinite(s_pred):
        raise Diverged(t_new)
    if s_pred < params.s_min:
        raise FrontCollapse(t_new, s_pred)

    g_new = None
    if forcing.g is not None:
        g_new = np.asarray(forcing.g(grid.nodes, t_new), dtype=float) * np.ones(grid.n_xi + 1)
    v_new = _implicit_solve(state.v, t_new, dt, s_pred, state.s_prime, params, float(f(t_new)), g_new)

    q_new = forcing.front(t_new)
    predicted = State(t_new, s_pred, 0.0, v_new)
    s_new = state.s + 0.5 * dt * (state.s_prime + front_velocity(predicted, params) + q_new)
    if not (math.isfinite(s_new) and np.all(np.isfinite(v_new))):
        raise Diverged(t_new)
    if s_new < params.s_min:
        raise FrontCollapse(t_new, s_new)

    s_prime_new = front_velocity(State(t_new, s_new, 0.0, v_new), params) + q_new
    new = State(t_new, s_new, s_prime_new, v_new)
    if not new.is_finite():
        raise Diverged(t_new)
    return new


def _log_row(series: FrontSeries, state: State, params: Parameters):
    dxi = 1.0 / (state.v.size - 1)
    series.append(
        state.t,
        state.s,
        state.s_prime,
        s_double_prime_rhs(state, params),
        float(state.v[0]),
        one_sided_derivative_at_0(state.v, dxi),
        float(state.v[-1]),
    )


def fill_identity_residual(series: FrontSeries):
    """Store |s''_fd - rhs| per row; s''_fd is the second central difference of s."""
    residual = np.full(len(series), math.nan)
    if len(series) >= 3:
        s_fd = second_difference(series.column("t"), series.column("s"))
        rhs = series.column("s_dprime_rhs")
        residual[1:-1] = np.abs(s_fd - rhs[1:-1])
    series.set_identity_residual(residual)


def run(
    params: Parameters,
    grid: Grid,
    f: Callable,
    phi: Callable,
    forcing: Forcing = NO_FORCING,
    snapshot_times=(),
    waive_compat: bool = False,
    compat_tol: float = 1e-6,
) -> RunResult:
    """Integrate from t = 0 to params.t_end.

    For unforced runs the corner compatibility conditions are checked first
    (forced, manufactured runs skip them). A failing check
    raises IncompatibleData unless ``waive_compat`` is set, in which case a
    warning is logged and the run proceeds. Collapse and divergence end the
    run early and are reported through ``RunResult.status``.
    """
    from .verify import compatibility_check

    # the corner conditions describe the unforced problem only
    forced = forcing.g is not None or forcing.q is not None
    report = None if forced else compatibility_check(params, f, phi, tol=compat_tol)
    if report is not None and not report.overall:
        if not waive_compat:
            raise IncompatibleData(report)
        logger.warning("compatibility check failed (%s); proceeding because it was waived",
                       ", ".join(c.name for c in report.checks if not c.passed))

    state = init_state(params, phi, grid, forcing)
    series = FrontSeries()
    _log_row(series, state, params)
    result = RunResult(series)

    pending = sorted(float(t) for t in snapshot_times)
    while pending and pending[0] <= 0.0:
        result.snapshots.append((pending.pop(0), state))

    n_steps = math.ceil(params.t_end / grid.dt - 1e-9) if params.t_end > 0 else 0
    try:
        for n in range(1, n_steps + 1):
            t_target = params.t_end if n == n_steps else n * grid.dt
            state = step(state, params, grid, f, forcing, dt=t_target - state.t)
            _log_row(series, state, params)
            while pending and pending[0] <= state.t + 1e-12:
                result.snapshots.append((pending.pop(0), state))
    except FrontCollapse as exc:
        result.status = Status.FRONT_COLLAPSE
        result.message = str(exc)
        result.event_time = exc.t
    except Diverged as exc:
        result.status = Status.DIVERGED
        result.message = str(exc)
        result.event_time = exc.t
    result.final_state = state
    fill_identity_residual(series)
    return result
