"""
Shared domain types, quadrature and finite-difference stencils.

The free boundary problem is solved on the fixed strip 0 <= xi <= 1 obtained
from the physical domain 0 <= x <= s(t) by xi = x / s(t). Everything here is
a plain function of its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class InvalidInput(ValueError):
    """Raised when an argument violates a documented precondition."""


class DomainError(ArithmeticError):
    """Raised when an expression is evaluated outside its domain."""


@dataclass(frozen=True)
class Parameters:
    """Physical and run constants.

    Attributes:
        lam: reaction coefficient in u_t = u_xx - lam*u
        sigma: offset in the front law s' = int_0^s (u - sigma) dx
        b: initial front position s(0)
        t_end: final time
        s_min: the run stops with FrontCollapse once s drops below this
    """

    lam: float
    sigma: float
    b: float
    t_end: float
    s_min: float = 1e-6

    def __post_init__(self):
        for name in ("lam", "sigma", "b"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise InvalidInput(f"{name} must be finite and > 0, got {value!r}")
        if not (math.isfinite(self.t_end) and self.t_end >= 0):
            raise InvalidInput(f"t_end must be finite and >= 0, got {self.t_end!r}")
        if not (0 < self.s_min < self.b):
            raise InvalidInput(f"need 0 < s_min < b, got s_min={self.s_min!r}, b={self.b!r}")


@dataclass(frozen=True)
class Grid:
    """Uniform grid on [0, 1] with n_xi intervals and a fixed time step."""

    n_xi: int
    dt: float

    def __post_init__(self):
        if int(self.n_xi) != self.n_xi or self.n_xi < 8:
            raise InvalidInput(f"n_xi must be an integer >= 8, got {self.n_xi!r}")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise InvalidInput(f"dt must be finite and > 0, got {self.dt!r}")

    @property
    def dxi(self) -> float:
        return 1.0 / self.n_xi

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n_xi + 1) * self.dxi


@dataclass(frozen=True)
class State:
    """Discrete solution at one time level.

    ``v[j]`` approximates v(xi_j, t) = u(xi_j * s, t). ``s_prime`` is the
    total front velocity at ``t`` (front law plus any manufactured forcing).
    """

    t: float
    s: float
    s_prime: float
    v: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        if v.ndim != 1 or v.size < 3:
            raise InvalidInput("v must be a 1-d array with at least 3 entries")
        object.__setattr__(self, "v", v)

    def is_finite(self) -> bool:
        return bool(math.isfinite(self.s) and math.isfinite(self.s_prime) and np.all(np.isfinite(self.v)))


FRONT_COLUMNS = ("t", "s", "s_prime", "s_dprime_rhs", "identity_residual", "v0", "vxi0", "v1")


@dataclass
class FrontSeries:
    """Per-step log of the front and the boundary quantities it depends on.

    Columns follow FRONT_COLUMNS. ``identity_residual`` is filled in after
    the run, since it needs neighbouring rows; it is NaN at the two ends.
    """

    rows: list[tuple[float, ...]] = field(default_factory=list)

    def append(self, t, s, s_prime, s_dprime_rhs, v0, vxi0, v1):
        if self.rows and not t > self.rows[-1][0]:
            raise InvalidInput(f"times must increase strictly: {t!r} after {self.rows[-1][0]!r}")
        row = tuple(float(x) for x in (t, s, s_prime, s_dprime_rhs, math.nan, v0, vxi0, v1))
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        idx = FRONT_COLUMNS.index(name)
        return np.array([row[idx] for row in self.rows], dtype=float)

    def as_array(self) -> np.ndarray:
        return np.array(self.rows, dtype=float).reshape(-1, len(FRONT_COLUMNS))

    def set_identity_residual(self, residual: np.ndarray):
        residual = np.asarray(residual, dtype=float)
        if residual.shape != (len(self.rows),):
            raise InvalidInput("residual length must match the number of rows")
        idx = FRONT_COLUMNS.index("identity_residual")
        self.rows = [row[:idx] + (float(r),) + row[idx + 1 :] for row, r in zip(self.rows, residual)]


def trapezoid(values, dx: float) -> float:
    """Composite trapezoid rule on uniformly spaced samples."""
    y = np.asarray(values, dtype=float)
    if y.ndim != 1 or y.size < 2:
        raise InvalidInput("trapezoid needs at least 2 samples")
    if not dx > 0:
        raise InvalidInput(f"dx must be > 0, got {dx!r}")
    return float(dx * (0.5 * (y[0] + y[-1]) + y[1:-1].sum()))


def one_sided_derivative_at_0(values, dx: float) -> float:
    """Second-order forward estimate of y'(0): (-3y0 + 4y1 - y2) / (2dx)."""
    y = np.asarray(values, dtype=float)
    if y.ndim != 1 or y.size < 3:
        raise InvalidInput("one-sided derivative needs at least 3 samples")
    if not dx > 0:
        raise InvalidInput(f"dx must be > 0, got {dx!r}")
    return float((-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * dx))


def derivative_trim(k: int) -> int:
    """Samples lost at each end by ``central_derivative_series`` of order k."""
    return k // 2 + k % 2


def central_derivative_series(series, k: int, dx: float = 1.0) -> np.ndarray:
    """k-th derivative of uniformly sampled data by iterated central differences.

    The compact second difference is applied k // 2 times, followed by one
    first central difference when k is odd. Entry i of the result belongs to
    input index i + derivative_trim(k).
    """
    if int(k) != k or k < 1:
        raise InvalidInput(f"order must be an integer >= 1, got {k!r}")
    y = np.asarray(series, dtype=float)
    if y.ndim != 1 or y.size < k + 2:
        raise InvalidInput(f"need at least {k + 2} samples for order {k}, got {y.size}")
    if not dx > 0:
        raise InvalidInput(f"dx must be > 0, got {dx!r}")
    for _ in range(k // 2):
        y = (y[2:] - 2.0 * y[1:-1] + y[:-2]) / (dx * dx)
    if k % 2:
        y = (y[2:] - y[:-2]) / (2.0 * dx)
    return y


def second_difference(t, y) -> np.ndarray:
    """Three-point estimate of y'' at interior samples of a possibly uneven grid."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.shape != y.shape or t.ndim != 1 or t.size < 3:
        raise InvalidInput("need matching 1-d arrays with at least 3 samples")
    h_minus = t[1:-1] - t[:-2]
    h_plus = t[2:] - t[1:-1]
    return 2.0 * (h_minus * y[2:] - (h_minus + h_plus) * y[1:-1] + h_plus * y[:-2]) / (
        h_minus * h_plus * (h_minus + h_plus)
    )
