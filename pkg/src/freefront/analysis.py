"""
Regularity probes for sampled time series.

Two instruments:

* ``holder_exponent`` measures how the largest (m+1)-th finite difference
  shrinks with the step h. For a function whose m-th derivative is Hoelder
  with exponent l the decay is h^(m+l); a smooth function gives h^(m+1).
* ``detect_derivative_jump`` compares forward and backward k-th difference
  quotients at every sample. For a smooth function the mismatch is about
  k*h*|y^(k+1)|, i.e. O(h); across a jump of size A in y^(k) it is about A.

Neither can certify membership in C^m from finitely many samples, so
findings are phrased as "consistent with" or "inconsistent with".
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from math import comb
from typing import NamedTuple, Optional

import numpy as np

from .core import FrontSeries, InvalidInput, central_derivative_series, derivative_trim

EPS = np.finfo(float).eps

# Hoelder fits skip scales whose differences are within this factor of the
# worst-case roundoff error
NOISE_MARGIN = 10.0
# with default scales only the finest surviving ones are fitted: the decay
# law is a small-h statement, and coarse scales see fast transients saturate
DEFAULT_FIT_SCALES = 3
# a jump must stand this far above the median indicator next to it, which
# rejects threshold crossings on a slowly varying elevated stretch
LOCAL_PROMINENCE = 2.0


class Detection(NamedTuple):
    location: float
    magnitude: float


@dataclass(frozen=True)
class HolderEstimate:
    """Fitted decay of (m+1)-th differences.

    status is "fitted", "beyond_resolution" (decay at least h^(m+1), so no
    fractional exponent is visible) or "inconclusive" (poor log-log fit).
    """

    order_m: Optional[int]
    ell_hat: Optional[float]
    slope: Optional[float]
    fit_window: tuple
    fit_r2: Optional[float]
    status: str

    def as_dict(self) -> dict:
        return {
            "order_m": self.order_m,
            "ell_hat": self.ell_hat,
            "slope": self.slope,
            "fit_window": list(self.fit_window),
            "fit_r2": self.fit_r2,
            "status": self.status,
        }


def _difference(y: np.ndarray, order: int, stride: int) -> np.ndarray:
    """Forward difference of the given order with step ``stride`` samples."""
    out = y
    for _ in range(order):
        out = out[stride:] - out[:-stride]
    return out


def default_scales(n_samples: int, order: int) -> list:
    """Dyadic strides 4, 8, ... up to n/8 that still leave room for the stencil."""
    scales = []
    h = 4
    while h <= n_samples // 8 and order * h < n_samples - 1:
        scales.append(h)
        h *= 2
    return scales


def holder_exponent(series, m: int, scales=None, dt: float = 1.0, min_r2: float = 0.95) -> HolderEstimate:
    """Estimate m + l from the scaling of max |Delta_h^(m+1) series|.

    ``scales`` are strides in samples; the fitted slope is independent of dt.
    Scales whose differences sit within NOISE_MARGIN of the roundoff floor are
    dropped; if none remain the series is smoother than can be resolved. By
    default the candidates are 4, 8, ... samples up to n/8 and the fit uses
    the DEFAULT_FIT_SCALES finest candidates that clear the floor; explicit
    ``scales`` are all fitted.
    """
    y = np.asarray(series, dtype=float)
    if int(m) != m or m < 0:
        raise InvalidInput(f"m must be a non-negative integer, got {m!r}")
    order = m + 1
    keep = DEFAULT_FIT_SCALES if scales is None else None
    scales = default_scales(y.size, order) if scales is None else [int(h) for h in scales]
    if not scales or y.ndim != 1 or order * max(scales) >= y.size:
        raise InvalidInput(f"series of length {y.size} too short for order {order} at scales {scales}")

    floor = NOISE_MARGIN * 2**order * EPS * max(float(np.max(np.abs(y))), 1e-300)
    used, peaks = [], []
    for h in scales:
        peak = float(np.max(np.abs(_difference(y, order, h))))
        if peak > floor:
            used.append(h)
            peaks.append(peak)
        if keep is not None and len(used) == keep:
            break

    if not used:
        return HolderEstimate(m + 1, None, None, (), None, "beyond_resolution")
    window = (used[0] * dt, used[-1] * dt)
    if len(used) < 3:
        return HolderEstimate(None, None, None, window, None, "inconclusive")

    x = np.log(np.asarray(used, dtype=float) * dt)
    z = np.log(peaks)
    slope, intercept = np.polyfit(x, z, 1)
    ss_res = float(np.sum((z - (slope * x + intercept)) ** 2))
    ss_tot = float(np.sum((z - z.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    slope = float(slope)

    if r2 < min_r2:
        return HolderEstimate(None, None, slope, window, r2, "inconclusive")
    if slope >= m + 1 - 0.05:
        return HolderEstimate(m + 1, None, slope, window, r2, "beyond_resolution")
    order_m = max(int(math.floor(slope)), 0)
    return HolderEstimate(order_m, slope - order_m, slope, window, r2, "fitted")


def jump_indicator(series, k: int, stride: int = 1, dt: float = 1.0) -> np.ndarray:
    """Forward minus backward k-th difference quotient, NaN where undefined."""
    y = np.asarray(series, dtype=float)
    reach = k * stride
    if y.ndim != 1 or y.size < 2 * reach + 1:
        raise InvalidInput(f"series of length {y.size} too short for order {k} with stride {stride}")
    h = stride * dt
    n = y.size
    weights = [(-1) ** (k - j) * comb(k, j) for j in range(k + 1)]
    idx = np.arange(reach, n - reach)
    forward = sum(w * y[idx + j * stride] for j, w in enumerate(weights))
    backward = sum(w * y[idx - (k - j) * stride] for j, w in enumerate(weights))
    out = np.full(n, np.nan)
    out[idx] = (forward - backward) / h**k
    return out


def detect_derivative_jump(
    series,
    k: int,
    threshold_factor: float = 10.0,
    dt: float = 1.0,
    t0: float = 0.0,
    stride: int = 1,
) -> list:
    """Locate isolated jumps in the k-th derivative of uniformly sampled data.

    A sample is flagged when its jump indicator exceeds both threshold_factor
    times the median absolute indicator and the worst-case roundoff of the
    indicator. Flagged samples closer than the stencil reach are merged; each
    group reports its largest indicator as the magnitude and a centroid of
    its dominant samples as the location.

    A group is discarded when its peak sits on the edge of the valid range
    (a one-sided trend there cannot be told apart from a jump), when its
    samples above half the peak span more than twice the indicator support
    of an isolated jump, or when the peak is less than LOCAL_PROMINENCE times
    the median indicator within 8 stencil reaches on either side. The last
    two reject elevated stretches that are not breakpoints. A singular point
    such as a square-root cusp in the k-th derivative passes: its indicator
    has a narrow core and a decaying tail.
    """
    if int(k) != k or k < 1:
        raise InvalidInput(f"k must be an integer >= 1, got {k!r}")
    y = np.asarray(series, dtype=float)
    indicator = jump_indicator(y, k, stride, dt)
    valid = np.flatnonzero(np.isfinite(indicator))
    mag = np.abs(indicator[valid])
    h = stride * dt
    # worst-case roundoff in the indicator; a lower bound for the threshold
    # that matters when much of the series is an exact polynomial
    floor = 2 ** (k + 1) * EPS * max(float(np.max(np.abs(y))), 1e-300) / h**k
    threshold = max(threshold_factor * float(np.median(mag)), floor)

    flagged = np.flatnonzero(mag > threshold)
    detections = []
    reach = k * stride
    start = 0
    while start < flagged.size:
        end = start
        while end + 1 < flagged.size and flagged[end + 1] - flagged[end] <= reach:
            end += 1
        group = flagged[start : end + 1]
        peak = group[np.argmax(mag[group])]
        core = group[mag[group] >= 0.5 * mag[peak]]
        side = np.r_[mag[max(group[0] - 8 * reach, 0) : group[0]], mag[group[-1] + 1 : group[-1] + 1 + 8 * reach]]
        prominent = side.size == 0 or mag[peak] >= LOCAL_PROMINENCE * float(np.median(side))
        if prominent and core[-1] - core[0] <= 4 * reach and 0 < peak < mag.size - 1:
            # centroid weighted by the excess over a quarter of the peak:
            # exact for a clean jump, whose indicator is symmetric; keeps both
            # lobes of the dipole a cusp produces; and continuous in the data,
            # since samples near the cut get vanishing weight
            weight = np.clip(mag[group] - 0.25 * mag[peak], 0.0, None)
            centre = float(np.dot(valid[group], weight) / weight.sum())
            detections.append(Detection(t0 + centre * dt, float(mag[peak])))
        start = end + 1
    return detections


@dataclass
class OrderReport:
    k: int
    max_derivative: float
    holder: Optional[HolderEstimate]
    jumps: list

    def as_dict(self) -> dict:
        return {
            "k": self.k,
            "max_derivative": self.max_derivative,
            "holder": None if self.holder is None else self.holder.as_dict(),
            "jumps": [{"t": d.location, "magnitude": d.magnitude} for d in self.jumps],
        }


@dataclass
class RegularityReport:
    epsilon: float
    t_end: float
    dt: float
    stride: int
    threshold_factor: float
    orders: list = field(default_factory=list)

    def detections(self, k: int) -> list:
        return next((o.jumps for o in self.orders if o.k == k), [])

    def firing_orders(self) -> list:
        return [o.k for o in self.orders if o.jumps]

    def as_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "t_end": self.t_end,
            "dt": self.dt,
            "stride": self.stride,
            "threshold_factor": self.threshold_factor,
            "firing_orders": self.firing_orders(),
            "orders": [o.as_dict() for o in self.orders],
        }


def uniform_front(series: FrontSeries, epsilon: float):
    """The s column for t > epsilon on the uniform part of the time grid.

    Returns (t_start, dt, s). A shortened final step, if any, is dropped.
    """
    t = series.column("t")
    s = series.column("s")
    if t.size < 3:
        raise InvalidInput("series too short for regularity analysis")
    dt = t[1] - t[0]
    if t[-1] - t[-2] < dt * (1 - 1e-9):
        t, s = t[:-1], s[:-1]
    if not np.allclose(np.diff(t), dt, rtol=1e-6, atol=0):
        raise InvalidInput("regularity analysis needs uniformly spaced samples")
    keep = t > epsilon
    if keep.sum() < 3:
        raise InvalidInput(f"no data after the initial layer epsilon={epsilon!r}")
    return float(t[keep][0]), float(dt), s[keep]


def regularity_report(
    series: FrontSeries,
    epsilon: Optional[float] = None,
    k_max: int = 4,
    threshold_factor: float = 10.0,
    stride: int = 1,
) -> RegularityReport:
    """Probe s(t) for derivative jumps and Hoelder decay at orders 1..k_max.

    The initial layer [0, epsilon] is excluded (default 5% of the final
    time). Hoelder estimates stop after the first inconclusive order; jump
    detection runs at every order.
    """
    t_end = float(series.column("t")[-1])
    if epsilon is None:
        epsilon = 0.05 * t_end
    if not epsilon < t_end:
        raise InvalidInput(f"epsilon={epsilon!r} must be below the final time {t_end!r}")
    t_start, dt, s = uniform_front(series, epsilon)
    report = RegularityReport(epsilon, t_end, dt, stride, threshold_factor)
    holder_done = False
    for k in range(1, k_max + 1):
        coarse = s[::stride]
        deriv = central_derivative_series(coarse, k, stride * dt)
        holder = None
        if not holder_done:
            holder = holder_exponent(s, k, dt=dt)
            holder_done = holder.status == "inconclusive"
        jumps = detect_derivative_jump(s, k, threshold_factor, dt, t_start, stride)
        report.orders.append(OrderReport(k, float(np.max(np.abs(deriv))), holder, jumps))
    return report


def derivative_table(series: FrontSeries, k: int, epsilon: float, stride: int = 1):
    """(t, d^k s/dt^k) estimates after the initial layer, for CSV export."""
    t_start, dt, s = uniform_front(series, epsilon)
    coarse = s[::stride]
    deriv = central_derivative_series(coarse, k, stride * dt)
    t = t_start + (np.arange(deriv.size) + derivative_trim(k)) * stride * dt
    return t, deriv
