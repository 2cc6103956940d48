"""Power-law fits on log-log data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class PowerFit:
    slope: float
    intercept: float
    r_squared: float


def _window(samples, window):
    s = np.asarray(samples, float)
    if s.ndim != 2 or s.shape[1] != 2:
        raise DomainError("samples must be (t, v) pairs")
    t, v = s[:, 0], s[:, 1]
    if window is not None:
        lo, hi = window
        m = (t >= lo) & (t <= hi)
        t, v = t[m], v[m]
    if t.size < 4:
        raise DomainError(f"need at least 4 samples in the window, got {t.size}")
    if np.any(t <= 0) or np.any(v <= 0):
        raise DomainError("power-law fits need positive t and v")
    return t, v


def fit_power_law(samples, window=None) -> PowerFit:
    """Least squares of log v on log t; v ~ exp(intercept) t^slope."""
    t, v = _window(samples, window)
    x, y = np.log(t), np.log(v)
    slope, icpt = np.polyfit(x, y, 1)
    ss_res = float(np.sum((y - (slope * x + icpt)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    # flat data: ss_tot is pure roundoff and the ratio is meaningless
    flat = ss_tot <= 1e-20 * y.size * max(1.0, float(np.max(y * y)))
    r2 = 1.0 if flat else 1.0 - ss_res / ss_tot
    return PowerFit(float(slope), float(icpt), float(r2))


def lower_envelope_constant(samples, exponent, window=None) -> float:
    """Largest c with v >= c t^exponent on every sample in the window."""
    t, v = _window(samples, window)
    return float(np.min(v * t ** (-exponent)))
