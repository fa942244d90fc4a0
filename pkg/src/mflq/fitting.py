"""Least-squares helpers shared by the convergence and turnpike reports."""
from __future__ import annotations

import numpy as np

# Below this total variation the response is treated as constant and the
# fit reported as exact.
_SSTOT_FLOOR = 1e-30


def log_linear_fit(ts, values):
    """Ordinary least squares of ``log(values)`` on ``ts``.

    Returns ``(intercept, slope, r_squared)``.  ``values`` must be
    strictly positive.  A constant response gives slope 0 and R^2 = 1.
    """
    ts = np.asarray(ts, dtype=float)
    values = np.asarray(values, dtype=float)
    if ts.shape != values.shape or ts.ndim != 1 or ts.size < 2:
        raise ValueError("need matching 1-D arrays with at least two points")
    if np.any(values <= 0.0):
        raise ValueError("values must be strictly positive for a log fit")
    y = np.log(values)
    slope, intercept = np.polyfit(ts, y, 1)
    resid = y - (intercept + slope * ts)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot <= _SSTOT_FLOOR:
        return float(intercept), float(slope), 1.0
    return float(intercept), float(slope), 1.0 - ss_res / ss_tot
