"""
Smooth one-dimensional profiles used to build cutoffs, bumps and tapers

All profiles are built from the C-infinity transition

    s(t) = e^{-1/t} / (e^{-1/t} + e^{-1/(1-t)}),   0 < t < 1,

which is exactly 0 for t <= 0 and exactly 1 for t >= 1. Exactness outside
(0, 1) is what makes plateaus and compact supports bit-exact on the grid.
"""

import numpy as np
from numpy.typing import ArrayLike


def smooth_step(t: ArrayLike) -> np.ndarray:
    """C-infinity step, 0 for t <= 0 and 1 for t >= 1

    Example:
        >>> smooth_step([-1.0, 0.5, 2.0])
        array([0. , 0.5, 1. ])
    """
    t = np.clip(np.asarray(t, dtype=np.float64), 0.0, 1.0)
    inner = (t > 0.0) & (t < 1.0)
    safe = np.where(inner, t, 0.5)
    a = np.where(inner, np.exp(-1.0 / safe), 0.0)
    b = np.where(inner, np.exp(-1.0 / (1.0 - safe)), 0.0)
    result = np.where(t >= 1.0, 1.0, 0.0)
    return np.where(inner, a / np.where(inner, a + b, 1.0), result)


def smooth_step_derivative(t: ArrayLike) -> np.ndarray:
    """Derivative of ``smooth_step``; zero outside (0, 1)"""
    t = np.asarray(t, dtype=np.float64)
    inner = (t > 0.0) & (t < 1.0)
    safe = np.where(inner, t, 0.5)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        a = np.exp(-1.0 / safe)
        b = np.exp(-1.0 / (1.0 - safe))
        value = a * b * (1.0 / safe**2 + 1.0 / (1.0 - safe) ** 2) / (a + b) ** 2
    return np.where(inner & (a * b > 0.0), value, 0.0)


def ramp_down(d: ArrayLike, inner: float, outer: float) -> np.ndarray:
    """1 for d <= inner, 0 for d >= outer, smooth in between"""
    if not outer > inner:
        raise ValueError(f"ramp needs outer > inner, got {inner} and {outer}")
    return 1.0 - smooth_step((np.asarray(d, dtype=np.float64) - inner) / (outer - inner))


def ramp_down_derivative(d: ArrayLike, inner: float, outer: float) -> np.ndarray:
    width = outer - inner
    return -smooth_step_derivative((np.asarray(d, dtype=np.float64) - inner) / width) / width


def bump(r: ArrayLike, left: float, right: float) -> np.ndarray:
    """Smooth bump supported on [left, right] with peak value 1 at the midpoint"""
    r = np.asarray(r, dtype=np.float64)
    half = 0.5 * (right - left)
    return smooth_step((r - left) / half) * smooth_step((right - r) / half)


def gaussian_ring(r: ArrayLike, center: float, width: float) -> np.ndarray:
    """exp(-(r - center)^2 / (2 width^2))"""
    r = np.asarray(r, dtype=np.float64)
    return np.exp(-0.5 * ((r - center) / width) ** 2)
