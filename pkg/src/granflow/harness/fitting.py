"""Rate fitting and envelope checks for decay curves."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

Array = np.ndarray


@dataclass(frozen=True)
class RateReport:
    lambda_fit: float
    intercept: float
    r_squared: float
    window: tuple[float, float]
    kind: str = "exponential"
    n_points: int = 0


def _arrays(times, values) -> tuple[Array, Array]:
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.shape != v.shape or t.ndim != 1:
        raise ValueError("times and values must be 1-D arrays of equal length")
    return t, v


def default_window(times, values, floor: float, transient: float = 0.1) -> tuple[float, float]:
    """Drop the first ``transient`` fraction of the time span and the tail from
    the first sample below ``floor`` onward."""
    t, v = _arrays(times, values)
    t_lo = t[0] + transient * (t[-1] - t[0])
    below = np.flatnonzero((t >= t_lo) & ~(v >= floor))
    if below.size:
        k = below[0]
        t_hi = t[k - 1] if k > 0 else t[0]
    else:
        t_hi = t[-1]
    return float(t_lo), float(t_hi)


def fit_exponential(times, values, window: tuple[float, float] | None = None) -> RateReport:
    """Least squares ``log v = intercept - lambda t`` over the window (inclusive)."""
    t, v = _arrays(times, values)
    lo, hi = (t[0], t[-1]) if window is None else window
    sel = (t >= lo - 1e-12) & (t <= hi + 1e-12)
    t, v = t[sel], v[sel]
    if t.size < 5:
        raise ValueError(f"need at least 5 points in the fit window, got {t.size}")
    if np.any(~(v > 0)):
        raise ValueError("exponential fit needs strictly positive values")
    y = np.log(v)
    A = np.column_stack([np.ones_like(t), -t])
    (b, lam), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ np.array([b, lam])
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid ** 2))
    if ss_tot <= 1e-300:
        r2 = 1.0
    else:
        r2 = float(np.clip(1.0 - ss_res / ss_tot, 0.0, 1.0))
    # exact data leaves roundoff-size slopes on constant series
    lam = 0.0 if abs(lam) < 1e-14 else float(lam)
    return RateReport(lam, float(b), r2, (float(t[0]), float(t[-1])), "exponential", int(t.size))


def polynomial_constant(p: float, c_deg: float) -> float:
    """Rate constant ``c`` in ``W(t) <= (W(0)^-p + c t)^(-1/p)``.

    From ``d/dt W^2 <= -c_deg eps^p (2 W^2 - eps^2)`` for every ``eps > 0``:
    the right side is smallest at ``eps^2 = 2p W^2/(p+2)``, which gives
    ``d/dt W^2 <= -c_deg A_p W^(2+p)`` with
    ``A_p = (2p/(p+2))^(p/2) * 4/(p+2)``.  Hence ``d/dt W^-p >= p c_deg A_p / 2``.
    """
    if not (p > 0 and c_deg > 0):
        raise ValueError("p and c_deg must be positive")
    a_p = (2 * p / (p + 2)) ** (p / 2) * 4 / (p + 2)
    return p * c_deg * a_p / 2


def polynomial_envelope(v0: float, p: float, c: float, t) -> Array:
    return (v0 ** (-p) + c * np.asarray(t, dtype=float)) ** (-1.0 / p)


def fit_polynomial_envelope(times, values, p: float, c_theory: float | None = None) -> tuple[float, bool]:
    """Largest ``c`` with ``v(t) <= (v(0)^-p + c t)^(-1/p)`` at every sample.

    ``holds`` is ``c_fit >= c_theory`` (with no theory value: ``c_fit > 0``).
    """
    t, v = _arrays(times, values)
    if not p > 0:
        raise ValueError("p must be positive")
    if np.any(~(v > 0)):
        raise ValueError("envelope fit needs strictly positive values")
    if t.size < 2:
        raise ValueError("need at least two samples")
    later = t > t[0]
    c_fit = float(np.min((v[later] ** (-p) - v[0] ** (-p)) / (t[later] - t[0])))
    ref = 0.0 if c_theory is None else c_theory
    holds = c_fit >= ref if c_theory is not None else c_fit > 0
    return c_fit, bool(holds)


def envelope_violations(values, bound, slack: float, mask=None) -> Array:
    """Indices where ``values > (1 + slack) * bound`` (restricted to ``mask``)."""
    v = np.asarray(values, dtype=float)
    b = np.asarray(bound, dtype=float)
    bad = v > (1.0 + slack) * b
    if mask is not None:
        bad &= np.asarray(mask, dtype=bool)
    return np.flatnonzero(bad)


def exponential_envelope(v0: float, rate: float, t) -> Array:
    return v0 * np.exp(-rate * np.asarray(t, dtype=float))


def dissipation_check(times, w2_sq, j, rel: float = 0.05, abs_tol: float = 1e-8) -> tuple[Array, Array]:
    """Per recorded step: ``dW^2/(2 dt) <= -Jbar + rel |Jbar| + abs_tol``.

    ``Jbar`` is the trapezoid average of J over the step.  Returns the
    boolean pass array and the left-hand sides.
    """
    t, w = _arrays(times, w2_sq)
    jj = np.asarray(j, dtype=float)
    lhs = np.diff(w) / (2.0 * np.diff(t))
    jbar = 0.5 * (jj[1:] + jj[:-1])
    ok = lhs <= -jbar + rel * np.abs(jbar) + abs_tol
    return ok, lhs


def strictly_decreasing(values) -> bool:
    v = np.asarray(values, dtype=float)
    return bool(np.all(np.diff(v) < 0))


def relative_error(a, b) -> Array:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.abs(a - b) / np.abs(b)


def ou_w2_to_standard(m0: float, var0: float, t) -> Array:
    """Closed-form W2 from the Ornstein-Uhlenbeck solution with data N(m0, var0) to N(0, 1)."""
    t = np.asarray(t, dtype=float)
    m = m0 * np.exp(-t)
    s = np.sqrt(1.0 + (var0 - 1.0) * np.exp(-2.0 * t))
    return np.sqrt(m * m + (s - 1.0) ** 2)


def perturbed_wj_rate(C: float, alpha: float, beta: float, K: float) -> float:
    """``(C - alpha) e^(-2K) + alpha + beta``: the rate surviving a bounded
    non-convex perturbation of sup-norm K."""
    return (C - alpha) * math.exp(-2.0 * K) + alpha + beta
