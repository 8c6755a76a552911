"""Stationary states: the self-consistent Gibbs fixed point ``mu = Z^{-1} exp(-V - W * mu)``."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .measures import GridMeasure, convolve_w, free_energy, interaction_matrix, moments
from .potentials import PotentialSpec
from .transport import TransportMap, probe_maps, pushforward

Array = np.ndarray

# cells lighter than this are left out of the Gibbs identity check
RESIDUAL_DENSITY_FLOOR = 1e-10


class FixedPointError(RuntimeError):
    pass


@dataclass
class StationaryState:
    mu: GridMeasure
    lambda_mult: float
    residual_inf: float
    iterations: int
    pinned_mean: float | None = None


def _gibbs(v: Array, phi_w: Array, dx: float) -> Array:
    phi = v + phi_w
    g = np.exp(-(phi - phi.min()))
    return g / (g.sum() * dx)


def translate(rho: Array, shift: float, dx: float) -> Array:
    """Shift a grid density by ``shift`` (whole-cell roll plus linear sub-cell blend).

    The mean moves by exactly ``shift`` as long as no mass wraps around.
    """
    s = shift / dx
    k = int(np.floor(s))
    f = s - k
    return (1.0 - f) * np.roll(rho, k) + f * np.roll(rho, k + 1)


def _lambda_and_residual(mu: GridMeasure, V: PotentialSpec, W: PotentialSpec) -> tuple[float, float]:
    rho = mu.density
    keep = rho > RESIDUAL_DENSITY_FLOOR
    if not np.any(keep):
        raise ValueError("state has no cell above the residual density floor")
    g = np.log(rho[keep]) + V.value(mu.centers[keep]) + convolve_w(mu, W)[keep]
    w = rho[keep] / rho[keep].sum()
    lam = float(np.dot(g, w))
    return lam, float(np.max(np.abs(g - lam)))


def fixed_point_solve(
    V: PotentialSpec,
    W: PotentialSpec,
    grid: tuple[float, float, int],
    pin_mean: float | None = None,
    damping: float = 0.5,
    tol: float = 1e-11,
    max_iter: int = 20000,
    init: GridMeasure | None = None,
    stall_window: int = 50,
) -> StationaryState:
    """Damped iteration ``mu <- (1 - theta) mu + theta normalize(exp(-V - W * mu))``.

    With ``pin_mean`` the iterate is translated back to that mean after every
    update, which selects one member of the translation family of
    stationary states when ``V = 0``.  Stops when both the L1 change and the
    largest relative change over cells above ``RESIDUAL_DENSITY_FLOOR`` drop
    below ``tol`` (the L1 change alone settles long before the light tail
    cells do).  Raises :class:`FixedPointError` on ``max_iter`` or when the L1
    change grows for ``stall_window`` consecutive iterations.
    """
    if not 0 < damping <= 1:
        raise ValueError("damping must lie in (0, 1]")
    if V.is_zero and pin_mean is None:
        raise ValueError("with V = 0 the stationary states form a translation family; pass pin_mean")
    lo, hi, m = grid
    if init is None:
        center = 0.0 if pin_mean is None else pin_mean
        init = GridMeasure.gaussian(center, 1.0, lo, hi, m)
    elif not init.same_grid(GridMeasure(lo, hi, m, np.ones(m))):
        raise ValueError("initializer lives on a different grid")
    mu = init.normalize()
    dx = mu.dx
    v = V.value(mu.centers)
    K = None if W.is_zero else interaction_matrix(W, mu, "value")
    x = mu.centers

    rho = mu.density.copy()
    prev_change = np.inf
    growing = 0
    for it in range(1, max_iter + 1):
        phi_w = 0.0 if K is None else K @ (rho * dx)
        new = (1.0 - damping) * rho + damping * _gibbs(v, phi_w, dx)
        if pin_mean is not None:
            new = translate(new, pin_mean - float(np.dot(x, new) * dx), dx)
            new = new / (new.sum() * dx)
        heavy = new > RESIDUAL_DENSITY_FLOOR
        rel = float(np.max(np.abs(new[heavy] - rho[heavy]) / np.maximum(rho[heavy], RESIDUAL_DENSITY_FLOOR)))
        change = float(np.sum(np.abs(new - rho)) * dx)
        rho = new
        if change < tol and rel < tol:
            break
        growing = growing + 1 if change > prev_change else 0
        prev_change = change
        if growing >= stall_window:
            raise FixedPointError(
                f"L1 change grew for {stall_window} consecutive iterations (iteration {it}); "
                "the fixed point may not be unique here"
            )
    else:
        raise FixedPointError(f"no convergence in {max_iter} iterations (last L1 change {change:.3e})")

    out = mu.with_density(rho)
    lam, res = _lambda_and_residual(out, V, W)
    return StationaryState(out, lam, res, it, pin_mean)


def stationarity_residual(s: StationaryState, V: PotentialSpec, W: PotentialSpec) -> float:
    """sup over non-negligible cells of ``|log mu + V + W * mu - lambda|``."""
    return _lambda_and_residual(s.mu, V, W)[1]


def state_from_measure(mu: GridMeasure, V: PotentialSpec, W: PotentialSpec, pinned_mean=None) -> StationaryState:
    """Wrap an arbitrary measure as a candidate state (lambda and residual recomputed)."""
    lam, res = _lambda_and_residual(mu, V, W)
    return StationaryState(mu, lam, res, 0, pinned_mean)


def free_energy_change(mu: GridMeasure, T: TransportMap, V: PotentialSpec, W: PotentialSpec) -> float:
    """``F(T # mu) - F(mu)`` with the pushforward re-gridded exactly through its CDF."""
    return free_energy(pushforward(mu, T), V, W) - free_energy(mu, V, W)


def minimizer_audit(
    s: StationaryState, V: PotentialSpec, W: PotentialSpec, n_perturbations: int = 200, seed: int = 0,
    slack: float = 1e-9,
) -> bool:
    """True iff no random monotone perturbation lowers the free energy (beyond ``slack``).

    Probes preserve the mean when ``V = 0`` (translations cost nothing there).
    """
    f0 = free_energy(s.mu, V, W)
    for _, T in probe_maps(s.mu, n_perturbations, seed, preserve_mean=V.is_zero):
        if free_energy(pushforward(s.mu, T), V, W) - f0 < -slack:
            return False
    return True


@dataclass
class CoercivityReport:
    case: str
    a: float | None
    a_prime: float | None
    b: float | None
    b_prime: float | None
    holds: bool
    notes: str = ""


def fit_envelope(f: Array, g: Array, x: Array) -> tuple[float, float]:
    """Fit ``f >= slope * g - intercept`` on the lattice ``x``.

    The slope is the smallest ratio ``f / g`` over the outer half of the
    lattice (the growth rate that matters for coercivity); the intercept is
    then the smallest nonnegative value making the bound hold everywhere.
    """
    outer = np.abs(x) >= 0.5 * np.max(np.abs(x))
    outer &= g > 0
    slope = float(np.min(f[outer] / g[outer]))
    intercept = float(max(0.0, np.max(slope * g - f)))
    return slope, intercept


def envelope_holds(f: Array, g: Array, slope: float, intercept: float, tol: float = 1e-12) -> bool:
    return bool(np.all(f >= slope * g - intercept - tol * np.maximum(1.0, np.abs(f))))


def coercivity_diagnostics(
    V: PotentialSpec, W: PotentialSpec, case: str, domain=(-10.0, 10.0), step: float = 0.01
) -> CoercivityReport:
    """Check the growth hypotheses under which the free energy has a minimizer.

    ``case`` selects the hypothesis set:

    * ``i``   V = 0, W convex, W >= b x^2 - b'
    * ``ii``  V >= a |x| - a', W >= b x^2 - b'
    * ``iii`` V >= a x^2 - a', W >= b x^2 - b' with b > -a
    * ``iv``  W bounded below and exp(-V) a normalizable density with finite
      second moment; the transport-entropy constant itself is an external
      input and is *not* verified here.
    """
    x = np.linspace(domain[0], domain[1], int(round((domain[1] - domain[0]) / step)) + 1)
    vx, wx = V.value(x), W.value(x)
    ax2 = x * x
    if case == "i":
        b, bp = fit_envelope(wx, ax2, x)
        holds = V.is_zero and W.alpha >= 0 and b > 0
        return CoercivityReport(case, None, None, b, bp, holds, "" if V.is_zero else "case i requires V = 0")
    if case in ("ii", "iii"):
        g = np.abs(x) if case == "ii" else ax2
        a, ap = fit_envelope(vx, g, x)
        b, bp = fit_envelope(wx, ax2, x)
        holds = a > 0 and (b > 0 if case == "ii" else b > -a)
        return CoercivityReport(case, a, ap, b, bp, holds)
    if case == "iv":
        w_below = bool(np.isfinite(wx.min()))
        e = np.exp(-(vx - vx.min()))
        mass = np.trapezoid(e, x) if hasattr(np, "trapezoid") else np.trapz(e, x)
        edge = max(e[0], e[-1]) * (x[-1] - x[0]) / mass
        second = float(np.trapezoid(ax2 * e, x) / mass) if hasattr(np, "trapezoid") else float(np.trapz(ax2 * e, x) / mass)
        normalizable = edge < 1e-8
        return CoercivityReport(
            case, None, None, None, None, w_below and normalizable and np.isfinite(second),
            f"exp(-V) normalizable={normalizable}, second moment={second:.6g}; transport-entropy constant not verified",
        )
    raise ValueError(f"unknown case {case!r}; expected one of i, ii, iii, iv")


def mean_of(s: StationaryState) -> float:
    return moments(s.mu)[0]
