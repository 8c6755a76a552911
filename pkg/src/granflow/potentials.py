"""Analytic one-dimensional potentials with convexity metadata.

Exterior (confinement) potentials V and interaction potentials W are both
represented by :class:`PotentialSpec`.  Every catalog entry carries exact
first and second derivatives; the metadata fields are supplied analytically
and can be checked numerically with the ``check_*`` scans below.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

Array = np.ndarray
ScalarFn = Callable[[Array], Array]


@dataclass(frozen=True)
class PotentialSpec:
    """A C^2 potential on the real line.

    ``alpha`` is a lower bound on the second derivative (it plays the role of
    beta when the potential is used as an interaction).  ``k_outside`` is an
    optional pair ``(K, R)`` meaning ``hess(x) >= K`` whenever ``|x| >= R``.
    ``sup_abs`` bounds ``|value|`` for bounded interaction potentials.
    """

    name: str
    value: ScalarFn
    grad: ScalarFn
    hess: ScalarFn
    alpha: float
    k_outside: tuple[float, float] | None = None
    sup_abs: float | None = None
    is_even: bool = True
    params: tuple[float, ...] = field(default=())

    def __call__(self, x):
        return self.value(np.asarray(x, dtype=float))

    @property
    def is_zero(self) -> bool:
        return self.name == "zero"

    def describe(self) -> str:
        if not self.params:
            return self.name
        return f"{self.name}({', '.join(f'{p:g}' for p in self.params)})"


@dataclass(frozen=True)
class DegeneracyProfile:
    """Exponent ``p`` and constant ``c_deg`` of a degenerate convexity bound."""

    p: float
    c_deg: float

    def __post_init__(self):
        if not self.p > 0:
            raise ValueError(f"exponent p must be positive, got {self.p}")
        if not self.c_deg > 0:
            raise ValueError(f"c_deg must be positive, got {self.c_deg}")


# --------------------------------------------------------------------------
# catalog


def _zero() -> PotentialSpec:
    z = lambda x: np.zeros_like(np.asarray(x, dtype=float))
    return PotentialSpec("zero", z, z, z, alpha=0.0, sup_abs=0.0)


def _quadratic(a: float = 1.0) -> PotentialSpec:
    if a <= 0:
        raise ValueError("quadratic coefficient must be positive")
    return PotentialSpec(
        "quadratic",
        value=lambda x: 0.5 * a * np.asarray(x, dtype=float) ** 2,
        grad=lambda x: a * np.asarray(x, dtype=float),
        hess=lambda x: np.full_like(np.asarray(x, dtype=float), a),
        alpha=a,
        k_outside=(a, 0.0),
        params=(a,),
    )


def _power(e: float, R: float = 1.0) -> PotentialSpec:
    # |x|^(2+e); hess = (2+e)(1+e)|x|^e vanishes at the origin only
    if e <= 0:
        raise ValueError("power exponent excess e must be positive")
    if R <= 0:
        raise ValueError("R must be positive")
    q = 2.0 + e

    def value(x):
        return np.abs(np.asarray(x, dtype=float)) ** q

    def grad(x):
        x = np.asarray(x, dtype=float)
        return q * np.sign(x) * np.abs(x) ** (q - 1)

    def hess(x):
        return q * (q - 1) * np.abs(np.asarray(x, dtype=float)) ** e

    name = "cubic_abs" if e == 1.0 else "power"
    params = (R,) if e == 1.0 else (e, R)
    return PotentialSpec(
        name, value, grad, hess, alpha=0.0, k_outside=(q * (q - 1) * R**e, R), params=params
    )


def _cubic_abs(R: float = 1.0) -> PotentialSpec:
    return _power(1.0, R)


def _double_well(eps: float, R: float = 1.0) -> PotentialSpec:
    if eps < 0:
        raise ValueError("double-well depth eps must be nonnegative")
    if R <= 0:
        raise ValueError("R must be positive")
    k = 12.0 * R**2 - 2.0 * eps
    return PotentialSpec(
        "double_well",
        value=lambda x: np.asarray(x, dtype=float) ** 4 - eps * np.asarray(x, dtype=float) ** 2,
        grad=lambda x: 4.0 * np.asarray(x, dtype=float) ** 3 - 2.0 * eps * np.asarray(x, dtype=float),
        hess=lambda x: 12.0 * np.asarray(x, dtype=float) ** 2 - 2.0 * eps,
        alpha=-2.0 * eps,
        k_outside=(k, R) if k > 0 else None,
        params=(eps, R),
    )


def _pseudo_huber() -> PotentialSpec:
    return PotentialSpec(
        "pseudo_huber",
        value=lambda x: np.sqrt(1.0 + np.asarray(x, dtype=float) ** 2),
        grad=lambda x: np.asarray(x, dtype=float) / np.sqrt(1.0 + np.asarray(x, dtype=float) ** 2),
        hess=lambda x: (1.0 + np.asarray(x, dtype=float) ** 2) ** -1.5,
        alpha=0.0,
    )


def _gauss_well(k: float) -> PotentialSpec:
    if k <= 0:
        raise ValueError("gauss_well depth must be positive")

    def value(x):
        x = np.asarray(x, dtype=float)
        return -k * np.exp(-(x**2))

    def grad(x):
        x = np.asarray(x, dtype=float)
        return 2.0 * k * x * np.exp(-(x**2))

    def hess(x):
        x = np.asarray(x, dtype=float)
        return 2.0 * k * np.exp(-(x**2)) * (1.0 - 2.0 * x**2)

    # min of 2k e^{-x^2}(1-2x^2) sits at x^2 = 3/2
    beta = -4.0 * k * np.exp(-1.5)
    return PotentialSpec("gauss_well", value, grad, hess, alpha=beta, sup_abs=k, params=(k,))


_CATALOG: dict[str, tuple[Callable[..., PotentialSpec], int, int]] = {
    # name: (factory, min params, max params)
    "zero": (_zero, 0, 0),
    "quadratic": (_quadratic, 0, 1),
    "power": (_power, 1, 2),
    "cubic_abs": (_cubic_abs, 0, 1),
    "double_well": (_double_well, 1, 2),
    "pseudo_huber": (_pseudo_huber, 0, 0),
    "gauss_well": (_gauss_well, 1, 1),
}


def catalog_names() -> list[str]:
    return sorted(_CATALOG)


def builtin(name: str, params: Sequence[float] = ()) -> PotentialSpec:
    """Build a catalog potential.

    ============  ======================  =============================
    name          params                  potential
    ============  ======================  =============================
    zero          --                      0
    quadratic     [a=1]                   a x^2 / 2
    power         e, [R=1]                |x|^(2+e), K = (2+e)(1+e) R^e
    cubic_abs     [R=1]                   |x|^3, K = 6 R
    double_well   eps, [R=1]              x^4 - eps x^2
    pseudo_huber  --                      sqrt(1 + x^2)
    gauss_well    k                       -k exp(-x^2)
    ============  ======================  =============================
    """
    try:
        factory, lo, hi = _CATALOG[name]
    except KeyError:
        raise ValueError(f"unknown potential {name!r}; known: {', '.join(catalog_names())}") from None
    params = [float(p) for p in params]
    if not lo <= len(params) <= hi:
        raise ValueError(f"{name} takes between {lo} and {hi} parameters, got {len(params)}")
    if not all(np.isfinite(params)):
        raise ValueError(f"non-finite parameter for {name}: {params}")
    return factory(*params)


# --------------------------------------------------------------------------
# numerical scans


def _lattice(domain: tuple[float, float], step: float | None = None, samples: int | None = None) -> Array:
    lo, hi = float(domain[0]), float(domain[1])
    if not hi > lo:
        raise ValueError(f"empty domain [{lo}, {hi}]")
    if samples is not None:
        return np.linspace(lo, hi, int(samples))
    n = int(round((hi - lo) / step)) + 1
    return np.linspace(lo, hi, n)


def derivative_mismatch(P: PotentialSpec, xs: Array, h: float = 1e-5) -> tuple[float, float]:
    """Worst relative mismatch of (grad, hess) against central differences.

    The relative error is measured against ``max(1, |reference|)`` so that
    points where a derivative vanishes do not blow up the ratio.
    """
    xs = np.asarray(xs, dtype=float)
    fd_grad = (P.value(xs + h) - P.value(xs - h)) / (2 * h)
    fd_hess = (P.grad(xs + h) - P.grad(xs - h)) / (2 * h)
    g, H = P.grad(xs), P.hess(xs)
    eg = np.max(np.abs(fd_grad - g) / np.maximum(1.0, np.abs(g)))
    eh = np.max(np.abs(fd_hess - H) / np.maximum(1.0, np.abs(H)))
    return float(eg), float(eh)


def check_metadata(P: PotentialSpec, domain=(-20.0, 20.0), step: float = 0.01) -> dict[str, bool]:
    """Scan the lattice and report which metadata claims hold."""
    xs = _lattice(domain, step)
    H = P.hess(xs)
    tol = 1e-12 * np.maximum(1.0, np.abs(H))
    out = {"alpha": bool(np.all(H >= P.alpha - tol))}
    if P.k_outside is not None:
        K, R = P.k_outside
        far = np.abs(xs) >= R
        out["k_outside"] = bool(np.all(H[far] >= K - tol[far]))
    if P.sup_abs is not None:
        out["sup_abs"] = bool(np.all(np.abs(P.value(xs)) <= P.sup_abs * (1 + 1e-12)))
    if P.is_even:
        out["even"] = bool(
            np.allclose(P.value(-xs), P.value(xs), rtol=1e-12, atol=1e-12)
            and np.allclose(P.grad(-xs), -P.grad(xs), rtol=1e-12, atol=1e-12)
        )
    return out


def check_doubling(P: PotentialSpec, domain=(-5.0, 5.0), samples: int = 201) -> tuple[bool, float]:
    """Smallest C with ``P(x+y) <= C (1 + P(x) + P(y))`` over a sampled lattice.

    If ``1 + P(x) + P(y)`` is nonpositive somewhere the inequality is
    meaningless; ``holds`` is then False and the constant is reported for
    the potential shifted to have minimum zero.
    """
    if samples < 2:
        raise ValueError("need at least two samples")
    xs = _lattice(domain, samples=samples)
    v = P.value(xs)
    holds = True
    shift = 0.0
    if 1.0 + 2.0 * v.min() <= 0:
        holds = False
        shift = -v.min()
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    lhs = P.value(X + Y) + shift
    den = 1.0 + (v + shift)[:, None] + (v + shift)[None, :]
    c = float(max(0.0, np.max(lhs / den)))
    return holds, c


def _pair_scan(xs: Array, chunk: int, fn) -> bool:
    # fn(x_col, y_row) -> boolean matrix of "inequality holds"
    for start in range(0, xs.size, chunk):
        xc = xs[start:start + chunk, None]
        if not np.all(fn(xc, xs[None, :])):
            return False
    return True


def check_uniform_convexity_outside(
    P: PotentialSpec, K: float, R: float, domain=(-10.0, 10.0), step: float = 0.01
) -> bool:
    """Check ``(P'(x) - P'(y))(x - y) >= (K/3)(x - y)^2`` when |x| or |y| >= 2R."""
    if K <= 0 or R < 0:
        raise ValueError("need K > 0 and R >= 0")
    xs = _lattice(domain, step)
    g = P.grad(xs)

    def ok(xc, yr):
        gx = P.grad(xc)
        gy = g[None, :]
        d = xc - yr
        lhs = (gx - gy) * d
        rhs = (K / 3.0) * d**2
        relevant = (np.abs(xc) >= 2 * R) | (np.abs(yr) >= 2 * R)
        tol = 1e-12 * np.maximum(1.0, np.abs(rhs))
        return ~relevant | (lhs >= rhs - tol)

    return _pair_scan(xs, 256, ok)


def check_degenerate_convexity(
    P: PotentialSpec,
    prof: DegeneracyProfile,
    eps_list: Sequence[float],
    domain=(-10.0, 10.0),
    step: float = 0.01,
) -> bool:
    """Check ``(P'(y) - P'(x))(y - x) >= c eps^p ((y - x)^2 - eps^2)`` on all pairs."""
    eps_arr = np.asarray(list(eps_list), dtype=float)
    if eps_arr.size == 0 or np.any(eps_arr <= 0):
        raise ValueError("eps_list must be nonempty with positive entries")
    xs = _lattice(domain, step)
    g = P.grad(xs)

    for eps in eps_arr:
        coef = prof.c_deg * eps**prof.p

        def ok(xc, yr, coef=coef, eps=eps):
            d = yr - xc
            lhs = (g[None, :] - P.grad(xc)) * d
            rhs = coef * (d**2 - eps**2)
            tol = 1e-12 * np.maximum(1.0, np.abs(rhs))
            return lhs >= rhs - tol

        if not _pair_scan(xs, 256, ok):
            return False
    return True
