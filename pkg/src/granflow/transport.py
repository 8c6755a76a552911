"""Exact one-dimensional optimal transport and the Wasserstein dissipation functional.

In one dimension the optimal map between two measures is the monotone
rearrangement ``T = Q_nu o F_mu`` and ``W_2^2 = int_0^1 |Q_mu - Q_nu|^2 du``.
All distances here integrate the piecewise-linear quantile functions exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .measures import (
    GridMeasure,
    ParticleEnsemble,
    QuantilePieces,
    _quantile,
    _quantile_survival,
    interaction_matrix,
    quantile_pieces,
    quantile_pieces_particles,
    survival_edges,
)
from .potentials import PotentialSpec

Array = np.ndarray

SLOPE_FLOOR = 1e-12
# cells carrying less mass than this are ignored in dissipation integrals
MASS_FLOOR = 1e-16


@dataclass
class TransportMap:
    """Monotone map ``t_of`` with derivative ``dt_of``."""

    t_of: Callable[[Array], Array]
    dt_of: Callable[[Array], Array]
    description: str = "map"
    clamped_cells: int = 0
    params: dict = field(default_factory=dict)

    def __call__(self, x):
        return self.t_of(np.asarray(x, dtype=float))


def identity_map() -> TransportMap:
    return TransportMap(lambda x: np.array(x, dtype=float), lambda x: np.ones_like(x, dtype=float), "identity")


def translation_map(shift: float) -> TransportMap:
    return TransportMap(
        lambda x: np.asarray(x, dtype=float) + shift,
        lambda x: np.ones_like(np.asarray(x, dtype=float)),
        f"translation({shift:.6g})",
        params={"shift": shift},
    )


def dilation_map(scale: float, center: float = 0.0, shift: float = 0.0) -> TransportMap:
    if not scale > 0:
        raise ValueError("dilation scale must be positive")
    return TransportMap(
        lambda x: center + shift + scale * (np.asarray(x, dtype=float) - center),
        lambda x: np.full_like(np.asarray(x, dtype=float), scale),
        f"dilation({scale:.6g})",
        params={"scale": scale, "center": center, "shift": shift},
    )


def piecewise_linear_map(knots: Array, slopes: Array, shift: float = 0.0) -> TransportMap:
    """Increasing map with slope ``slopes[k]`` between consecutive knots.

    ``slopes`` has ``len(knots) + 1`` entries; the first and last apply
    beyond the outer knots.  The map fixes ``knots[0]`` before ``shift``.
    """
    knots = np.asarray(knots, dtype=float)
    slopes = np.asarray(slopes, dtype=float)
    if slopes.size != knots.size + 1:
        raise ValueError("need one more slope than knots")
    if np.any(slopes <= 0):
        raise ValueError("slopes must be positive")
    vals = knots[0] + np.concatenate(([0.0], np.cumsum(slopes[1:-1] * np.diff(knots))))

    def t_of(x):
        x = np.asarray(x, dtype=float)
        k = np.searchsorted(knots, x, side="right")
        base_k = np.clip(k - 1, 0, knots.size - 1)
        return shift + vals[base_k] + slopes[k] * (x - knots[base_k])

    def dt_of(x):
        x = np.asarray(x, dtype=float)
        return slopes[np.searchsorted(knots, x, side="right")]

    return TransportMap(t_of, dt_of, f"piecewise({knots.size} knots)", params={"shift": shift})


def shifted(T: TransportMap, delta: float) -> TransportMap:
    """``T + delta``."""
    total = T.params.get("shift", 0.0) + delta
    return TransportMap(
        lambda x: T.t_of(x) + delta, T.dt_of, T.description, T.clamped_cells, {**T.params, "shift": total}
    )


# --------------------------------------------------------------------------
# distances


def _w2_sq_pieces(P: QuantilePieces, Q: QuantilePieces) -> float:
    u = np.union1d(P.c, Q.c)
    u = u[(u >= 0.0) & (u <= 1.0)]
    ua, ub = u[:-1], u[1:]
    h = ub - ua
    keep = h > 0
    ua, ub, h = ua[keep], ub[keep], h[keep]
    mid = 0.5 * (ua + ub)
    kp, kq = P.locate(mid), Q.locate(mid)
    A = P.evaluate(ua, kp) - Q.evaluate(ua, kq)
    B = P.evaluate(ub, kp) - Q.evaluate(ub, kq)
    return float(np.sum(h * (A * A + A * B + B * B)) / 3.0)


def _require_normalized(*mus: GridMeasure) -> None:
    for mu in mus:
        if not mu.is_normalized():
            raise ValueError(f"measure is not normalized (mass={mu.mass!r})")


def wasserstein2_sq(mu: GridMeasure, nu: GridMeasure) -> float:
    _require_normalized(mu, nu)
    return _w2_sq_pieces(quantile_pieces(mu), quantile_pieces(nu))


def wasserstein2(mu: GridMeasure, nu: GridMeasure) -> float:
    """W_2 between two grid measures (exact for piecewise-constant densities)."""
    return math.sqrt(max(wasserstein2_sq(mu, nu), 0.0))


def wasserstein2_particles(a: ParticleEnsemble, b: ParticleEnsemble) -> float:
    """Sorted matching is the optimal coupling for equal-size ensembles."""
    if a.n != b.n:
        raise ValueError(f"ensembles have different sizes ({a.n} vs {b.n})")
    d = np.sort(a.positions) - np.sort(b.positions)
    return float(np.sqrt(np.mean(d * d)))


def wasserstein2_empirical(p: ParticleEnsemble, mu: GridMeasure) -> float:
    """W_2 between an empirical measure and a grid measure."""
    _require_normalized(mu)
    return math.sqrt(max(_w2_sq_pieces(quantile_pieces_particles(p), quantile_pieces(mu)), 0.0))


# --------------------------------------------------------------------------
# Brenier map


def _support(mu: GridMeasure) -> tuple[int, int]:
    pos = np.flatnonzero(mu.density > 0)
    if pos.size == 0:
        raise ValueError("measure has empty support")
    return int(pos[0]), int(pos[-1])


def _interp_density(nu: GridMeasure, y: Array) -> Array:
    # piecewise-linear between cell centers, constant on the outer half cells,
    # zero outside the domain
    y = np.asarray(y, dtype=float)
    out = np.interp(y, nu.centers, nu.density)
    return np.where((y < nu.lo) | (y > nu.hi), 0.0, out)


def brenier_map(mu: GridMeasure, nu: GridMeasure) -> TransportMap:
    """Monotone rearrangement pushing ``mu`` onto ``nu``.

    The derivative uses ``T'(x) = mu(x) / nu(T(x))`` with densities
    interpolated linearly between cell centers; values below ``SLOPE_FLOOR``
    are clamped and counted in ``clamped_cells``.
    """
    _require_normalized(mu, nu)
    i0, i1 = _support(mu)
    if np.any(mu.density[i0:i1 + 1] <= 0):
        raise ValueError("source measure has disconnected support")

    edges, cdf, sf = mu.edges, mu.cdf_edges() / mu.mass, survival_edges(mu)

    def t_of(x):
        # the upper half goes through survival functions so that tail levels
        # like 1 - 1e-17 do not round to 1
        x = np.asarray(x, dtype=float)
        u = np.interp(x, edges, cdf)
        return np.where(u <= 0.5, _quantile(nu, np.minimum(u, 0.5)),
                        _quantile_survival(nu, np.interp(x, edges, sf)))

    def raw_slope(x):
        x = np.asarray(x, dtype=float)
        num = _interp_density(mu, x)
        den = _interp_density(nu, t_of(x))
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(den > 0, num / np.where(den > 0, den, 1.0), np.inf)

    def dt_of(x):
        return np.clip(raw_slope(x), SLOPE_FLOOR, None)

    xs = mu.centers[i0:i1 + 1]
    heavy = mu.masses[i0:i1 + 1] > MASS_FLOOR
    clamped = int(np.count_nonzero(raw_slope(xs)[heavy] < SLOPE_FLOOR))
    return TransportMap(t_of, dt_of, "brenier", clamped_cells=clamped)


def pushforward(mu: GridMeasure, T: TransportMap) -> GridMeasure:
    """Re-grid ``T # mu`` onto the grid of ``mu`` (via the pushed CDF)."""
    e = mu.edges
    te = T.t_of(e)
    # F_nu(y) = F_mu(T^{-1} y); T is increasing so invert by interpolation
    inv = np.interp(e, te, e, left=-np.inf, right=np.inf)
    cdf = np.interp(inv, e, mu.cdf_edges(), left=0.0, right=mu.mass)
    masses = np.diff(cdf)
    masses[0] += cdf[0]
    masses[-1] += mu.mass - cdf[-1]
    return GridMeasure.from_cell_masses(mu.lo, mu.hi, mu.m, masses)


# --------------------------------------------------------------------------
# dissipation functional


@dataclass
class _Support:
    x: Array
    w: Array
    idx: Array


def _heavy_cells(mu: GridMeasure) -> _Support:
    w = mu.masses
    idx = np.flatnonzero(w > MASS_FLOOR)
    return _Support(mu.centers[idx], w[idx], idx)


def displacement_sq(mu: GridMeasure, T: TransportMap) -> float:
    """``int |T(x) - x|^2 dmu``, which equals ``W_2^2(T # mu, mu)`` for monotone T."""
    s = _heavy_cells(mu)
    d = T.t_of(s.x) - s.x
    return float(np.dot(d * d, s.w))


def dissipation_terms(mu: GridMeasure, T: TransportMap, V: PotentialSpec, W: PotentialSpec) -> dict[str, float]:
    """The three nonnegative-for-convex pieces of J: diffusion, confinement, interaction."""
    s = _heavy_cells(mu)
    tx = T.t_of(s.x)
    slope = T.dt_of(s.x)
    if np.any(~(slope > 0)):
        raise ValueError("transport map is not strictly increasing on the support")
    diff = slope + 1.0 / slope - 2.0
    d = tx - s.x
    conf = (V.grad(tx) - V.grad(s.x)) * d
    out = {
        "diffusion": float(np.dot(diff, s.w)),
        "confinement": float(np.dot(conf, s.w)),
        "interaction": 0.0,
    }
    if not W.is_zero:
        dT = tx[:, None] - tx[None, :]
        dX = s.x[:, None] - s.x[None, :]
        gx = interaction_matrix(W, mu, "grad")[np.ix_(s.idx, s.idx)]
        integrand = (W.grad(dT) - gx) * (dT - dX)
        out["interaction"] = 0.5 * float(s.w @ integrand @ s.w)
    return out


def dissipation_j(mu: GridMeasure, T: TransportMap, V: PotentialSpec, W: PotentialSpec) -> float:
    """J_{V,W}(T # mu | mu) in one dimension, by midpoint quadrature on ``mu``'s cells."""
    return sum(dissipation_terms(mu, T, V, W).values())


# --------------------------------------------------------------------------
# WJ-inequality machinery


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def wj_constant(K: float, R: float, M: float, n: int = 1) -> float:
    """Explicit WJ constant for a measure ``e^{-U}`` against an interaction
    with ``W'' >= K`` outside the ball of radius ``R``::

        C = 2 / (3/K + 4 c_n R^(2+n) e^M)
    """
    if not (K > 0 and R > 0):
        raise ValueError("need K > 0 and R > 0")
    if n < 1:
        raise ValueError("dimension must be at least 1")
    return 2.0 / (3.0 / K + 4.0 * unit_ball_volume(n) * R ** (2 + n) * math.exp(M))


def hyp_u_constant(mu: GridMeasure, R: float) -> float:
    """Smallest M with ``U(z) - U(x) - U(y) <= M`` for ``|x - y| <= 2R``, z in [x, y].

    ``U = -log(density)``; the density is used as given (no normalization).
    The scan runs over cell centers of the support.
    """
    if not R > 0:
        raise ValueError("R must be positive")
    i0, i1 = _support(mu)
    rho = mu.density[i0:i1 + 1]
    if np.any(rho <= 0):
        raise ValueError("density vanishes inside the support; U is infinite there")
    U = -np.log(rho)
    n = U.size
    reach = int(math.floor(2 * R / mu.dx + 1e-9))
    best = -np.inf
    runmax = U.copy()
    for k in range(0, min(reach, n - 1) + 1):
        if k > 0:
            runmax = np.maximum(runmax[:-1], U[k:])
        vals = runmax - U[: n - k] - U[k:]
        best = max(best, float(vals.max()))
    return best


class ProbeRow(NamedTuple):
    probe_id: int
    kind: str
    w2_sq: float
    j: float
    ratio: float


class ProbeResult(NamedTuple):
    min_ratio: float
    argmin: TransportMap
    rows: list


def probe_maps(
    mu: GridMeasure,
    n_probes: int,
    seed: int,
    preserve_mean: bool,
    n_knots: int = 8,
) -> list[tuple[str, TransportMap]]:
    """Random monotone maps: translations, dilations and piecewise-linear maps.

    Amplitudes are drawn log-uniformly so that both near-identity and large
    deformations are represented.  With ``preserve_mean`` each map is shifted
    so that ``int T dmu = int x dmu`` (translations are then dropped).
    """
    if n_probes < 1:
        raise ValueError("n_probes must be at least 1")
    rng = np.random.default_rng(seed)
    s = _heavy_cells(mu)
    w = s.w / s.w.sum()
    mean = float(np.dot(s.x, w))
    # knots cover the bulk of the support
    cdf = np.cumsum(w)
    lo_x = s.x[min(np.searchsorted(cdf, 1e-6), s.x.size - 1)]
    hi_x = s.x[min(np.searchsorted(cdf, 1 - 1e-6), s.x.size - 1)]
    std = math.sqrt(max(float(np.dot((s.x - mean) ** 2, w)), 1e-300))
    kinds = ["dilation", "piecewise"] if preserve_mean else ["translation", "dilation", "piecewise"]

    maps = []
    for i in range(n_probes):
        kind = kinds[i % len(kinds)]
        amp = math.exp(rng.uniform(math.log(1e-2), math.log(1.5)))
        if kind == "translation":
            T = translation_map(amp * std * rng.choice([-1.0, 1.0]))
        elif kind == "dilation":
            T = dilation_map(math.exp(amp * rng.choice([-1.0, 1.0])), center=mean)
        else:
            knots = np.sort(rng.uniform(lo_x, hi_x, n_knots))
            slopes = np.maximum(np.exp(amp * rng.standard_normal(n_knots + 1)), 1e-6)
            T = piecewise_linear_map(knots, slopes)
            if not preserve_mean:
                T = shifted(T, amp * std * rng.standard_normal())
        if preserve_mean:
            T = shifted(T, mean - float(np.dot(T.t_of(s.x), w)))
        maps.append((kind, T))
    return maps


def wj_probe(
    mu: GridMeasure,
    V: PotentialSpec,
    W: PotentialSpec,
    n_probes: int,
    seed: int,
    preserve_mean: bool,
    n_knots: int = 8,
) -> ProbeResult:
    """Minimum of ``J / W_2^2`` over a seeded family of monotone probe maps."""
    rows = []
    best, best_map = math.inf, None
    for i, (kind, T) in enumerate(probe_maps(mu, n_probes, seed, preserve_mean, n_knots)):
        w2 = displacement_sq(mu, T)
        if not w2 > 1e-14:
            continue
        j = dissipation_j(mu, T, V, W)
        ratio = j / w2
        rows.append(ProbeRow(i, kind, w2, j, ratio))
        if ratio < best:
            best, best_map = ratio, T
    if best_map is None:
        raise ValueError("every probe produced a zero displacement")
    return ProbeResult(best, best_map, rows)


def translation_probe(mu: GridMeasure, V: PotentialSpec, m_values: Sequence[float]) -> list[float]:
    """Ratios ``(1/M) int (V'(x+M) - V'(x)) dmu`` for translations by ``M``."""
    ms = [float(M) for M in m_values]
    if any(not M > 0 for M in ms):
        raise ValueError("translation sizes must be positive")
    x, w = mu.centers, mu.masses
    base = V.grad(x)
    return [float(np.dot(V.grad(x + M) - base, w)) / M for M in ms]
