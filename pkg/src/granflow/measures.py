"""Probability measures on a truncated uniform 1-D grid and particle ensembles."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.special import ndtr

from .potentials import PotentialSpec

Array = np.ndarray


@dataclass(eq=False)
class GridMeasure:
    """Cell-averaged density on ``m`` uniform cells covering ``[lo, hi]``.

    The density is piecewise constant, so the CDF is piecewise linear and
    exact on cell edges.  Densities are not forced to unit mass on
    construction; call :meth:`normalize`.
    """

    lo: float
    hi: float
    m: int
    density: Array

    def __post_init__(self):
        self.lo = float(self.lo)
        self.hi = float(self.hi)
        self.m = int(self.m)
        self.density = np.asarray(self.density, dtype=float)
        if not self.hi > self.lo:
            raise ValueError(f"empty domain [{self.lo}, {self.hi}]")
        if self.m < 1 or self.density.shape != (self.m,):
            raise ValueError(f"density must have shape ({self.m},), got {self.density.shape}")
        if not np.all(np.isfinite(self.density)):
            raise ValueError("density contains NaN or Inf")
        if np.any(self.density < 0):
            raise ValueError("density must be nonnegative")

    @property
    def dx(self) -> float:
        return (self.hi - self.lo) / self.m

    @property
    def centers(self) -> Array:
        return self.lo + (np.arange(self.m) + 0.5) * self.dx

    @property
    def edges(self) -> Array:
        return np.linspace(self.lo, self.hi, self.m + 1)

    @property
    def grid(self) -> tuple[float, float, int]:
        return (self.lo, self.hi, self.m)

    @property
    def masses(self) -> Array:
        return self.density * self.dx

    @property
    def mass(self) -> float:
        return float(np.sum(self.density) * self.dx)

    def cdf_edges(self) -> Array:
        """CDF at the ``m + 1`` cell edges (unnormalized if the mass is not 1)."""
        return np.concatenate(([0.0], np.cumsum(self.masses)))

    def cdf(self, x) -> Array:
        return np.interp(x, self.edges, self.cdf_edges())

    def normalize(self) -> "GridMeasure":
        total = self.mass
        if not total > 0:
            raise ValueError("cannot normalize a measure with zero mass")
        return GridMeasure(self.lo, self.hi, self.m, self.density / total)

    def with_density(self, density: Array) -> "GridMeasure":
        return GridMeasure(self.lo, self.hi, self.m, density)

    def same_grid(self, other: "GridMeasure") -> bool:
        return self.m == other.m and np.isclose(self.lo, other.lo) and np.isclose(self.hi, other.hi)

    def is_normalized(self, tol: float = 1e-9) -> bool:
        return abs(self.mass - 1.0) < tol

    # constructors ---------------------------------------------------------

    @classmethod
    def from_cell_masses(cls, lo, hi, m, masses) -> "GridMeasure":
        dx = (hi - lo) / m
        masses = np.clip(np.asarray(masses, dtype=float), 0.0, None)
        return cls(lo, hi, m, masses / dx).normalize()

    @classmethod
    def from_cdf(cls, cdf: Callable[[Array], Array], lo, hi, m) -> "GridMeasure":
        e = np.linspace(lo, hi, m + 1)
        return cls.from_cell_masses(lo, hi, m, np.diff(cdf(e)))

    @classmethod
    def from_function(cls, f: Callable[[Array], Array], lo, hi, m) -> "GridMeasure":
        """Sample ``f`` at cell centers and normalize."""
        x = lo + (np.arange(m) + 0.5) * (hi - lo) / m
        return cls(lo, hi, m, np.asarray(f(x), dtype=float)).normalize()

    @classmethod
    def gaussian(cls, mean, std, lo=-12.0, hi=12.0, m=800) -> "GridMeasure":
        e = (np.linspace(lo, hi, m + 1) - mean) / std
        # take differences on the side of the mean where the tail is small
        left = np.diff(ndtr(e))
        right = -np.diff(ndtr(-e))
        masses = np.where(e[1:] <= 0, left, right)
        return cls.from_cell_masses(lo, hi, m, masses)

    @classmethod
    def uniform(cls, a, b, lo=-12.0, hi=12.0, m=800) -> "GridMeasure":
        if not b > a:
            raise ValueError("uniform needs a < b")
        return cls.from_cdf(lambda x: np.clip((x - a) / (b - a), 0.0, 1.0), lo, hi, m)

    @classmethod
    def mixture(cls, parts: list[tuple[float, "GridMeasure"]]) -> "GridMeasure":
        ref = parts[0][1]
        dens = sum(w * mu.density for w, mu in parts)
        return ref.with_density(dens).normalize()


@dataclass(eq=False)
class ParticleEnsemble:
    positions: Array
    seed: int = 0
    time: float = 0.0

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).ravel()
        if self.positions.size < 1:
            raise ValueError("ensemble needs at least one particle")
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("particle positions must be finite")

    @property
    def n(self) -> int:
        return self.positions.size


def moments(mu: GridMeasure) -> tuple[float, float]:
    """Midpoint-rule mean and raw second moment."""
    x, w = mu.centers, mu.masses
    return float(np.dot(x, w)), float(np.dot(x * x, w))


def _quantile(mu: GridMeasure, u: Array) -> Array:
    # generalized inverse of the piecewise-linear CDF; u in [0, 1]
    c = mu.cdf_edges()
    c = c / c[-1]
    u = np.asarray(u, dtype=float)
    k = np.searchsorted(c, u, side="left")
    k = np.clip(k, 1, mu.m)
    lo_c, hi_c = c[k - 1], c[k]
    width = hi_c - lo_c
    frac = np.divide(u - lo_c, width, out=np.ones_like(u), where=width > 0)
    return mu.lo + (k - 1 + np.clip(frac, 0.0, 1.0)) * mu.dx


def _quantile_survival(mu: GridMeasure, s: Array) -> Array:
    # quantile at upper-tail level s = 1 - u, accurate when s is tiny
    r = np.concatenate(([0.0], np.cumsum(mu.masses[::-1])))
    r = r / r[-1]
    s = np.asarray(s, dtype=float)
    k = np.clip(np.searchsorted(r, s, side="left"), 1, mu.m)
    width = r[k] - r[k - 1]
    frac = np.divide(s - r[k - 1], width, out=np.ones_like(s), where=width > 0)
    return mu.hi - (k - 1 + np.clip(frac, 0.0, 1.0)) * mu.dx


def survival_edges(mu: GridMeasure) -> Array:
    """Normalized ``1 - F`` at the cell edges, summed from the right (no cancellation)."""
    r = np.concatenate((np.cumsum(mu.masses[::-1])[::-1], [0.0]))
    return r / r[0]


def quantile(mu: GridMeasure, u) -> Array | float:
    """Quantile function (inverse CDF), nondecreasing in ``u``."""
    arr = np.asarray(u, dtype=float)
    if np.any(~(arr > 0) | ~(arr < 1)):
        raise ValueError("quantile levels must lie in the open interval (0, 1)")
    q = _quantile(mu, arr)
    return float(q) if q.ndim == 0 else q


@dataclass(frozen=True)
class QuantilePieces:
    """Piecewise-linear quantile function.

    On ``(c[k], c[k+1])`` the quantile runs linearly from ``a[k]`` to ``b[k]``.
    Grid measures give continuous pieces; empirical measures give constant ones.
    """

    c: Array
    a: Array
    b: Array

    def evaluate(self, u: Array, piece: Array) -> Array:
        w = self.c[piece + 1] - self.c[piece]
        s = np.divide(u - self.c[piece], w, out=np.zeros_like(u), where=w > 0)
        s = np.clip(s, 0.0, 1.0)
        return self.a[piece] + (self.b[piece] - self.a[piece]) * s

    def locate(self, u: Array) -> Array:
        # index of the piece whose open interval contains u
        k = np.searchsorted(self.c, u, side="left") - 1
        return np.clip(k, 0, self.a.size - 1)


def quantile_pieces(mu: GridMeasure) -> QuantilePieces:
    c = mu.cdf_edges()
    c = c / c[-1]
    e = mu.edges
    return QuantilePieces(c, e[:-1], e[1:])


def quantile_pieces_particles(p: ParticleEnsemble) -> QuantilePieces:
    x = np.sort(p.positions)
    return QuantilePieces(np.arange(x.size + 1) / x.size, x, x)


@lru_cache(maxsize=32)
def _kernel_matrix(fn, lo: float, hi: float, m: int) -> Array:
    x = lo + (np.arange(m) + 0.5) * (hi - lo) / m
    K = fn(x[:, None] - x[None, :])
    K.setflags(write=False)
    return K


def interaction_matrix(W: PotentialSpec, mu: GridMeasure, kind: str = "value") -> Array:
    """``K[i, j] = W(x_i - x_j)`` (or ``W'``) on the cell centers of ``mu``."""
    fn = {"value": W.value, "grad": W.grad}[kind]
    return _kernel_matrix(fn, mu.lo, mu.hi, mu.m)


def convolve_w(mu: GridMeasure, W: PotentialSpec) -> Array:
    """``(W * mu)(x_i)`` by direct summation."""
    if W.is_zero:
        return np.zeros(mu.m)
    return interaction_matrix(W, mu, "value") @ mu.masses


def convolve_grad_w(mu: GridMeasure, W: PotentialSpec) -> Array:
    """``(W' * mu)(x_i) = sum_j W'(x_i - x_j) mu_j dx``."""
    if not W.is_even:
        raise ValueError("interaction potential must be even")
    if W.is_zero:
        return np.zeros(mu.m)
    return interaction_matrix(W, mu, "grad") @ mu.masses


def entropy(mu: GridMeasure) -> float:
    rho = mu.density
    pos = rho > 0
    return float(np.sum(rho[pos] * np.log(rho[pos])) * mu.dx)


def free_energy(mu: GridMeasure, V: PotentialSpec, W: PotentialSpec) -> float:
    """Entropy + confinement energy + half the interaction energy."""
    w = mu.masses
    e = entropy(mu)
    e += float(np.dot(V.value(mu.centers), w))
    if not W.is_zero:
        e += 0.5 * float(np.dot(convolve_w(mu, W), w))
    return e


def particles_to_grid(p: ParticleEnsemble, lo: float, hi: float, m: int) -> GridMeasure:
    """Normalized histogram of the particles lying inside ``[lo, hi]``."""
    if m < 2:
        raise ValueError("need at least two cells")
    inside = (p.positions >= lo) & (p.positions <= hi)
    if not np.any(inside):
        raise ValueError("no particle lies inside the grid domain")
    counts, _ = np.histogram(p.positions[inside], bins=m, range=(lo, hi))
    return GridMeasure.from_cell_masses(lo, hi, m, counts.astype(float))


def sample_from_grid(mu: GridMeasure, n: int, seed: int) -> ParticleEnsemble:
    """Inverse-CDF sampling; deterministic in ``seed``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    return ParticleEnsemble(_quantile(mu, rng.random(n)), seed=seed, time=0.0)
