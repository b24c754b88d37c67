"""Bump profiles, the Whitney partition of unity, embeddings and sizes.

Conventions: the forward transform is ``f^(xi) = int f(x) exp(-2 pi i x xi) dx``.
On an alpha grid with spacing ``h`` and ``n`` points this is ``h * fft(f)``
at the frequencies ``fftfreq(n, h)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import CubicHermiteSpline
from scipy.spatial import cKDTree

from .geometry import (BASIS, ConstantPack, GeometryError, PlaneGrid, SingularCurve,
                       coordinate, cone_membership)

# plateau and support radii of the smoothed indicator, as printed
PLATEAU = 0.1
SUPPORT = 0.2
# exact radii from the construction 1_{B(0.15)} * (width 0.01 mollifier)
_INNER, _OUTER = 0.14, 0.16


class ConfigurationError(ValueError):
    """A grid or resolution cannot represent the requested objects."""


# ---------------------------------------------------------------------------
# the one dimensional profiles

def _raw_eta(x):
    x = np.asarray(x, float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1
    out[inside] = np.exp(-1.0 / (1.0 - x[inside] ** 2))
    return out


def _eta_mass(n: int = 20001) -> float:
    # the integrand is flat at +-1, so the trapezoid rule converges very fast
    x = np.linspace(-1.0, 1.0, n)
    return float(trapezoid(_raw_eta(x), x))


ETA_MASS = _eta_mass()


def eta(x):
    """L1-normalized ``exp(-1/(1-x^2))`` on ``(-1, 1)``."""
    return _raw_eta(x) / ETA_MASS


def _eta_cdf_table(panels: int = 4096):
    nodes, weights = np.polynomial.legendre.leggauss(10)
    edges = np.linspace(-1.0, 1.0, panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * np.diff(edges)
    pts = mid[:, None] + half[:, None] * nodes[None, :]
    mass = (eta(pts) * weights[None, :]).sum(axis=1) * half
    cdf = np.concatenate([[0.0], np.cumsum(mass)])
    cdf /= cdf[-1]
    return CubicHermiteSpline(edges, cdf, eta(edges))


_CDF = _eta_cdf_table()


def eta_cdf(x):
    x = np.asarray(x, float)
    return np.where(x <= -1, 0.0, np.where(x >= 1, 1.0, _CDF(np.clip(x, -1, 1))))


def eta_tilde(r):
    """``1_{B(3/20)} * D_{1/100} eta`` evaluated at ``|r|``.

    Equals 1 for ``|r| <= 0.14`` and 0 for ``|r| >= 0.16``.
    """
    return 1.0 - eta_cdf(100.0 * (np.abs(np.asarray(r, float)) - 0.15))


def big_phi(y):
    """The window ``Phi(y) = eta_tilde(|y|)`` on V (plane coordinates)."""
    return eta_tilde(np.linalg.norm(np.asarray(y, float), axis=-1))


@dataclass(frozen=True)
class BumpProfile:
    """Wave packet profile at frequency scale ``eps``.

    ``phi_hat(xi) = eta_tilde(xi / (2 eps))`` and ``chi(y) = eta_tilde(|y|/eps)``.
    ``resolution`` is the number of frequency samples used to invert
    ``phi_hat``.
    """

    eps: float
    resolution: int = 2048

    def __post_init__(self):
        if not self.eps > 0:
            raise ConfigurationError("eps must be positive")
        if 0.4 * self.eps / self._dxi < 8:
            raise ConfigurationError("resolution leaves fewer than 8 samples across the plateau")

    @property
    def plateau_radius(self) -> float:
        return 0.2 * self.eps

    @property
    def support_radius(self) -> float:
        return 0.4 * self.eps

    @property
    def _dxi(self) -> float:
        return 2 * _OUTER * 2 * self.eps / self.resolution

    @cached_property
    def _freqs(self):
        r = 2 * _OUTER * self.eps
        xi = np.linspace(-r, r, self.resolution + 1)
        return xi, self.phi_hat(xi)

    def phi_hat(self, xi):
        return eta_tilde(np.asarray(xi, float) / (2 * self.eps))

    def chi(self, y):
        return eta_tilde(np.linalg.norm(np.asarray(y, float), axis=-1) / self.eps)

    @property
    def phi_range(self) -> float:
        """Half width of the interval on which ``phi`` is represented."""
        return 0.5 / self._dxi

    def phi(self, x, chunk: int = 4096):
        """Inverse transform of ``phi_hat`` (real and even)."""
        x = np.asarray(x, float)
        flat = np.abs(x.ravel())
        xi, w = self._freqs
        out = np.zeros(flat.shape)
        ok = np.nonzero(flat < self.phi_range)[0]
        for lo in range(0, len(ok), chunk):
            idx = ok[lo:lo + chunk]
            out[idx] = np.cos(2 * np.pi * np.outer(flat[idx], xi)) @ w * self._dxi
        return out.reshape(x.shape)

    @cached_property
    def _phi_profile(self):
        x = np.linspace(0.0, self.phi_range, 40001)
        return x, self.phi(x)

    @cached_property
    def phi_l1(self) -> float:
        x, v = self._phi_profile
        return float(2 * trapezoid(np.abs(v), x))

    @cached_property
    def phi_l2(self) -> float:
        xi, w = self._freqs
        return float(math.sqrt(np.sum(w**2) * self._dxi))

    def phi_extent(self, tol: float = 1e-6) -> float:
        """Smallest X with ``|phi(x)| <= tol * phi(0)`` for all ``|x| >= X``."""
        x, v = self._phi_profile
        big = np.nonzero(np.abs(v) > tol * abs(v[0]))[0]
        return float(x[min(big[-1] + 1, len(x) - 1)])


# ---------------------------------------------------------------------------
# grids and measures

@dataclass(frozen=True)
class AlphaGrid:
    """Uniform time grid ``x0 + h * arange(n)``."""

    n: int
    h: float = 1.0
    x0: float = 0.0

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.h * np.arange(self.n)

    @property
    def length(self) -> float:
        return self.n * self.h

    @property
    def freqs(self) -> np.ndarray:
        return np.fft.fftfreq(self.n, self.h)

    def header(self) -> dict:
        return {"n": self.n, "h": self.h, "x0": self.x0}


class GridMeasure:
    """Cells of a plane grid with the weights ``area / d(center)^2``.

    Cells with ``d(center)`` below one cell diameter are given weight 0,
    which also removes every cell meeting the curve.
    """

    def __init__(self, grid: PlaneGrid, curve: SingularCurve):
        self.grid = grid
        self.curve = curve
        self.points = grid.points
        self.dist, self.nearest = curve.distance(self.points)
        self.areas = grid.areas
        keep = self.dist >= grid.diameters
        self.weights = np.where(keep, self.areas / np.where(keep, self.dist, 1.0) ** 2, 0.0)
        self.active = keep

    def __len__(self):
        return len(self.points)

    def coord(self, j: int) -> np.ndarray:
        return coordinate(self.points, j)

    def nearest_coord(self, j: int) -> np.ndarray:
        return coordinate(self.nearest, j)


# ---------------------------------------------------------------------------
# partition of unity

class QuadratureNormalizer:
    """``X(x) = int chi_b(x) dmu(b)`` by a local quadrature around ``x``.

    ``chi_b(x) = chi((x - b) / d(b))`` is nonzero only for
    ``|x - b| < 0.16 eps d(x) / (1 - 0.16 eps)``; substituting
    ``b = x + d(x) z`` turns the integral into a fixed-size problem.
    """

    def __init__(self, curve: SingularCurve, bumps: BumpProfile, n: int = 48):
        self.curve = curve
        self.bumps = bumps
        a = _OUTER * bumps.eps
        if a >= 1:
            raise ConfigurationError("eps too large: windows would reach the curve")
        self.radius = a / (1 - a)
        z = (np.arange(n) + 0.5) / n * 2 * self.radius - self.radius
        zz = np.stack(np.meshgrid(z, z, indexing="ij"), axis=-1).reshape(-1, 2)
        self.nodes = zz[np.linalg.norm(zz, axis=1) < self.radius]
        self.cell = (2 * self.radius / n) ** 2

    def __call__(self, x, chunk: int = 256):
        x = np.atleast_2d(np.asarray(x, float))
        dx = self.curve.distance(x)[0]
        if np.any(dx <= 0):
            raise GeometryError("normalizer evaluated on the curve")
        out = np.empty(len(x))
        for lo in range(0, len(x), chunk):
            xs, ds = x[lo:lo + chunk], dx[lo:lo + chunk]
            b = xs[:, None, :] + ds[:, None, None] * self.nodes[None, :, :]
            db = self.curve.distance(b.reshape(-1, 2))[0].reshape(b.shape[:2])
            r = ds[:, None] * np.linalg.norm(self.nodes, axis=1)[None, :]
            with np.errstate(divide="ignore", invalid="ignore"):
                vals = np.where(db > 0, eta_tilde(r / (self.bumps.eps * db)) / db**2, 0.0)
            out[lo:lo + chunk] = vals.sum(axis=1) * self.cell * ds**2
        return out


class GridNormalizer:
    """``X(x) = sum_b mu_b chi_b(x)`` over the active cells of a measure.

    With this normalizer ``sum_b mu_b chi_b(x) / X(x) = 1`` holds exactly
    wherever ``X(x) > 0``.
    """

    def __init__(self, measure: GridMeasure, bumps: BumpProfile):
        self.measure = measure
        self.bumps = bumps
        idx = np.nonzero(measure.active)[0]
        self.idx = idx
        self.centers = measure.points[idx]
        self.d = measure.dist[idx]
        self.mu = measure.weights[idx]
        self.tree = cKDTree(self.centers)
        a = _OUTER * bumps.eps
        self._reach = a / (1 - a) if a < 1 else np.inf

    def contributions(self, x):
        """Sparse list of (point index, cell index, chi value) triples."""
        x = np.atleast_2d(np.asarray(x, float))
        dx = self.measure.curve.distance(x)[0]
        radius = np.where(np.isfinite(self._reach), dx * self._reach * (1 + 1e-9) + 1e-15,
                          np.max(np.linalg.norm(self.centers, axis=1)) + np.linalg.norm(x, axis=1))
        rows, cols = [], []
        for p, nb in enumerate(self.tree.query_ball_point(x, radius)):
            rows.extend([p] * len(nb))
            cols.extend(nb)
        rows = np.asarray(rows, dtype=int)
        cols = np.asarray(cols, dtype=int)
        if rows.size == 0:
            return rows, cols, np.zeros(0)
        r = np.linalg.norm(x[rows] - self.centers[cols], axis=1)
        vals = eta_tilde(r / (self.bumps.eps * self.d[cols]))
        keep = vals > 0
        return rows[keep], cols[keep], vals[keep]

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, float))
        rows, cols, vals = self.contributions(x)
        return np.bincount(rows, weights=vals * self.mu[cols], minlength=len(x))


def chi_window(x, beta, d_beta: float, bumps: BumpProfile):
    """``chi_beta(x) = chi((x - beta) / d(beta))``."""
    return bumps.chi((np.asarray(x, float) - np.asarray(beta, float)) / d_beta)


def partition_normalizer(x, curve: SingularCurve, bumps: BumpProfile, n: int = 48):
    """Convenience wrapper around :class:`QuadratureNormalizer`."""
    return QuadratureNormalizer(curve, bumps, n)(x)


# ---------------------------------------------------------------------------
# fields and the embedding

@dataclass
class Field:
    """Samples ``F(alpha, beta)``; rows follow the alpha grid, columns the cells."""

    values: np.ndarray
    alpha: AlphaGrid
    measure: GridMeasure
    j: int
    mask: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.values.shape != (self.alpha.n, len(self.measure)):
            raise ValueError(f"field shape {self.values.shape} does not match grids "
                             f"{(self.alpha.n, len(self.measure))}")
        if self.mask is not None and self.mask.shape != self.values.shape:
            raise ValueError("mask shape does not match field")

    @property
    def masked(self) -> np.ndarray:
        return self.values if self.mask is None else np.where(self.mask, self.values, 0)

    def with_mask(self, mask) -> "Field":
        return Field(self.values, self.alpha, self.measure, self.j, np.asarray(mask, bool), self.meta)

    @property
    def nu(self) -> np.ndarray:
        """Product weights ``h * mu`` as a row vector over cells."""
        return self.alpha.h * self.measure.weights


def embed(f, j: int, measure: GridMeasure, alpha: AlphaGrid, bumps: BumpProfile,
          extent_tol: float | None = None) -> Field:
    """Wave packet coefficients of ``f`` at every (alpha, cell) pair.

    Column ``b`` is the inverse FFT of ``f^(xi) phi_hat((xi - beta_j)/d(beta))``.
    When ``extent_tol`` is given, the alpha grid must hold the widest
    active packet (``phi_extent(extent_tol) / d_min``).
    """
    f = np.asarray(f)
    if f.shape != (alpha.n,):
        raise ValueError("f must be sampled on the alpha grid")
    d = measure.dist
    if extent_tol is not None and measure.active.any():
        need = 2 * bumps.phi_extent(extent_tol) / d[measure.active].min()
        if need > alpha.length:
            raise ConfigurationError(f"alpha grid of length {alpha.length:g} is shorter than "
                                     f"the widest packet ({need:g})")
    fh = np.fft.fft(f)
    xi = alpha.freqs
    bj = measure.coord(j)
    vals = np.zeros((alpha.n, len(measure)), dtype=complex)
    ok = np.nonzero(d > 0)[0]
    for lo in range(0, len(ok), 512):
        idx = ok[lo:lo + 512]
        win = bumps.phi_hat((xi[None, :] - bj[idx, None]) / d[idx, None])
        vals[:, idx] = np.fft.ifft(fh[None, :] * win, axis=1).T
    return Field(vals, alpha, measure, j)


def wave_packet(a: float, beta, j: int, curve: SingularCurve, bumps: BumpProfile,
                alpha: AlphaGrid, images: int = 2):
    """``T_a M_{-beta_j} D_{1/d} conj(phi)`` sampled on the alpha grid.

    The packet is periodized over ``2 images + 1`` copies of the grid
    length so that it pairs exactly with the FFT embedding.
    """
    d, _ = curve.distance(np.asarray(beta, float))
    if d <= 0:
        raise GeometryError("wave packet at a point of the curve")
    bj = float(coordinate(beta, j))
    x = alpha.x
    out = np.zeros(alpha.n, dtype=complex)
    for m in range(-images, images + 1):
        s = x - a + m * alpha.length
        out += np.exp(-2j * np.pi * bj * s) * d * bumps.phi(d * s)
    return out


def pairing(f, g, alpha: AlphaGrid) -> complex:
    """Bilinear pairing ``int f g`` (no conjugation), which matches the embedding."""
    return complex(alpha.h * np.sum(np.asarray(f) * np.asarray(g)))


# ---------------------------------------------------------------------------
# sizes

def region_masks(measure: GridMeasure, gamma, t: float, k: ConstantPack, j: int):
    """Cell masks of ``W_{gamma,t}``, ``W minus U`` and the two half sets."""
    gamma = np.asarray(gamma, float)
    pts = measure.points
    r = np.linalg.norm(pts - gamma, axis=1)
    w = (r >= t) & (r <= measure.dist / k.delta1)
    wu = w & ~cone_membership(pts, gamma, j, k)
    bj = measure.coord(j)
    gj = float(gamma @ BASIS[:, j - 1])
    return {"W": w, "WU": wu, "<": wu & (bj < gj), ">": wu & (bj > gj)}


def rows_in(alpha: AlphaGrid, lo: float, hi: float) -> slice:
    """Rows whose alpha lies in the closed interval [lo, hi]."""
    x = alpha.x
    a = int(np.searchsorted(x, lo, side="left"))
    b = int(np.searchsorted(x, hi, side="right"))
    return slice(a, b)


def local_size(F: Field, lo: float, hi: float, gamma, t: float, curve: SingularCurve,
               k: ConstantPack, j: int | None = None, parts: bool = False):
    """Tent-local size: the larger of the L2 average off the cone and the sup."""
    j = F.j if j is None else j
    m = region_masks(F.measure, gamma, t, k, j)
    rows = rows_in(F.alpha, lo, hi)
    vals = F.masked[rows]
    length = hi - lo
    l2 = 0.0
    if vals.size and m["WU"].any():
        l2 = math.sqrt(float(np.sum(np.abs(vals[:, m["WU"]]) ** 2 * F.nu[m["WU"]])) / length)
    sup = float(np.abs(vals[:, m["W"]]).max()) if vals.size and m["W"].any() else 0.0
    return (l2, sup) if parts else max(l2, sup)


@dataclass(frozen=True)
class TentLattice:
    """Finite family of test tents: dyadic intervals times curve points.

    Interval lengths are ``alpha.length * 2**-level`` for ``level`` in
    ``levels``; starts advance by ``length / overlap``.
    """

    levels: tuple
    gammas: np.ndarray
    overlap: int = 2

    @classmethod
    def build(cls, alpha: AlphaGrid, curve: SingularCurve, levels: int = 6,
              overlap: int = 2, n_gamma: int | None = None, span=None):
        lv = tuple(l for l in range(levels) if alpha.length * 2.0**-l >= 2 * alpha.h)
        if n_gamma is None or curve.mode == "points":
            gam = np.array(curve.samples)
        else:
            c = curve.coords
            lo, hi = (c[0], c[-1]) if span is None else span
            gam = curve.at_coordinate(np.linspace(lo, hi, n_gamma))
        return cls(lv, gam, overlap)

    def intervals(self, alpha: AlphaGrid):
        start, total = alpha.x0 - 0.5 * alpha.h, alpha.length
        for l in self.levels:
            length = total * 2.0**-l
            step = length / self.overlap
            m = int(round((total - length) / step)) + 1
            for i in range(m):
                lo = start + i * step
                yield l, lo, lo + length

    def count(self, alpha: AlphaGrid) -> int:
        return sum(1 for _ in self.intervals(alpha)) * len(self.gammas)


def lattice_sizes(F: Field, lattice: TentLattice, curve: SingularCurve, k: ConstantPack,
                  side: str | None = None, kind: str = "size"):
    """Evaluate sizes over the whole lattice.

    ``kind`` is ``"size"`` (full local size), ``"l2"`` (L2 average on the
    given ``side`` region, or the whole off-cone region), or ``"sup"``.
    Returns a list of ``(lo, hi, gamma_index, value)``.
    """
    vals = F.masked
    absq = np.abs(vals) ** 2
    nu = F.nu
    out = []
    cache = {}
    ivals = list(lattice.intervals(F.alpha))
    for g_idx, g in enumerate(lattice.gammas):
        for level in lattice.levels:
            length = F.alpha.length * 2.0**-level
            key = (g_idx, level)
            if key not in cache:
                m = region_masks(F.measure, g, 1.0 / length, k, F.j)
                l2_region = m["WU"] if side is None else m[side]
                e2 = absq[:, l2_region] @ nu[l2_region] if l2_region.any() else np.zeros(F.alpha.n)
                sup = np.abs(vals[:, m["W"]]).max(axis=1) if m["W"].any() else np.zeros(F.alpha.n)
                cache[key] = (np.concatenate([[0.0], np.cumsum(e2)]), sup)
            csum, sup = cache[key]
            for lvl, lo, hi in ivals:
                if lvl != level:
                    continue
                rows = rows_in(F.alpha, lo, hi)
                l2 = math.sqrt(max(csum[rows.stop] - csum[rows.start], 0.0) / (hi - lo))
                s = float(sup[rows].max()) if rows.stop > rows.start else 0.0
                v = {"size": max(l2, s), "l2": l2, "sup": s}[kind]
                out.append((lo, hi, g_idx, v))
    return out


def global_size(F: Field, lattice: TentLattice, curve: SingularCurve, k: ConstantPack) -> float:
    vals = lattice_sizes(F, lattice, curve, k)
    return max((v for *_, v in vals), default=0.0)


def embedding_l2_ratio(F: Field, f, gammas, k: ConstantPack) -> float:
    """``max_gamma ||F||_{L2 nu(R x (W_{gamma,0} minus U))} / ||f||_2``."""
    fn = math.sqrt(F.alpha.h * float(np.sum(np.abs(f) ** 2)))
    if fn == 0:
        return 0.0
    col = (np.abs(F.masked) ** 2).sum(axis=0) * F.nu
    best = 0.0
    for g in gammas:
        m = region_masks(F.measure, g, 0.0, k, F.j)["WU"]
        best = max(best, math.sqrt(float(col[m].sum())))
    return best / fn
