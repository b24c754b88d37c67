"""Kernel K(alpha, beta), the direct trilinear form and the model form.

Kernels are sampled on a rectangular node set in two ambient frequency
coordinates ``(xi_a, xi_b)`` (the third is ``-xi_a - xi_b``).  On V this
parametrization has area factor ``sqrt(3)``.  The payoff is that ``K`` at
lattice lags ``h (l_a e_a + l_b e_b)`` factors into two small matrix
products.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .bumps import BumpProfile, Field, GridMeasure, QuadratureNormalizer, _OUTER
from .geometry import (
    BASIS, PROJ_NORM, SQRT2, SQRT3, SQRT6, GeometryError, SingularCurve, Tent, _index, project_to_plane,
    to_plane_coords,
)


class DegenerateInput(ValueError):
    pass


def _other(ref: int) -> tuple[int, int]:
    return tuple(i for i in range(3) if i != ref)


def _plane_from_pair(xa, xb, pair):
    """Plane coordinates of ``xi`` with ``xi[pair] = (xa, xb)`` and zero sum."""
    a, b = pair
    c = 3 - a - b
    xi = np.zeros(np.broadcast(xa, xb).shape + (3,))
    xi[..., a] = xa
    xi[..., b] = xb
    xi[..., c] = -xa - xb
    return xi @ BASIS.T


@dataclass
class KernelField:
    """``K(., beta)`` as weighted frequency nodes.

    ``weights[p, q]`` already include the area factor and the cell sizes,
    so ``K(alpha) = sum_pq weights e^{-2 pi i alpha . xi_pq}``.
    """

    beta: np.ndarray
    d: float
    pair: tuple
    nodes_a: np.ndarray
    nodes_b: np.ndarray
    weights: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def spacing(self) -> float:
        return float(self.nodes_a[1] - self.nodes_a[0]) if len(self.nodes_a) > 1 else 1.0

    @property
    def mass(self) -> complex:
        """``K(0, beta)``."""
        return complex(self.weights.sum())

    def nodes_plane(self) -> np.ndarray:
        A, B = np.meshgrid(self.nodes_a, self.nodes_b, indexing="ij")
        return _plane_from_pair(A, B, self.pair)

    def __call__(self, alpha):
        """Evaluate at ambient triples ``(..., 3)`` or plane points ``(..., 2)``."""
        alpha = np.asarray(alpha, float)
        if alpha.shape[-1] == 3:
            alpha = to_plane_coords(alpha)
        flat = alpha.reshape(-1, 2)
        xi = self.nodes_plane().reshape(-1, 2)
        w = self.weights.reshape(-1)
        out = np.exp(-2j * np.pi * (flat @ xi.T)) @ w
        return out.reshape(alpha.shape[:-1])

    def at_lags(self, h: float, lags_a, lags_b) -> np.ndarray:
        """``K`` at ``h (l_a e_a + l_b e_b)`` for all pairs, shape ``(len(a), len(b))``."""
        ea = np.exp(-2j * np.pi * h * np.outer(self.nodes_a, lags_a))
        eb = np.exp(-2j * np.pi * h * np.outer(self.nodes_b, lags_b))
        return ea.T @ (self.weights @ eb)

    def nyquist(self) -> float:
        """Largest ``|l h|`` per coordinate that the node spacing resolves."""
        return 0.5 / self.spacing


def _window_x(normalizer, pts, mask, x_samples, box):
    """Normalizer on the window nodes, optionally through a coarse spline."""
    out = np.zeros(mask.shape)
    if not mask.any():
        return out
    if x_samples is None or x_samples < 2:
        out[mask] = normalizer(pts[mask])
        return out
    (a_lo, a_hi), (b_lo, b_hi), pair = box
    ta = np.linspace(a_lo, a_hi, x_samples)
    tb = np.linspace(b_lo, b_hi, x_samples)
    A, B = np.meshgrid(ta, tb, indexing="ij")
    vals = normalizer(_plane_from_pair(A, B, pair).reshape(-1, 2)).reshape(A.shape)
    deg = min(3, x_samples - 1)
    spline = RectBivariateSpline(ta, tb, vals, kx=deg, ky=deg)
    full = spline(_axis(box, 0, mask.shape[0]), _axis(box, 1, mask.shape[1]))
    out[mask] = full[mask]
    return out


def _axis(box, which, n):
    lo, hi = box[which]
    step = (hi - lo) / n
    return lo + (np.arange(n) + 0.5) * step


@dataclass
class KernelWindow:
    """Multiplier-independent part of a kernel: nodes and ``sqrt3 dxi^2 chi~_beta``."""

    beta: np.ndarray
    d: float
    pair: tuple
    nodes_a: np.ndarray
    nodes_b: np.ndarray
    points: np.ndarray
    mask: np.ndarray
    base: np.ndarray

    def kernel(self, m, meta=None) -> KernelField:
        w = np.zeros(self.mask.shape, dtype=complex)
        if self.mask.any():
            w[self.mask] = self.base[self.mask] * m(self.points[self.mask])
        return KernelField(self.beta, self.d, self.pair, self.nodes_a, self.nodes_b, w, dict(meta or {}))


def kernel_window(beta, curve: SingularCurve, bumps: BumpProfile, normalizer=None, n: int = 48,
                  pair=(0, 1), x_samples: int | None = 3) -> KernelWindow:
    """Node grid around ``beta`` covering the support of ``chi_beta``.

    ``normalizer`` maps plane points to ``X(xi)``; default is the
    continuous partition from :class:`QuadratureNormalizer`.  With
    ``x_samples`` set, ``X`` is sampled on an ``x_samples^2`` grid and
    interpolated, which is accurate since ``X`` varies on scale ``d``.
    """
    beta = np.asarray(beta, float)
    d = float(curve.distance(beta)[0])
    if d <= 0:
        raise GeometryError("kernel requested at a point of the curve")
    if normalizer is None:
        normalizer = QuadratureNormalizer(curve, bumps)
    pair = tuple(int(p) for p in pair)
    radius = _OUTER * bumps.eps * d
    amb = beta @ BASIS
    half = PROJ_NORM * radius
    box = ((amb[pair[0]] - half, amb[pair[0]] + half), (amb[pair[1]] - half, amb[pair[1]] + half), pair)
    na = _axis(box, 0, n)
    nb = _axis(box, 1, n)
    A, B = np.meshgrid(na, nb, indexing="ij")
    pts = _plane_from_pair(A, B, pair)
    chi = bumps.chi((pts - beta) / d)
    mask = chi > 0
    X = _window_x(normalizer, pts, mask, x_samples, box)
    base = np.zeros(mask.shape)
    step = 2 * half / n
    if mask.any():
        if np.any(X[mask] <= 0):
            raise GeometryError("partition normalizer vanishes inside a window")
        base[mask] = SQRT3 * step * step * chi[mask] / X[mask]
    return KernelWindow(beta, d, pair, na, nb, pts, mask, base)


def kernel_from_multiplier(m, beta, curve: SingularCurve, bumps: BumpProfile, normalizer=None,
                           n: int = 48, pair=(0, 1), x_samples: int | None = 3) -> KernelField:
    """``K(., beta)`` for ``m_beta = m chi~_beta`` sampled on an ``n x n`` node grid."""
    win = kernel_window(beta, curve, bumps, normalizer, n, pair, x_samples)
    return win.kernel(m, {"n": n, "eps": bumps.eps})


def _pair_to_alpha_sq(u, v):
    """``|alpha|^2`` for ``alpha in V`` with ``(alpha_a - alpha_c, alpha_b - alpha_c) = (u, v)``."""
    aa = (2 * u - v) / 3
    ab = (2 * v - u) / 3
    ac = -(u + v) / 3
    return aa * aa + ab * ab + ac * ac


def kernel_condition_ratio(K: KernelField, s: float, pad: int = 2) -> float:
    """``||(1 + |d alpha|^2)^{s/2} K(alpha)||_{L^2(V)} / d``."""
    w = K.weights
    if not np.any(w):
        return 0.0
    n1, n2 = w.shape
    P1, P2 = pad * n1, pad * n2
    Kh = np.fft.fft2(w, s=(P1, P2))
    dx = K.spacing
    u = np.fft.fftfreq(P1, dx)
    v = np.fft.fftfreq(P2, dx)
    a2 = _pair_to_alpha_sq(u[:, None], v[None, :])
    weight = (1.0 + K.d * K.d * a2) ** s
    cell = 1.0 / (P1 * dx * P2 * dx) / SQRT3
    return math.sqrt(float(np.sum(weight * np.abs(Kh) ** 2)) * cell) / K.d


def annulus_index(r):
    """Index ``k`` with ``r = |d P_V alpha|`` in ``(2^{k-1}, 2^k]``, and ``k = 0`` for ``r <= 1``."""
    r = np.asarray(r, float)
    mant, expo = np.frexp(r)
    # r = mant 2^expo with mant in [0.5, 1); exact powers of two sit one lower
    k = np.where(mant == 0.5, expo - 1, expo)
    return np.where(r > 1, k, 0)


def _lag_table(a: int, b: int, reach: int):
    """Projected norm and spread of integer lags ``(la, lb)`` on coordinates ``a, b``."""
    lag = np.arange(-reach, reach + 1, dtype=float)
    la, lb = np.meshgrid(lag, lag, indexing="ij")
    amb = np.zeros(la.shape + (3,))
    amb[..., a] = la
    amb[..., b] = lb
    norm = np.linalg.norm(project_to_plane(amb), axis=-1)
    spread = np.maximum(np.maximum(np.abs(la), np.abs(lb)), np.abs(la - lb))
    return norm, spread


def annulus_index_at(alpha, beta, curve: SingularCurve):
    """:func:`annulus_index` for ambient ``alpha`` triples and a plane point ``beta``."""
    d = curve.distance(np.asarray(beta, float))[0]
    return annulus_index(d * np.linalg.norm(project_to_plane(alpha), axis=-1))


# ---------------------------------------------------------------------------
# the direct form

def _lattice_plane(k1, k2, k3, L):
    """Plane coordinates of ``(k1, k2, k3) / L`` by explicit differences.

    A matrix product may round ``y_1`` on the diagonal ``k1 = k2`` to a
    tiny nonzero value (fused multiply-add), which flips multipliers that
    jump across ``xi_1 = xi_2``; the differences here are exact.
    """
    k1, k2, k3 = np.broadcast_arrays(k1, k2, k3)
    y1 = (k1 - k2) / (L * SQRT2)
    y2 = (k1 + k2 - 2 * k3) / (L * SQRT6)
    return np.stack([y1, y2], axis=-1)


def trilinear_direct(m, f1, f2, f3, h: float = 1.0, chunk: int = 256) -> complex:
    """``sqrt(3) int m(xi) f1^(xi_1) f2^(xi_2) f3^(-xi_1 - xi_2)`` on the DFT lattice.

    The ``f_j`` share an alpha grid of spacing ``h``; the grid offset only
    contributes a phase that cancels on V.  Triples whose third index
    falls outside the DFT band are dropped (no wrap-around).
    """
    fs = [np.asarray(f, dtype=complex) for f in (f1, f2, f3)]
    N = len(fs[0])
    if any(len(f) != N for f in fs):
        raise ValueError("inputs must share one grid")
    L = N * h
    hats = [np.fft.fftshift(h * np.fft.fft(f)) for f in fs]
    k = np.arange(N) - N // 2
    total = 0.0 + 0.0j
    for s in range(0, N, chunk):
        k1 = k[s:s + chunk][:, None]
        k2 = k[None, :]
        k3 = -k1 - k2
        ok = (k3 >= k[0]) & (k3 <= k[-1])
        idx3 = np.clip(k3 - k[0], 0, N - 1)
        vals = m(_lattice_plane(k1, k2, k3, L)) * hats[0][s:s + chunk][:, None] * hats[1][None, :] * hats[2][idx3]
        total += np.sum(np.where(ok, vals, 0.0))
    return SQRT3 * total / (L * L)


# ---------------------------------------------------------------------------
# the model form

def _shifted(F, rows, lags):
    """``out[l, t] = F[rows[t] + lags[l]]`` with zeros off the grid."""
    idx = rows[None, :] + lags[:, None]
    ok = (idx >= 0) & (idx < len(F))
    return np.where(ok, F[np.clip(idx, 0, len(F) - 1)], 0.0)


def _support(col, tol):
    nz = np.nonzero(np.abs(col) > tol)[0]
    if nz.size == 0:
        return None
    return int(nz[0]), int(nz[-1])


def cell_form(K: KernelField, columns, h: float, ref: int = 2, tol: float = 0.0) -> complex:
    """``h^3 sum_n K(h n) prod_j F_j[n_j]`` for one frequency cell.

    ``columns`` are the three 1-D fields at this cell.  The lattice point
    ``n`` splits as ``n_ref = t`` and lags on the other two coordinates.
    """
    a, b = _other(ref)
    if (a, b) != tuple(K.pair):
        raise ValueError("kernel node pair must match the lag coordinates")
    sup = [_support(c, tol) for c in columns]
    if any(s is None for s in sup):
        return 0.0j
    rows = np.arange(sup[ref][0], sup[ref][1] + 1)
    la = np.arange(sup[a][0] - sup[ref][1], sup[a][1] - sup[ref][0] + 1)
    lb = np.arange(sup[b][0] - sup[ref][1], sup[b][1] - sup[ref][0] + 1)
    A = _shifted(columns[a], rows, la) * columns[ref][rows][None, :]
    B = _shifted(columns[b], rows, lb)
    T = A @ B.T
    return h ** 3 * np.sum(K.at_lags(h, la, lb) * T)


def _dft_at(col, h: float, freqs) -> np.ndarray:
    """``sum_n col[n] e^{-2 pi i h xi n}`` at the given frequencies."""
    n = np.arange(len(col))
    return np.exp(-2j * np.pi * h * np.outer(freqs, n)) @ col


def cell_form_spectral(K: KernelField, columns, h: float, ref: int = 2) -> complex:
    """Same sum as :func:`cell_form` with unrestricted lags, through the nodes of ``K``.

    Because ``K`` is a finite sum of plane waves, the lag sum factors into
    three 1-D transforms: ``sum_pq w_pq Fa^(xa_p) Fb^(xb_q) Fref^(-xa_p - xb_q)``.
    """
    a, b = _other(ref)
    if (a, b) != tuple(K.pair):
        raise ValueError("kernel node pair must match the lag coordinates")
    ga = _dft_at(columns[a], h, K.nodes_a)
    gb = _dft_at(columns[b], h, K.nodes_b)
    na, nb = len(K.nodes_a), len(K.nodes_b)
    steps = np.concatenate([np.diff(K.nodes_a), np.diff(K.nodes_b)])
    if steps.size and np.allclose(steps, steps[0], rtol=1e-12, atol=0):
        # uniform nodes with one step: xa_p + xb_q depends on p + q only
        sums = K.nodes_a[0] + K.nodes_b[0] + steps[0] * np.arange(na + nb - 1)
        gr = _dft_at(columns[ref], h, -sums)[np.add.outer(np.arange(na), np.arange(nb))]
    else:
        gr = _dft_at(columns[ref], h, -np.add.outer(K.nodes_a, K.nodes_b).ravel()).reshape(na, nb)
    return h ** 3 * np.sum(K.weights * np.outer(ga, gb) * gr)


def model_form_evaluate(kernels, fields, h: float, ref: int = 2, tol: float = 0.0,
                        method: str = "spectral") -> complex:
    """``sum_c mu_c int K(alpha, beta_c) prod_j F_j(alpha_j, beta_c) dalpha``.

    ``kernels`` maps cell index to :class:`KernelField`; ``fields`` are
    three :class:`Field` objects on one measure.  ``method="lags"`` sums
    over lattice lags directly (``tol`` trims the column supports);
    ``"spectral"`` uses the factored form, which is exact and much faster.
    """
    if len(fields) != 3:
        raise ValueError("need three fields")
    if method not in ("spectral", "lags"):
        raise ValueError(f"unknown method {method!r}")
    shape = fields[0].values.shape
    if any(F.values.shape != shape for F in fields):
        raise ValueError("field shapes differ")
    mu = fields[0].measure.weights
    total = 0.0 + 0.0j
    for c, K in kernels.items():
        if mu[c] == 0:
            continue
        cols = [F.values[:, c] for F in fields]
        if method == "spectral":
            total += mu[c] * cell_form_spectral(K, cols, h, ref)
        else:
            total += mu[c] * cell_form(K, cols, h, ref, tol)
    return total


def build_kernels(m, measure: GridMeasure, bumps: BumpProfile, cells=None, normalizer=None,
                  n: int = 48, pair=(0, 1), x_samples: int | None = 3) -> dict:
    """Kernels at the active cells (or the given subset)."""
    if cells is None:
        cells = np.nonzero(measure.active)[0]
    if normalizer is None:
        normalizer = QuadratureNormalizer(measure.curve, bumps)
    return {int(c): kernel_from_multiplier(m, measure.points[c], measure.curve, bumps,
                                           normalizer, n=n, pair=pair, x_samples=x_samples)
            for c in cells}


def significant_cells(fields, rel: float = 1e-12) -> np.ndarray:
    """Active cells where the product of column norms is not negligible."""
    norms = np.prod([np.linalg.norm(F.values, axis=0) for F in fields], axis=0)
    norms = np.where(fields[0].measure.active, norms, 0.0)
    top = norms.max() if norms.size else 0.0
    if top == 0:
        return np.zeros(0, dtype=int)
    return np.nonzero(norms > rel * top)[0]


# ---------------------------------------------------------------------------
# the tent estimate

def tent_estimate_ratio(kernels, fields, tent: Tent, i: int, curve: SingularCurve, k,
                        sizes, h: float, x0: float = 0.0, k_max: int = 8, missing: str = "raise",
                        tol: float = 1e-14) -> dict:
    """Per-annulus pieces of the L^1 norm of ``K prod F_j`` over ``D_T^i``.

    ``kernels`` maps cell index to kernels whose node pair is the two
    coordinates other than ``i``.  Returns the total, the normalized ratio
    ``LHS / (|I| prod sizes)``, per-k sums, the largest annulus resolved
    at every contributing cell, and the cells that break the kernel support bound.
    Cells of the region without a kernel raise, or are counted and skipped
    when ``missing="skip"`` (for kernels built on significant cells only).
    """
    sizes = np.asarray(sizes, float)
    if np.any(sizes <= 0):
        raise DegenerateInput("global sizes must be positive")
    ref = _index(i)
    a, b = _other(ref)
    measure = fields[0].measure
    n_alpha = fields[0].values.shape[0]
    sl = _rows(n_alpha, h, x0, tent.lo, tent.hi)
    rows = np.arange(sl.start, sl.stop)
    per_k = np.zeros(k_max + 1)
    resolved = k_max
    violations = []
    contributing = 0
    skipped = 0
    if rows.size == 0:
        return _tent_report(tent, 0.0, sizes, per_k, resolved, violations, 0, 0)
    gamma = np.asarray(tent.gamma, float)
    dist = measure.dist
    r = np.linalg.norm(measure.points - gamma, axis=1)
    inW = (r >= tent.scale) & (r <= dist / k.delta1) & measure.active
    table = None
    for c in np.nonzero(inW)[0]:
        K = kernels.get(int(c))
        if K is None:
            if missing == "skip":
                skipped += 1
                continue
            raise KeyError(f"no kernel for cell {c}")
        if tuple(K.pair) != (a, b):
            raise ValueError("kernel node pair must match the tent index")
        d = K.d
        # lags needed for annuli up to k_max, clipped to what is resolved
        want = int(math.ceil(2.0 ** (k_max + 1) / (d * h)))
        reach = min(want, _reach(K, rows, n_alpha, h))
        Fa = np.abs(fields[a].values[:, c])
        Fb = np.abs(fields[b].values[:, c])
        Fi = np.abs(fields[ref].values[rows, c])
        if not (Fa.any() and Fb.any() and Fi.any()):
            continue
        # lags reaching rows where a field is below tol * its max add nothing
        sa, sb = _support(Fa, tol * Fa.max()), _support(Fb, tol * Fb.max())
        lags_a = np.arange(max(-reach, sa[0] - rows[-1]), min(reach, sa[1] - rows[0]) + 1)
        lags_b = np.arange(max(-reach, sb[0] - rows[-1]), min(reach, sb[1] - rows[0]) + 1)
        if lags_a.size == 0 or lags_b.size == 0:
            continue
        A = _shifted(Fa, rows, lags_a) * Fi[None, :]
        B = _shifted(Fb, rows, lags_b)
        T = A @ B.T
        Kabs = np.abs(K.at_lags(h, lags_a, lags_b))
        if table is None:
            # every reach is bounded by the grid margin around the rows
            margin = min(int(rows[0]), n_alpha - 1 - int(rows[-1]))
            table = (margin, *_lag_table(a, b, margin))
        R = table[0]
        ia, ib = slice(lags_a[0] + R, lags_a[-1] + R + 1), slice(lags_b[0] + R, lags_b[-1] + R + 1)
        kk = annulus_index(d * h * table[1][ia, ib])
        # largest annulus whose ball fits in the lag window
        top = int(math.floor(math.log2(max(d * reach * h / math.sqrt(2), 1e-300)))) \
            if reach > 0 else -1
        resolved = min(resolved, top)
        vals = measure.weights[c] * h ** 3 * Kabs * T
        live = vals > 0
        if not live.any():
            continue
        contributing += 1
        bound = np.ldexp(1.0, kk + 1) / d * (1 + 1e-12)
        bad = live & (h * table[2][ia, ib] > bound)
        if bad.any():
            p, q = np.argwhere(bad)[0]
            violations.append({"cell": int(c), "lag": [int(lags_a[p]), int(lags_b[q])], "k": int(kk[p, q])})
        sel = live & (kk <= k_max)
        per_k += np.bincount(kk[sel], weights=vals[sel], minlength=k_max + 1)[:k_max + 1]
    return _tent_report(tent, float(per_k.sum()), sizes, per_k, resolved, violations, contributing, skipped)


def _rows(n, h, x0, lo, hi) -> slice:
    x = x0 + h * np.arange(n)
    idx = np.nonzero((x >= lo) & (x <= hi))[0]
    return slice(0, 0) if idx.size == 0 else slice(int(idx[0]), int(idx[-1]) + 1)


def _reach(K: KernelField, rows, n_alpha: int, h: float) -> int:
    grid = min(int(rows[0]), n_alpha - 1 - int(rows[-1]))
    return int(max(0, min(grid, math.floor(K.nyquist() / h))))


def envelope(kk, s: float):
    kk = np.asarray(kk, float)
    return (1 + kk) * 2.0 ** (kk * (1 - s))


def _tent_report(tent, lhs, sizes, per_k, resolved, violations, contributing, skipped) -> dict:
    denom = tent.length * float(np.prod(sizes))
    return {
        "tent": tent.to_json(),
        "lhs": lhs,
        "ratio": lhs / denom,
        "per_k": (per_k / denom).tolist(),
        "resolved_k": int(resolved),
        "support_violations": violations,
        "contributing_cells": contributing,
        "skipped_cells": skipped,
    }
