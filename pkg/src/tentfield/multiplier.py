"""Multipliers on V, the Sobolev norm H^s(V) and the Hormander-type condition.

A multiplier is any callable taking plane coordinates ``(..., 2)`` and
returning complex values.  :class:`MultiplierSpec` wraps such callables
with a name and parameters so that configurations can describe them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .bumps import big_phi
from .geometry import SQRT2, GeometryError, PlaneGrid, SingularCurve

#: half width of the square y-grid carrying the window Phi
WINDOW_RADIUS = 0.2


@dataclass(frozen=True)
class MultiplierSpec:
    name: str
    func: Callable = field(repr=False, compare=False)
    params: dict = field(default_factory=dict)

    def __call__(self, y):
        y = np.asarray(y, float)
        return np.asarray(self.func(y), dtype=complex)

    def scaled(self, c: complex) -> "MultiplierSpec":
        return MultiplierSpec(f"{c}*{self.name}", lambda y, f=self.func: c * np.asarray(f(y)),
                              {"scale": c, **self.params})

    def translated(self, shift) -> "MultiplierSpec":
        s = np.asarray(shift, float)
        return MultiplierSpec(f"{self.name}@shift", lambda y, f=self.func: f(y - s),
                              {"shift": s.tolist(), **self.params})

    def dilated(self, factor: float) -> "MultiplierSpec":
        """``y -> m(y / factor)`` (pairs with dilating the curve by ``factor``)."""
        return MultiplierSpec(f"{self.name}@dil", lambda y, f=self.func: f(y / factor),
                              {"dilation": factor, **self.params})


def _difference(y):
    """``xi_1 - xi_2`` in plane coordinates."""
    return SQRT2 * y[..., 0]


def _profile(spec: dict | None) -> Callable:
    """One dimensional profile for ``lip_difference``."""
    spec = dict(spec or {"kind": "log_oscillation", "tau": 1.0})
    kind = spec.pop("kind", "log_oscillation")
    if kind == "log_oscillation":
        tau = float(spec.get("tau", 1.0))

        def prof(t):
            t = np.asarray(t, float)
            a = np.abs(t)
            with np.errstate(divide="ignore"):
                return np.where(a > 0, np.exp(1j * tau * np.log(np.where(a > 0, a, 1.0))), 0.0)
        return prof
    if kind == "sign":
        return lambda t: np.sign(np.asarray(t, float)).astype(complex)
    if kind == "random":
        rng = np.random.default_rng(int(spec.get("seed", 0)))
        modes = int(spec.get("modes", 3))
        taus = rng.uniform(-1.0, 1.0, (2, modes))
        coef = (rng.normal(size=(2, modes)) + 1j * rng.normal(size=(2, modes))) / math.sqrt(2 * modes)

        def prof(t):
            t = np.asarray(t, float)
            a = np.where(t != 0, np.abs(t), 1.0)
            lg = np.log(a)[..., None]
            even = (coef[0] * np.exp(1j * taus[0] * lg)).sum(axis=-1)
            odd = (coef[1] * np.exp(1j * taus[1] * lg)).sum(axis=-1)
            return np.where(t != 0, even + np.sign(t) * odd, 0.0)
        return prof
    raise ValueError(f"unknown profile kind {kind!r}")


def builtin(name: str, params: dict | None = None) -> MultiplierSpec:
    """Named multipliers: one, zero, bht_sign, lip_difference, point_mikhlin."""
    params = dict(params or {})
    if name == "one":
        return MultiplierSpec(name, lambda y: np.ones(y.shape[:-1]), params)
    if name == "zero":
        return MultiplierSpec(name, lambda y: np.zeros(y.shape[:-1]), params)
    if name == "bht_sign":
        return MultiplierSpec(name, lambda y: np.sign(_difference(y)), params)
    if name == "lip_difference":
        prof = _profile(params.get("profile"))
        return MultiplierSpec(name, lambda y: prof(_difference(y)), params)
    if name == "point_mikhlin":
        k = int(params.get("exponent", 1))
        c = np.asarray(params.get("center", (0.0, 0.0)), float)

        def func(y):
            z = y - c
            ang = np.arctan2(z[..., 1], z[..., 0])
            return np.where(np.hypot(z[..., 0], z[..., 1]) > 0, np.exp(1j * k * ang), 0.0)
        return MultiplierSpec(name, func, params)
    raise ValueError(f"unknown multiplier {name!r}")


def grid_multiplier(grid: PlaneGrid, values, name: str = "grid") -> MultiplierSpec:
    """Cell-centred samples with bilinear interpolation, zero outside the grid."""
    v = np.asarray(values, dtype=complex).reshape(grid.shape)
    if not np.all(np.isfinite(v)):
        raise ValueError("multiplier samples must be finite")
    re = RegularGridInterpolator((grid.y1, grid.y2), v.real, bounds_error=False, fill_value=0.0)
    im = RegularGridInterpolator((grid.y1, grid.y2), v.imag, bounds_error=False, fill_value=0.0)
    return MultiplierSpec(name, lambda y: re(y) + 1j * im(y), {"shape": list(grid.shape)})


def random_multiplier(seed: int, modes: int = 3) -> MultiplierSpec:
    """Random member of the ``lip_difference`` family (singular on xi_1 = xi_2)."""
    return builtin("lip_difference", {"profile": {"kind": "random", "seed": seed, "modes": modes}})


# ---------------------------------------------------------------------------
# localization and norms

def window_grid(n: int = 128, radius: float = WINDOW_RADIUS):
    """Cell-centred square grid on ``[-radius, radius]^2``; returns (points, spacing)."""
    h = 2 * radius / n
    t = -radius + (np.arange(n) + 0.5) * h
    a, b = np.meshgrid(t, t, indexing="ij")
    return np.stack([a, b], axis=-1), h


def localize(m: Callable, beta, curve: SingularCurve, n: int = 128):
    """Samples of ``m(beta + d(beta) y) Phi(y)`` on the window grid."""
    beta = np.asarray(beta, float)
    d, _ = curve.distance(beta)
    if d <= 0:
        raise GeometryError("cannot localize at a point of the curve")
    y, h = window_grid(n)
    return m(beta + d * y) * big_phi(y), h


def sobolev_norm(g, h: float, s: float, pad: int = 2) -> float:
    """``||(1 + |x|^2)^{s/2} g^||_2`` for samples ``g`` with spacing ``h``.

    ``g`` is zero padded by the factor ``pad`` before the 2-D FFT; the
    result is exact (Parseval) for ``s = 0``.
    """
    g = np.asarray(g)
    n1, n2 = g.shape
    P1, P2 = pad * n1, pad * n2
    gh = np.fft.fft2(g, s=(P1, P2)) * h * h
    x1 = np.fft.fftfreq(P1, h)
    x2 = np.fft.fftfreq(P2, h)
    w = (1.0 + x1[:, None] ** 2 + x2[None, :] ** 2) ** s
    cell = 1.0 / (P1 * h * P2 * h)
    return math.sqrt(float(np.sum(w * np.abs(gh) ** 2)) * cell)


def beta_samples(curve: SingularCurve, levels: int = 3, directions: int = 16,
                 per_octave: int = 1, centers=None, scale: float = 1.0) -> np.ndarray:
    """Rings at radii ``scale * 2**(k/per_octave)``, ``|k| <= levels * per_octave``.

    Rings surround each center (default: the curve samples); points on the
    curve are dropped.
    """
    centers = curve.samples if centers is None else np.atleast_2d(np.asarray(centers, float))
    ks = np.arange(-levels * per_octave, levels * per_octave + 1)
    radii = scale * 2.0 ** (ks / per_octave)
    ang = 2 * np.pi * (np.arange(directions) + 0.5) / directions
    ring = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    pts = (centers[:, None, None, :] + radii[None, :, None, None] * ring[None, None, :, :]).reshape(-1, 2)
    d = curve.distance(pts)[0]
    return pts[d > 0]


def hormander_norm(m: Callable, curve: SingularCurve, s: float, betas, n: int = 128):
    """Max over ``betas`` of the localized Sobolev norm; returns (sup, argmax, all)."""
    betas = np.atleast_2d(np.asarray(betas, float))
    if len(betas) == 0:
        raise GeometryError("empty beta sample set")
    vals = np.array([sobolev_norm(*localize(m, b, curve, n), s) for b in betas])
    i = int(np.argmax(vals))
    return float(vals[i]), betas[i], vals


def normalized(m: MultiplierSpec, curve: SingularCurve, s: float, betas, n: int = 128):
    """``m`` rescaled so that its Hormander norm over ``betas`` equals 1."""
    sup = hormander_norm(m, curve, s, betas, n)[0]
    if sup == 0:
        raise ValueError("cannot normalize a multiplier with zero norm")
    return m.scaled(1.0 / sup)
