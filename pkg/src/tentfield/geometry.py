"""Geometry of the frequency plane V = {xi_1 + xi_2 + xi_3 = 0}.

Points of V are handled in two coordinate systems:

* ambient triples ``(xi_1, xi_2, xi_3)`` with zero sum, and
* isometric plane coordinates ``(y_1, y_2)`` with respect to the
  orthonormal basis ``u_1 = (1, -1, 0)/sqrt(2)``, ``u_2 = (1, 1, -2)/sqrt(6)``.

Everything below works in plane coordinates.  Lebesgue measure in
``(y_1, y_2)`` is the two dimensional Hausdorff measure on V, so no
Jacobian appears anywhere in this module.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SQRT2 = math.sqrt(2.0)
SQRT3 = math.sqrt(3.0)
SQRT6 = math.sqrt(6.0)
#: length of the projection of a unit coordinate vector onto V
PROJ_NORM = SQRT6 / 3.0

#: rows are u_1 and u_2 written in ambient coordinates
BASIS = np.array([[1.0, -1.0, 0.0], [1.0, 1.0, -2.0]]) / np.array([[SQRT2], [SQRT6]])

# slack used when validating the strict cone condition on curve samples
CONE_SLACK = 1e-12


class GeometryError(ValueError):
    """Raised for inputs outside the domain of a geometric operation."""


class CurveError(GeometryError):
    """Invalid curve data; ``pair`` holds the first offending sample indices."""

    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


# ---------------------------------------------------------------------------
# coordinates

def project_to_plane(v):
    """Orthogonal projection of ambient triples onto V."""
    v = np.asarray(v, dtype=float)
    return v - v.mean(axis=-1, keepdims=True)


def to_plane_coords(xi):
    """Ambient triples -> ``(y_1, y_2)``.  Off-plane parts are discarded."""
    return np.asarray(xi, dtype=float) @ BASIS.T


def to_ambient(y):
    """``(y_1, y_2)`` -> ambient zero-sum triples."""
    return np.asarray(y, dtype=float) @ BASIS


def axis_vector(j: int) -> np.ndarray:
    """Plane coordinates of ``P_V e_j`` (length ``sqrt(6)/3``)."""
    return BASIS[:, _index(j)].copy()


def coordinate(y, j: int):
    """The ambient coordinate ``xi_j = <xi, e_j>`` of plane points ``y``."""
    return np.asarray(y, dtype=float) @ BASIS[:, _index(j)]


def _index(j: int) -> int:
    if j not in (1, 2, 3):
        raise GeometryError(f"coordinate index must be 1, 2 or 3, got {j!r}")
    return j - 1


# ---------------------------------------------------------------------------
# constants

@dataclass(frozen=True)
class ConstantPack:
    """Constants derived from the cone aperture ``theta0``."""

    theta0: float
    theta1: float
    delta0: float
    delta1: float
    delta2: float
    rho: float
    eps: float
    c_s: float
    c_f: float
    c: float
    M: int

    @property
    def mesh(self) -> float:
        """Strip width factor ``delta0 (1 - delta1)``."""
        return self.delta0 * (1.0 - self.delta1)

    @property
    def scale_ratio(self) -> float:
        """Scale comparability constant for overlapping frequency windows."""
        w = 0.4 * self.eps
        return (w + 1.0 / self.delta1) / (self.delta2 - w)

    def invariants(self) -> dict[str, bool]:
        return {
            "aperture_range": 0.0 <= self.theta0 < math.pi / 6,
            "right_angle_gap": math.pi / 3 + self.theta0 + self.theta1 < math.pi / 2,
            "delta1_below_delta2": math.sin(self.theta1) < self.delta2,
            "rho_unit": 0.0 < self.rho < 1.0,
            "eps_positive": self.eps > 0.0,
            "eps_below_half_rho": self.eps < self.rho / 2,
        }

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def derive_constants(theta0: float) -> ConstantPack:
    theta0 = float(theta0)
    if not (0.0 <= theta0 < math.pi / 6):
        raise GeometryError(f"theta0 must lie in [0, pi/6), got {theta0}")
    theta1 = math.pi / 18 - theta0 / 3
    delta0 = PROJ_NORM * math.cos(theta0 + math.pi / 3)
    delta1 = math.sin(theta1)
    delta2 = PROJ_NORM * math.cos(math.pi / 3 + theta0 + theta1)
    rho = (delta2 - delta1) / (1 + delta1)
    eps = delta1 * rho**2 / 2
    c_s = 4.0
    c_f = 11.0 / delta2
    c = max(3 * c_s, 1 / delta1)
    M = math.floor(3 * c_f / (2 * delta0 * (1 - delta1))) + 1
    return ConstantPack(theta0, theta1, delta0, delta1, delta2, rho, eps, c_s, c_f, c, M)


# ---------------------------------------------------------------------------
# grids on V

@dataclass(frozen=True)
class PlaneGrid:
    """Tensor grid of cells in plane coordinates.

    ``y1`` and ``y2`` hold cell centers, ``e1`` and ``e2`` cell edges.  Cells
    are flattened row major with ``y1`` as the slow index.
    """

    e1: np.ndarray
    e2: np.ndarray

    @classmethod
    def uniform(cls, center, half_width, n) -> "PlaneGrid":
        cx, cy = center
        hx, hy = np.broadcast_to(np.asarray(half_width, float), (2,))
        nx, ny = np.broadcast_to(np.asarray(n, int), (2,))
        return cls(np.linspace(cx - hx, cx + hx, nx + 1), np.linspace(cy - hy, cy + hy, ny + 1))

    @classmethod
    def from_edges(cls, e1, e2) -> "PlaneGrid":
        e1, e2 = np.asarray(e1, float), np.asarray(e2, float)
        if np.any(np.diff(e1) <= 0) or np.any(np.diff(e2) <= 0):
            raise GeometryError("grid edges must be strictly increasing")
        return cls(e1, e2)

    @property
    def y1(self):
        return 0.5 * (self.e1[1:] + self.e1[:-1])

    @property
    def y2(self):
        return 0.5 * (self.e2[1:] + self.e2[:-1])

    @property
    def shape(self):
        return (len(self.e1) - 1, len(self.e2) - 1)

    @property
    def size(self):
        return self.shape[0] * self.shape[1]

    @property
    def points(self) -> np.ndarray:
        a, b = np.meshgrid(self.y1, self.y2, indexing="ij")
        return np.column_stack([a.ravel(), b.ravel()])

    @property
    def areas(self) -> np.ndarray:
        return np.outer(np.diff(self.e1), np.diff(self.e2)).ravel()

    @property
    def diameters(self) -> np.ndarray:
        a, b = np.meshgrid(np.diff(self.e1), np.diff(self.e2), indexing="ij")
        return np.hypot(a, b).ravel()

    def refine(self, factor: int = 2) -> "PlaneGrid":
        def split(e):
            t = np.linspace(0, 1, factor + 1)[:-1]
            inner = (e[:-1, None] + np.diff(e)[:, None] * t[None, :]).ravel()
            return np.append(inner, e[-1])
        return PlaneGrid(split(self.e1), split(self.e2))

    def header(self) -> dict:
        return {"e1": self.e1.tolist(), "e2": self.e2.tolist()}


# ---------------------------------------------------------------------------
# the singular curve

def cone_violation(points, j: int, theta0: float):
    """First pair of samples breaking the strict cone condition, or None.

    ``points`` are plane coordinates.  The check is
    ``|<g - g', e_j>| > (sqrt(6)/3) |g - g'| cos(theta0)`` with a small
    slack so that boundary cases are rejected.
    """
    pts = np.asarray(points, float)
    b = BASIS[:, _index(j)]
    ct = math.cos(theta0)
    for a in range(len(pts) - 1):
        diff = pts[a + 1:] - pts[a]
        lhs = np.abs(diff @ b)
        norm = np.linalg.norm(diff, axis=1)
        bad = np.nonzero(lhs - PROJ_NORM * norm * ct <= CONE_SLACK * np.maximum(norm, 1.0))[0]
        if bad.size:
            return (a, a + 1 + int(bad[0]))
    return None


def _segment_distances(points, starts, ends):
    """Distances from points (m,2) to segments (s,2); returns (dist, nearest) arrays."""
    sx, sy = starts[:, 0], starts[:, 1]
    gx, gy = ends[:, 0] - sx, ends[:, 1] - sy
    len2 = gx * gx + gy * gy
    rx = points[:, 0, None] - sx
    ry = points[:, 1, None] - sy
    with np.errstate(invalid="ignore", divide="ignore"):
        t = (rx * gx + ry * gy) / len2
    t = np.where(len2 > 0, np.clip(t, 0.0, 1.0), 0.0)
    nx = sx + t * gx
    ny = sy + t * gy
    dist = np.hypot(points[:, 0, None] - nx, points[:, 1, None] - ny)
    return dist, np.stack([nx, ny], axis=-1)


class SingularCurve:
    """A Lipschitz curve in the cone around ``P_V e_j``, given by samples.

    Samples are stored in plane coordinates, sorted by their ``j``-th
    ambient coordinate.  ``mode`` selects the realization used by all
    queries: ``"polyline"`` (default) or ``"points"``.
    """

    def __init__(self, samples, cone_index: int, theta0: float, mode: str = "polyline",
                 basis: str = "ambient", validate: bool = True):
        pts = np.atleast_2d(np.asarray(samples, dtype=float))
        if pts.size == 0:
            raise CurveError("curve has no samples")
        if basis == "ambient":
            if pts.shape[1] != 3:
                raise CurveError("ambient samples must be triples")
            scale = np.maximum(np.abs(pts).max(axis=1), 1.0)
            bad = np.nonzero(np.abs(pts.sum(axis=1)) > 1e-12 * scale)[0]
            if bad.size:
                raise CurveError(f"sample {int(bad[0])} does not lie on V", pair=(int(bad[0]),))
            pts = to_plane_coords(pts)
        elif basis == "uv":
            if pts.shape[1] != 2:
                raise CurveError("plane samples must be pairs")
        else:
            raise CurveError(f"unknown basis {basis!r}")
        if mode not in ("polyline", "points"):
            raise CurveError(f"unknown interpolation mode {mode!r}")
        _index(cone_index)
        if not (0.0 <= theta0 < math.pi / 6):
            raise CurveError(f"theta0 must lie in [0, pi/6), got {theta0}")
        if validate:
            pair = cone_violation(pts, cone_index, theta0)
            if pair is not None:
                raise CurveError(f"samples {pair[0]} and {pair[1]} violate the cone condition", pair)
        order = np.argsort(pts @ BASIS[:, cone_index - 1], kind="stable")
        self.samples = pts[order]
        self.samples.setflags(write=False)
        self.j = cone_index
        self.theta0 = float(theta0)
        self.mode = mode

    def __len__(self):
        return len(self.samples)

    def __repr__(self):
        return f"SingularCurve(n={len(self)}, j={self.j}, theta0={self.theta0}, mode={self.mode!r})"

    @property
    def coords(self) -> np.ndarray:
        """j-th ambient coordinate of the samples (increasing)."""
        return self.samples @ BASIS[:, self.j - 1]

    def distance(self, y, chunk: int | None = None):
        """Distance to the curve and the nearest curve point.

        Ties between equidistant nearest points go to the smaller j-th
        coordinate.  ``y`` may be a single point or an array of points.
        """
        y = np.asarray(y, dtype=float)
        single = y.ndim == 1
        pts = np.atleast_2d(y)
        d = np.empty(len(pts))
        near = np.empty_like(pts)
        bj = BASIS[:, self.j - 1]
        if chunk is None:
            chunk = max(64, int(2_000_000 // len(self.samples)))
        for lo in range(0, len(pts), chunk):
            p = pts[lo:lo + chunk]
            if self.mode == "points" or len(self.samples) == 1:
                cand = np.broadcast_to(self.samples[None], (len(p),) + self.samples.shape)
                dist = np.linalg.norm(p[:, None, :] - cand, axis=2)
            else:
                dist, cand = _segment_distances(p, self.samples[:-1], self.samples[1:])
            dmin = dist.min(axis=1)
            if dist.shape[1] == 1:
                pick = np.zeros(len(p), dtype=int)
            else:
                key = np.where(dist == dmin[:, None], cand[..., 0] * bj[0] + cand[..., 1] * bj[1], np.inf)
                pick = np.argmin(key, axis=1)
            rows = np.arange(len(p))
            d[lo:lo + chunk] = dmin
            near[lo:lo + chunk] = cand[rows, pick]
        if single:
            return float(d[0]), near[0]
        return d, near

    def _coords_in(self, j: int | None):
        """Samples and their j-th coordinates, reordered to increase.

        The cone condition keeps every coordinate strictly monotone along
        the curve, so any j gives a valid parametrization.
        """
        if j is None or j == self.j:
            return self.samples, self.coords
        c = self.samples @ BASIS[:, _index(j)]
        if len(c) > 1 and c[-1] < c[0]:
            return self.samples[::-1], c[::-1]
        return self.samples, c

    def at_coordinate(self, value, j: int | None = None):
        """Point(s) of the realization with the given j-th coordinate (polyline)."""
        pts, c = self._coords_in(j)
        v = np.asarray(value, dtype=float)
        return np.stack([np.interp(v, c, pts[:, 0]), np.interp(v, c, pts[:, 1])], axis=-1)

    def strip_endpoints(self, lo: float, hi: float, j: int | None = None):
        """Extreme points of the curve inside ``lo <= xi_j <= hi``, or None."""
        pts, c = self._coords_in(j)
        if self.mode == "points":
            idx = np.nonzero((c >= lo) & (c <= hi))[0]
            if idx.size == 0:
                return None
            return pts[idx[0]].copy(), pts[idx[-1]].copy()
        a, b = max(lo, c[0]), min(hi, c[-1])
        if a > b:
            return None
        return self.at_coordinate(a, j), self.at_coordinate(b, j)

    def random_points(self, n: int, rng) -> np.ndarray:
        """Uniform draws on the realization (segment picked by length)."""
        if self.mode == "points" or len(self.samples) == 1:
            return self.samples[rng.integers(0, len(self.samples), n)]
        seg = np.diff(self.samples, axis=0)
        w = np.linalg.norm(seg, axis=1)
        k = rng.choice(len(seg), size=n, p=w / w.sum())
        t = rng.random(n)[:, None]
        return self.samples[k] + t * seg[k]

    def translated(self, shift) -> "SingularCurve":
        return SingularCurve(self.samples + np.asarray(shift, float), self.j, self.theta0,
                             self.mode, basis="uv", validate=False)

    def scaled(self, factor: float) -> "SingularCurve":
        return SingularCurve(self.samples * float(factor), self.j, self.theta0,
                             self.mode, basis="uv", validate=False)

    def to_json(self) -> dict:
        return {"cone_index": self.j, "theta0": self.theta0, "mode": self.mode,
                "basis": "uv", "points": self.samples.tolist()}


def load_curve(path) -> SingularCurve:
    """Read a curve file (see README for the format) and validate it."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return curve_from_dict(data)


def curve_from_dict(data: dict) -> SingularCurve:
    try:
        j = int(data["cone_index"])
        theta0 = float(data["theta0"])
        pts = data["points"]
    except (KeyError, TypeError, ValueError) as exc:
        raise CurveError(f"malformed curve description: {exc}") from exc
    basis = data.get("basis", "ambient")
    if basis not in ("uv", "ambient"):
        raise CurveError(f"unknown basis {basis!r}")
    return SingularCurve(pts, j, theta0, mode=data.get("mode", "polyline"), basis=basis)


def line_curve(j: int, theta0: float, offset=(0.0, 0.0), half_length: float = 10.0, n: int = 2):
    """Straight segment through ``offset`` in the direction of ``P_V e_j``."""
    a = axis_vector(j) / PROJ_NORM
    t = np.linspace(-half_length, half_length, n)
    return SingularCurve(np.asarray(offset, float) + t[:, None] * a, j, theta0, basis="uv")


def random_curve(rng, j: int, theta0: float, n: int = 12, step: float = 1.0,
                 spread: float = 0.9, start=None) -> SingularCurve:
    """Random walk whose steps stay strictly inside the cone of aperture theta0."""
    if theta0 <= 0 and n > 1:
        raise GeometryError("the cone is empty for theta0 = 0; use a single sample")
    a = axis_vector(j) / PROJ_NORM
    normal = np.array([-a[1], a[0]])
    ang = rng.uniform(-spread * theta0, spread * theta0, n - 1)
    lengths = step * rng.uniform(0.3, 1.0, n - 1)
    steps = lengths[:, None] * (np.cos(ang)[:, None] * a + np.sin(ang)[:, None] * normal)
    origin = np.zeros(2) if start is None else np.asarray(start, float)
    pts = np.vstack([origin, origin + np.cumsum(steps, axis=0)])
    pts -= pts.mean(axis=0) - origin
    return SingularCurve(pts, j, theta0, basis="uv")


# ---------------------------------------------------------------------------
# region predicates (vectorized over beta)

def cone_membership(beta, gamma, j: int, k: ConstantPack, tol: float = 0.0):
    """``|<beta - gamma, e_j>| <= delta2 |beta - gamma|``."""
    diff = np.asarray(beta, float) - np.asarray(gamma, float)
    lhs = np.abs(diff @ BASIS[:, _index(j)])
    return lhs <= k.delta2 * np.linalg.norm(diff, axis=-1) + tol


def whitney_membership(beta, gamma, t: float, curve: SingularCurve, k: ConstantPack,
                       dist=None, tol: float = 0.0):
    """``t <= |beta - gamma| <= d(beta) / delta1``.

    ``dist`` may carry precomputed distances to the curve.
    """
    beta = np.asarray(beta, float)
    r = np.linalg.norm(beta - np.asarray(gamma, float), axis=-1)
    if dist is None:
        dist = curve.distance(beta)[0]
    return (r >= t - tol) & (r <= dist / k.delta1 + tol)


def half_whitney_membership(beta, gamma, t, curve, k, j: int, side: str, dist=None):
    """Whitney region minus the cone, restricted to one side of ``gamma_j``."""
    if side not in ("<", ">"):
        raise GeometryError("side must be '<' or '>'")
    beta = np.asarray(beta, float)
    bj = coordinate(beta, j)
    gj = float(coordinate(gamma, j))
    half = bj < gj if side == "<" else bj > gj
    return (whitney_membership(beta, gamma, t, curve, k, dist=dist)
            & ~cone_membership(beta, gamma, j, k) & half)


# ---------------------------------------------------------------------------
# Apollonian balls

def apollonius_ball(x0, x1, r: float):
    """Center and radius of ``{y : |y - x0| < r |y - x1|}``."""
    if not (0.0 < r < 1.0):
        raise GeometryError(f"ratio must lie in (0, 1), got {r}")
    x0, x1 = np.asarray(x0, float), np.asarray(x1, float)
    s = 1.0 - r * r
    return (x0 - r * r * x1) / s, r * float(np.linalg.norm(x0 - x1)) / s


def in_apollonius_ball(y, x0, x1, r: float, tol: float = 0.0):
    y = np.asarray(y, float)
    return np.linalg.norm(y - x0, axis=-1) < r * np.linalg.norm(y - x1, axis=-1) + tol


def apollonius_inclusion_hypothesis(x0, x1, x2, r: float) -> bool:
    if not (0.0 < r < 1.0):
        raise GeometryError(f"ratio must lie in (0, 1), got {r}")
    x0, x1, x2 = (np.asarray(v, float) for v in (x0, x1, x2))
    return bool(r * np.linalg.norm(x2 - x1) <= np.linalg.norm(x2 - x0) - np.linalg.norm(x1 - x0))


# ---------------------------------------------------------------------------
# tents

@dataclass(frozen=True)
class Tent:
    """A time interval paired with a curve point (plane coordinates)."""

    center: float
    length: float
    gamma: tuple
    origin: str = field(default="", compare=False)

    def __post_init__(self):
        if not self.length > 0:
            raise GeometryError("tent length must be positive")

    @property
    def lo(self) -> float:
        return self.center - 0.5 * self.length

    @property
    def hi(self) -> float:
        return self.center + 0.5 * self.length

    @property
    def scale(self) -> float:
        """Lower Whitney radius ``1/|I|`` of the tent region."""
        return 1.0 / self.length

    def contains_time(self, alpha):
        alpha = np.asarray(alpha, float)
        return (alpha >= self.lo) & (alpha <= self.hi)

    def to_json(self) -> dict:
        return {"center": self.center, "length": self.length, "gamma": list(self.gamma),
                "origin": self.origin}


def tent_region_membership(alpha, beta, tent: Tent, curve: SingularCurve, k: ConstantPack,
                           i: int | None = None, dist=None):
    """Membership in ``D_T`` (``i`` None) or the variant ``D_T^i``.

    For the variant, ``alpha`` is an array of ambient triples and only
    the i-th entry is constrained to the interval.
    """
    alpha = np.asarray(alpha, float)
    a = alpha if i is None else alpha[..., _index(i)]
    inside = tent.contains_time(a)
    return inside & whitney_membership(beta, np.asarray(tent.gamma), tent.scale, curve, k, dist=dist)
