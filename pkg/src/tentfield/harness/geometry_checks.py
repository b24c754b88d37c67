"""Randomized checks of the tent geometry statements on polyline curves.

Every check draws configurations from a list of curves, evaluates the
statement with closed inequalities and an absolute slack ``tol``, and
returns a :class:`CheckResult`.  Configurations that fail a hypothesis
are redrawn, so ``samples`` counts only configurations that exercise the
statement.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..geometry import (BASIS, ConstantPack, SingularCurve, apollonius_ball, cone_membership,
                        coordinate, random_curve)


@dataclass
class CheckResult:
    name: str
    samples: int
    violations: int
    witnesses: list = field(default_factory=list)
    constants: dict = field(default_factory=dict)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return self.violations == 0

    @property
    def status(self) -> str:
        if self.samples == 0:
            return "no samples"
        return "pass" if self.passed else "fail"

    def to_json(self) -> dict:
        return {"name": self.name, "status": self.status, "samples": self.samples,
                "violations": self.violations, "witnesses": self.witnesses[:5],
                "constants": self.constants, "seconds": round(self.seconds, 3)}


def _witness(**arrays) -> dict:
    return {k: np.asarray(v, float).tolist() for k, v in arrays.items()}


def _draw(rng, n, make, batch=4096, max_rounds=200):
    """Collect ``n`` accepted rows from ``make(rng, batch) -> (dict of arrays, ok mask)``."""
    parts, got = [], 0
    for _ in range(max_rounds):
        if got >= n:
            break
        cols, ok = make(rng, batch)
        if ok.any():
            parts.append({k: v[ok] for k, v in cols.items()})
            got += int(ok.sum())
    if not parts:
        return {}, 0
    out = {k: np.concatenate([p[k] for p in parts])[:n] for k in parts[0]}
    return out, min(got, n)


def _split(n: int, parts: int) -> list[int]:
    base, extra = divmod(n, parts)
    return [base + (i < extra) for i in range(parts)]


def curve_family(rng, theta0: float, count: int = 8, base: SingularCurve | None = None) -> list:
    """Random cone curves of every index, plus ``base`` when given."""
    curves = [] if base is None else [base]
    for c in range(count):
        if theta0 > 0:
            curves.append(random_curve(rng, 1 + c % 3, theta0, n=int(rng.integers(3, 16)),
                                       step=float(rng.uniform(0.2, 2.0))))
    if not curves:
        # theta0 = 0 admits only single-point curves
        curves.append(SingularCurve([[0.0, 0.0]], 1 + int(rng.integers(0, 3)), theta0, basis="uv"))
    return curves


def _unit(rng, n):
    ang = rng.uniform(0, 2 * np.pi, n)
    return np.stack([np.cos(ang), np.sin(ang)], axis=-1)


def _whitney(beta, gamma, t, dist, k: ConstantPack, tol):
    r = np.linalg.norm(beta - gamma, axis=-1)
    return (r >= t - tol) & (k.delta1 * r <= dist + tol)


def _whitney_strict(beta, gamma, t, dist, k: ConstantPack, tol):
    """Membership with the slack working against it (for hypotheses)."""
    r = np.linalg.norm(beta - gamma, axis=-1)
    return (r >= t + tol) & (k.delta1 * r <= dist - tol)


# ---------------------------------------------------------------------------
# individual statements

def check_projection_bound(curves, k: ConstantPack, n: int, rng, tol: float = 1e-9) -> CheckResult:
    """``|<g - g', e_j>| >= delta0 |g - g'|`` for curve points and all j."""
    t0 = time.perf_counter()
    res = CheckResult("projection_bound", 0, 0, constants={"delta0": k.delta0})
    worst = math.inf
    for curve, m in zip(curves, _split(n, len(curves))):
        if m == 0 or len(curve) < 2:
            continue
        g1, g2 = curve.random_points(m, rng), curve.random_points(m, rng)
        diff = g1 - g2
        norm = np.linalg.norm(diff, axis=1)
        for j in (1, 2, 3):
            lhs = np.abs(diff @ BASIS[:, j - 1])
            bad = lhs < k.delta0 * norm - tol
            res.violations += int(bad.sum())
            if bad.any():
                i = int(np.argmax(bad))
                res.witnesses.append(_witness(gamma=g1[i], gamma2=g2[i], j=[j]))
            pos = norm > 0
            if pos.any():
                worst = min(worst, float((lhs[pos] / norm[pos]).min()))
        res.samples += m
    res.constants["min_ratio"] = worst
    res.seconds = time.perf_counter() - t0
    return res


def check_apollonius(n: int, rng, points: int = 10_000, tol: float = 1e-9,
                     chunk: int = 64) -> CheckResult:
    """Premise ``r|y - x2| <= |y - x0|`` forces ``r|y - x1| <= |y - x0|``.

    Each configuration satisfies ``r|x2 - x1| <= |x2 - x0| - |x1 - x0|``;
    ``points`` test points per configuration crowd the sphere bounding
    the larger ball.
    """
    t0 = time.perf_counter()
    res = CheckResult("apollonius_inclusion", 0, 0, constants={"points_per_config": points})

    def make(rng, b):
        x0 = rng.normal(size=(b, 2))
        x1 = x0 + rng.normal(size=(b, 2))
        r = rng.uniform(0.02, 0.98, b)
        away = x1 - x0
        away /= np.maximum(np.linalg.norm(away, axis=1, keepdims=True), 1e-300)
        ang = rng.uniform(-1.2, 1.2, b)
        rot = np.stack([np.cos(ang) * away[:, 0] - np.sin(ang) * away[:, 1],
                        np.sin(ang) * away[:, 0] + np.cos(ang) * away[:, 1]], axis=-1)
        x2 = x1 + rng.uniform(0.01, 3.0, b)[:, None] * rot
        ok = r * np.linalg.norm(x2 - x1, axis=1) <= (np.linalg.norm(x2 - x0, axis=1)
                                                     - np.linalg.norm(x1 - x0, axis=1))
        return {"x0": x0, "x1": x1, "x2": x2, "r": r}, ok

    cfg, got = _draw(rng, n, make)
    premise_hits = 0
    for lo in range(0, got, chunk):
        sl = slice(lo, min(lo + chunk, got))
        x0, x1, x2, r = cfg["x0"][sl], cfg["x1"][sl], cfg["x2"][sl], cfg["r"][sl]
        c2 = np.empty_like(x0)
        rad2 = np.empty(len(x0))
        for i in range(len(x0)):
            c2[i], rad2[i] = apollonius_ball(x0[i], x2[i], r[i])
        scale = rng.uniform(0.8, 1.6, (len(x0), points))
        y = c2[:, None, :] + (rad2[:, None] * scale)[..., None] * _unit(rng, len(x0) * points).reshape(
            len(x0), points, 2)
        d0 = np.linalg.norm(y - x0[:, None], axis=-1)
        premise = r[:, None] * np.linalg.norm(y - x2[:, None], axis=-1) <= d0
        concl = r[:, None] * np.linalg.norm(y - x1[:, None], axis=-1) <= d0 + tol
        bad = premise & ~concl
        premise_hits += int(premise.sum())
        res.violations += int(bad.sum())
        if bad.any():
            i, p = np.argwhere(bad)[0]
            res.witnesses.append(_witness(x0=x0[i], x1=x1[i], x2=x2[i], r=[r[i]], y=y[i, p]))
    res.samples = got
    res.constants["premise_points"] = premise_hits
    res.seconds = time.perf_counter() - t0
    return res


def check_cone_in_whitney(curves, k: ConstantPack, n: int, rng, tol: float = 1e-9) -> CheckResult:
    """Points of the cone ``U_gamma^j`` lie in ``W_{gamma,0}``."""
    t0 = time.perf_counter()
    res = CheckResult("cone_inside_whitney", 0, 0)
    for curve, m in zip(curves, _split(n, len(curves))):
        if m == 0:
            continue
        span = max(float(np.ptp(curve.samples, axis=0).max()), 1.0)

        def make(rng, b, curve=curve, span=span):
            g = curve.random_points(b, rng)
            j = rng.integers(1, 4, b)
            beta = g + span * np.exp(rng.uniform(-6, 1, b))[:, None] * _unit(rng, b)
            inside = np.array([bool(cone_membership(beta[i], g[i], int(j[i]), k)) for i in range(b)])
            return {"gamma": g, "beta": beta, "j": j}, inside

        cfg, got = _draw(rng, m, make, batch=2048)
        if got == 0:
            continue
        dist = curve.distance(cfg["beta"])[0]
        r = np.linalg.norm(cfg["beta"] - cfg["gamma"], axis=1)
        bad = k.delta1 * r > dist + tol
        res.violations += int(bad.sum())
        if bad.any():
            i = int(np.argmax(bad))
            res.witnesses.append(_witness(gamma=cfg["gamma"][i], beta=cfg["beta"][i], j=[cfg["j"][i]]))
        res.samples += got
    res.seconds = time.perf_counter() - t0
    return res


def _sorted_triples(curve, m, rng, j):
    g = np.stack([curve.random_points(m, rng) for _ in range(3)], axis=1)
    c = g @ BASIS[:, j - 1]
    order = np.argsort(c, axis=1, kind="stable")
    return np.take_along_axis(g, order[..., None], axis=1)


def check_order_triples(curves, k: ConstantPack, n: int, rng, tol: float = 1e-9) -> CheckResult:
    """Ordering along one coordinate is monotone in the others, plus the Apollonius hypothesis."""
    t0 = time.perf_counter()
    res = CheckResult("ordered_triples", 0, 0, constants={"delta1": k.delta1})
    for curve, m in zip(curves, _split(n, len(curves))):
        if m == 0 or len(curve) < 2:
            continue
        for j in (1, 2, 3):
            mj = _split(m, 3)[j - 1]
            g = _sorted_triples(curve, mj, rng, j)
            a, b, c = g[:, 0], g[:, 1], g[:, 2]
            mono = np.ones(mj, bool)
            for i in (1, 2, 3):
                ca, cb, cc = (coordinate(v, i) for v in (a, b, c))
                up = (ca <= cb + tol) & (cb <= cc + tol)
                down = (cc <= cb + tol) & (cb <= ca + tol)
                mono &= up | down
            gap = np.linalg.norm(c - a, axis=1) - np.linalg.norm(b - a, axis=1)
            apol = k.delta1 * np.linalg.norm(c - b, axis=1) <= gap + tol
            bad = ~(mono & apol)
            res.violations += int(bad.sum())
            if bad.any():
                i = int(np.argmax(bad))
                res.witnesses.append(_witness(gamma=a[i], gamma1=b[i], gamma2=c[i], j=[j]))
            res.samples += mj
    res.seconds = time.perf_counter() - t0
    return res


def _beta_near(rng, center, t, b):
    """Points at radius ``t`` times a log-uniform factor in ``[1, 40]``."""
    return center + (t * np.exp(rng.uniform(0, math.log(40), b)))[:, None] * _unit(rng, b)


def check_mesh_cover(curves, k: ConstantPack, n: int, rng, tol: float = 1e-9) -> CheckResult:
    """``W_{g'',t}`` lies in ``W_{g,delta1 t} u W_{g',delta1 t}`` for ``g''`` between nearby ``g, g'``."""
    t0 = time.perf_counter()
    res = CheckResult("mesh_cover", 0, 0, constants={"mesh": k.mesh})
    for curve, m in zip(curves, _split(n, len(curves))):
        if m == 0 or len(curve) < 2:
            continue

        def make(rng, b, curve=curve):
            j = int(rng.integers(1, 4))
            _, coords = curve._coords_in(j)
            t = np.exp(rng.uniform(-4, 1, b)) * max(float(np.ptp(coords)), 1.0) / 4
            gj = rng.uniform(coords[0], coords[-1], b)
            g1j = np.minimum(gj + k.mesh * t * rng.random(b), coords[-1])
            g2j = gj + (g1j - gj) * rng.random(b)
            g, g1, g2 = (curve.at_coordinate(v, j) for v in (gj, g1j, g2j))
            beta = _beta_near(rng, g2, t, b)
            dist = curve.distance(beta)[0]
            ok = _whitney_strict(beta, g2, t, dist, k, tol) & (np.linalg.norm(g1 - g, axis=1) > 0)
            return {"gamma": g, "gamma1": g1, "gamma2": g2, "t": t, "beta": beta, "dist": dist}, ok

        cfg, got = _draw(rng, m, make)
        if got == 0:
            continue
        bt, dist = cfg["beta"], cfg["dist"]
        t = cfg["t"]
        cover = (_whitney(bt, cfg["gamma"], k.delta1 * t, dist, k, tol)
                 | _whitney(bt, cfg["gamma1"], k.delta1 * t, dist, k, tol))
        bad = ~cover
        res.violations += int(bad.sum())
        if bad.any():
            i = int(np.argmax(bad))
            res.witnesses.append(_witness(**{key: v[i] for key, v in cfg.items()}))
        res.samples += got
    res.seconds = time.perf_counter() - t0
    return res


def check_separation(curves, k: ConstantPack, n: int, rng, tol: float = 1e-9) -> CheckResult:
    """``|beta_j - beta'_j| >= rho (d(beta) + d(beta'))`` under the separation hypotheses."""
    t0 = time.perf_counter()
    res = CheckResult("frequency_separation", 0, 0, constants={"rho": k.rho})
    worst = math.inf
    for curve, m in zip(curves, _split(n, len(curves))):
        if m == 0 or len(curve) < 2:
            continue

        def make(rng, b, curve=curve):
            j = int(rng.integers(1, 4))
            _, coords = curve._coords_in(j)
            span = max(float(np.ptp(coords)), 1e-12)
            gj = rng.uniform(coords[0], coords[-1], b)
            g1j = np.minimum(gj + span * rng.random(b) ** 2, coords[-1])
            g, g1 = curve.at_coordinate(gj, j), curve.at_coordinate(g1j, j)
            t = np.exp(rng.uniform(-5, 0, b)) * span
            beta = _beta_near(rng, g, t, b)
            beta1 = g1 + (t * np.exp(rng.uniform(-3, 3, b)))[:, None] * _unit(rng, b)
            d = curve.distance(beta)[0]
            d1 = curve.distance(beta1)[0]
            bj, b1j = coordinate(beta, j), coordinate(beta1, j)
            offcone = np.abs((beta - g) @ BASIS[:, j - 1]) > k.delta2 * np.linalg.norm(beta - g, axis=1) + tol
            r1 = np.linalg.norm(beta1 - g, axis=1)
            not_w = (r1 < k.delta1 * t - tol) | (k.delta1 * r1 > d1 + tol)
            ok = (_whitney_strict(beta, g, t, d, k, tol) & offcone
                  & _whitney_strict(beta1, g1, 0.0, d1, k, tol) & not_w
                  & (bj < coordinate(g, j) - tol) & (coordinate(g, j) < g1j - tol))
            return {"gamma": g, "gamma1": g1, "t": t, "beta": beta, "beta1": beta1, "d": d, "d1": d1,
                    "gap": np.abs(bj - b1j), "j": np.full(b, j)}, ok

        cfg, got = _draw(rng, m, make)
        if got == 0:
            continue
        need = k.rho * (cfg["d"] + cfg["d1"])
        bad = cfg["gap"] < need - tol
        res.violations += int(bad.sum())
        if bad.any():
            i = int(np.argmax(bad))
            res.witnesses.append(_witness(**{key: v[i] for key, v in cfg.items()}))
        pos = need > 0
        if pos.any():
            worst = min(worst, float((cfg["gap"][pos] / need[pos]).min()))
        res.samples += got
    res.constants["min_gap_ratio"] = worst
    res.seconds = time.perf_counter() - t0
    return res


def run_geometry_checks(k: ConstantPack, n: int, rng, base: SingularCurve | None = None,
                        curves: int = 8, apollonius_points: int = 10_000, tol: float = 1e-9) -> list:
    family = curve_family(rng, k.theta0, curves, base)
    return [
        check_projection_bound(family, k, n, rng, tol),
        check_apollonius(n, rng, apollonius_points, tol),
        check_cone_in_whitney(family, k, n, rng, tol),
        check_order_triples(family, k, n, rng, tol),
        check_mesh_cover(family, k, n, rng, tol),
        check_separation(family, k, n, rng, tol),
    ]
