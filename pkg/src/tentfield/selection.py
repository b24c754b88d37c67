"""Tent selection: the L^inf and L^2 algorithms, the Bessel iteration, verifiers.

Omega is a boolean mask of shape ``(n_alpha, n_cells)`` on the product of
the alpha grid and a :class:`GridMeasure`.  Points are ``(row, cell)``
index pairs; tents are :class:`Tent` objects.  Tent regions
``D_T = I x W_{gamma, 1/|I|}`` are evaluated on the same grid.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np

from .bumps import (AlphaGrid, BumpProfile, Field, GridMeasure, TentLattice, embed,
                    embedding_l2_ratio, global_size, region_masks, rows_in)
from .geometry import BASIS, ConstantPack, SingularCurve, Tent
from .modelform import DegenerateInput, trilinear_direct

#: relative slack for floating point comparisons in region predicates
PREDICATE_TOL = 1e-12


class SelectionError(ValueError):
    pass


def _check_lambda(lam):
    if not (np.isfinite(lam) and lam > 0):
        raise SelectionError(f"threshold must be positive, got {lam}")


# ---------------------------------------------------------------------------
# tent regions on the grid

def _by_interval(tents):
    groups = {}
    for T in tents:
        groups.setdefault((T.lo, T.hi), []).append(T.gamma)
    return groups


def _whitney_any(gammas, pts, dist, lo_r, k: ConstantPack, tol: float, chunk: int = 256):
    """Cells lying in ``W_{gamma, lo_r}`` for at least one of ``gammas``."""
    g = np.unique(np.asarray(gammas, float), axis=0)
    out = np.zeros(len(pts), dtype=bool)
    hi_r = dist / k.delta1 * (1 + tol)
    for a in range(0, len(g), chunk):
        r = np.linalg.norm(pts[None, :, :] - g[a:a + chunk, None, :], axis=-1)
        out |= ((r >= lo_r * (1 - tol)) & (r <= hi_r[None, :])).any(axis=0)
    return out


def cover_mask(tents, F: Field, k: ConstantPack, tol: float = 0.0) -> np.ndarray:
    """Union of ``D_T`` over ``tents`` as a mask on the product grid."""
    out = np.zeros(F.values.shape, dtype=bool)
    meas = F.measure
    for (lo, hi), gammas in _by_interval(tents).items():
        pad = tol * max(abs(lo), abs(hi), hi - lo)
        rows = rows_in(F.alpha, lo - pad, hi + pad)
        if rows.stop > rows.start:
            out[rows] |= _whitney_any(gammas, meas.points, meas.dist, 1.0 / (hi - lo), k, tol)[None, :]
    return out


def _gamma_coord(F: Field, j: int) -> np.ndarray:
    """``gamma(beta)_j`` for every cell."""
    return F.measure.nearest_coord(j)


# ---------------------------------------------------------------------------
# L^inf component

@dataclass
class LinftyResult:
    points: list
    tents: list
    t0: float
    lam: float
    j: int
    M: int
    point_class: list = field(default_factory=list)
    tent_owner: list = field(default_factory=list)

    @property
    def total_length(self) -> float:
        return float(sum(T.length for T in self.tents))

    def to_json(self) -> dict:
        return {
            "kind": "linfty", "lambda": self.lam, "j": self.j, "t0": self.t0, "M": self.M,
            "points": [[int(r), int(c)] for r, c in self.points],
            "point_class": [int(x) for x in self.point_class],
            "tents": [T.to_json() for T in self.tents],
            "tent_owner": [int(x) for x in self.tent_owner],
        }


def select_linfty(omega, F: Field, lam: float, curve: SingularCurve, k: ConstantPack,
                  j: int | None = None, upper: float | None = None) -> LinftyResult:
    """Greedy rectangle packing per scale class, with endpoint tents per strip.

    The level set is ``lam < |F| <= upper`` inside ``omega`` (``upper``
    defaults to ``2 lam``).  Candidates of a class are scanned in
    lexicographic order of ``(alpha, gamma(beta)_j)``.
    """
    _check_lambda(lam)
    j = F.j if j is None else j
    upper = 2 * lam if upper is None else upper
    omega = np.asarray(omega, bool) & F.measure.active[None, :]
    absF = np.abs(F.values)
    level = omega & (absF > lam) & (absF <= upper)
    res = LinftyResult([], [], 0.0, lam, j, k.M)
    if not omega.any():
        return res
    dist = F.measure.dist
    t0 = float(dist[omega.any(axis=0)].min())
    res.t0 = t0
    if not level.any():
        return res
    x = F.alpha.x
    gj = _gamma_coord(F, j)
    covered = np.zeros_like(level)
    cls = np.floor(np.log2(dist / t0)).astype(int)
    # floating point guard: enforce 2^k t0 <= d < 2^{k+1} t0 exactly
    cls = np.where(np.ldexp(t0, cls) > dist, cls - 1, cls)
    cls = np.where(np.ldexp(t0, cls + 1) <= dist, cls + 1, cls)
    mesh = k.mesh
    for kc in range(int(cls[level.any(axis=0)].max()) + 1):
        s = t0 * 2.0 ** kc
        cand = level & ~covered & (cls == kc)[None, :]
        if not cand.any():
            continue
        rows, cells = np.nonzero(cand)
        order = np.lexsort((gj[cells], x[rows]))
        acc_a, acc_g = [], []
        half_t, half_f = 0.5 * k.c_s / s, 0.5 * k.c_f * s
        for o in order:
            a, g = x[rows[o]], gj[cells[o]]
            if acc_a:
                A = np.asarray(acc_a)
                G = np.asarray(acc_g)
                hit = (np.abs(A - a) <= 2 * half_t) & (np.abs(G - g) <= 2 * half_f)
                if hit.any():
                    continue
            acc_a.append(a)
            acc_g.append(g)
            res.points.append((int(rows[o]), int(cells[o])))
            res.point_class.append(kc)
        new = []
        owner0 = len(res.points) - len(acc_a)
        for p, (a, g) in enumerate(zip(acc_a, acc_g)):
            seen = set()
            for i in range(-k.M, k.M + 1):
                ends = curve.strip_endpoints(g + mesh * s * (i - 1), g + mesh * s * i, j)
                if ends is None:
                    continue
                for gam in ends:
                    gam = tuple(float(v) for v in gam)
                    # tents form a set: strips sharing an endpoint give one tent
                    if gam in seen:
                        continue
                    seen.add(gam)
                    new.append(Tent(float(a), k.c / s, gam, origin=f"linfty:k={kc}:i={i}"))
                    res.tent_owner.append(owner0 + p)
        res.tents.extend(new)
        covered |= cover_mask(new, F, k) & level
    return res


# ---------------------------------------------------------------------------
# L^2 component

@dataclass
class Triple:
    lo: float
    hi: float
    gamma: tuple
    rows: np.ndarray
    cells: np.ndarray
    strip: int
    size: float

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def to_json(self) -> dict:
        return {"interval": [self.lo, self.hi], "gamma": list(self.gamma), "strip": self.strip,
                "size": self.size, "cells": [[int(r), int(c)] for r, c in zip(self.rows, self.cells)]}


@dataclass
class L2Result:
    tents: list
    triples: list
    t0: float
    lam: float
    j: int
    side: str
    C: float
    strips: tuple

    @property
    def total_length(self) -> float:
        return float(sum(T.length for T in self.tents))

    def to_json(self) -> dict:
        return {"kind": "l2", "lambda": self.lam, "j": self.j, "side": self.side, "t0": self.t0,
                "C": self.C, "strips": list(self.strips),
                "tents": [T.to_json() for T in self.tents],
                "triples": [t.to_json() for t in self.triples]}


def _side_masks(F: Field, gammas, lengths, k: ConstantPack, j: int, side: str):
    """``{(gamma index, length): half region mask}``."""
    out = {}
    for gi, g in enumerate(gammas):
        for L in lengths:
            out[gi, L] = region_masks(F.measure, g, 1.0 / L, k, j)[side]
    return out


def embedding_constant(F: Field, f_norm: float, gammas, k: ConstantPack, j: int | None = None) -> float:
    """``max_gamma ||F||_{L^2_nu(R x (W_{gamma,0} minus U))} / ||f||`` over ``gammas``."""
    j = F.j if j is None else j
    if f_norm <= 0:
        return 0.0
    e2 = (np.abs(F.values) ** 2).sum(axis=0) * F.alpha.h
    best = 0.0
    for g in gammas:
        wu = region_masks(F.measure, g, 0.0, k, j)["WU"]
        best = max(best, math.sqrt(float(e2[wu] @ F.measure.weights[wu])))
    return best / f_norm


def select_l2(omega, F: Field, lam: float, curve: SingularCurve, k: ConstantPack,
              lattice: TentLattice, f_norm: float, c_emb: float, side: str = "<",
              j: int | None = None, A: float | None = None) -> L2Result:
    """Strip-by-strip Vitali selection of large L^2 tents from a finite lattice.

    ``c_emb`` is an embedding constant; it is raised to the value realised
    by this field on the lattice points if that is larger, which keeps
    ``t0 <= 1/|I|`` for every selected interval.  Strips are processed in
    increasing ``gamma_j`` for ``side='<'`` and decreasing for ``'>'``.
    """
    _check_lambda(lam)
    if not c_emb > 0:
        raise SelectionError("embedding constant must be positive")
    if side not in ("<", ">"):
        raise SelectionError("side must be '<' or '>'")
    j = F.j if j is None else j
    omega = np.asarray(omega, bool) & F.measure.active[None, :]
    gammas = np.asarray(lattice.gammas, float)
    realised = embedding_constant(F, f_norm, gammas, k, j)
    C = max(c_emb, realised)
    res = L2Result([], [], 0.0, lam, j, side, C, ())
    if not omega.any() or f_norm <= 0 or realised == 0:
        # no lattice tent carries off-cone energy, so none can be large
        return res
    t0 = lam * lam / (2 * C * C * f_norm * f_norm)
    if not (t0 > 0 and np.isfinite(t0)):
        raise SelectionError(f"strip scale {t0} is not a positive float; rescale the field")
    res.t0 = t0
    width = k.mesh * t0
    coords = gammas @ BASIS[:, j - 1]
    beta_j = F.measure.coord(j)[omega.any(axis=0)]
    if A is None:
        A = float(max(np.abs(beta_j).max(), np.abs(coords).max()))
    lo = -A
    # half-open strip index for each lattice point: lo + width [s-1, s).
    # Python ints, since tiny thresholds make the count exceed int64
    sidx = np.array([math.floor((cj - lo) / width) + 1 for cj in coords], dtype=object)
    res.strips = (float(lo), float(width), math.floor(2 * A / width) + 2)
    ivals = list(lattice.intervals(F.alpha))
    lengths = sorted({hi - lo_ for _, lo_, hi in ivals})
    masks = _side_masks(F, gammas, lengths, k, j, side)
    absq = np.abs(F.values) ** 2
    nu = F.nu
    cur = omega.copy()
    order = sorted(set(sidx.tolist()))
    sidx_list = sidx.tolist()
    if side == ">":
        order = order[::-1]
    for s in order:
        members = np.array([i for i, v in enumerate(sidx_list) if v == s], dtype=int)
        if members.size == 0:
            continue
        energy = absq * cur
        best = {}
        for gi in members:
            for lvl, a, b in ivals:
                L = b - a
                region = masks[gi, L]
                if not region.any():
                    continue
                rows = rows_in(F.alpha, a, b)
                e = float((energy[rows][:, region] @ nu[region]).sum())
                size = math.sqrt(e / L)
                if size >= lam / math.sqrt(2):
                    key = (a, b)
                    if key not in best or size > best[key][1]:
                        best[key] = (gi, size)
        if not best:
            continue
        # Vitali on 5I: longest first, ties by left end
        chosen = []
        for a, b in sorted(best, key=lambda ab: (-(ab[1] - ab[0]), ab[0])):
            L = b - a
            c0 = 0.5 * (a + b)
            lo5, hi5 = c0 - 2.5 * L, c0 + 2.5 * L
            if any(not (hi5 < l2 or h2 < lo5) for l2, h2 in ((q[2], q[3]) for q in chosen)):
                continue
            chosen.append((a, b, lo5, hi5))
        # rounding can push a member out of its own strip bounds when the width is tiny
        s_lo = min(lo + width * float(s - 1), float(coords[members].min()))
        s_hi = max(lo + width * float(s), float(coords[members].max()))
        ends = curve.strip_endpoints(s_lo, s_hi, j)
        new = []
        for a, b, _, _ in chosen:
            gi, size = best[a, b]
            g = gammas[gi]
            L = b - a
            c0 = 0.5 * (a + b)
            region = masks[gi, L]
            rows = rows_in(F.alpha, a, b)
            sub = np.zeros_like(cur)
            sub[rows] = cur[rows] & region[None, :]
            rr, cc = np.nonzero(sub)
            res.triples.append(Triple(a, b, tuple(float(v) for v in g), rr, cc, s, size))
            if ends is not None:
                for e in {tuple(float(v) for v in e) for e in ends}:
                    new.append(Tent(c0, 25 * L / k.delta1, e, origin=f"l2{side}:strip={s}:end"))
            new.append(Tent(c0, L / k.delta1, tuple(float(v) for v in g), origin=f"l2{side}:strip={s}:own"))
        res.tents.extend(new)
        cur &= ~cover_mask(new, F, k)
    return res


# ---------------------------------------------------------------------------
# Bessel iteration

@dataclass
class BesselResult:
    lam: float
    linfty: list
    left: L2Result | None
    right: L2Result | None
    residual: np.ndarray = field(repr=False, default=None)

    @property
    def tents(self) -> list:
        out = [T for r in self.linfty for T in r.tents]
        for r in (self.left, self.right):
            if r is not None:
                out.extend(r.tents)
        return out

    @property
    def total_length(self) -> float:
        return float(sum(T.length for T in self.tents))

    def parts(self) -> dict:
        return {
            "linfty": float(sum(r.total_length for r in self.linfty)),
            "left": self.left.total_length if self.left else 0.0,
            "right": self.right.total_length if self.right else 0.0,
        }


def bessel(omega, F: Field, lam: float, curve: SingularCurve, k: ConstantPack,
           lattice: TentLattice, f_norm: float, c_emb: float, j: int | None = None,
           A: float | None = None) -> BesselResult:
    """Dyadic L^inf layers, then the two L^2 sides, on the residual set."""
    _check_lambda(lam)
    j = F.j if j is None else j
    omega = np.asarray(omega, bool) & F.measure.active[None, :]
    absF = np.abs(F.values)
    top = float(absF[omega].max()) if omega.any() else 0.0
    layers = []
    n = 1
    while 2.0 ** (n - 1) * lam < top:
        lo_, hi_ = 2.0 ** (n - 1) * lam, 2.0 ** n * lam
        layer = omega & (absF > lo_) & (absF <= hi_)
        if layer.any():
            layers.append(select_linfty(layer, F, lo_, curve, k, j))
        n += 1
    rest = omega & ~cover_mask([T for r in layers for T in r.tents], F, k)
    left = select_l2(rest, F, lam, curve, k, lattice, f_norm, c_emb, "<", j, A)
    rest2 = rest & ~cover_mask(left.tents, F, k)
    right = select_l2(rest2, F, lam, curve, k, lattice, f_norm, c_emb, ">", j, A)
    res = BesselResult(lam, layers, left, right)
    res.residual = omega & ~cover_mask(res.tents, F, k)
    return res


def residual_size(F: Field, residual, lattice: TentLattice, k: ConstantPack, j: int | None = None):
    """Max over the lattice of the tent-local size of ``1_residual F``."""
    j = F.j if j is None else j
    G = F.with_mask(residual)
    absF = np.abs(G.masked)
    absq = absF ** 2
    nu = G.nu
    best = (0.0, None)
    ivals = list(lattice.intervals(F.alpha))
    for gi, g in enumerate(lattice.gammas):
        cache = {}
        for lvl, a, b in ivals:
            L = b - a
            if L not in cache:
                m = region_masks(F.measure, g, 1.0 / L, k, j)
                cache[L] = (m["W"], m["WU"])
            w, wu = cache[L]
            rows = rows_in(F.alpha, a, b)
            sub = absq[rows]
            l2 = math.sqrt(float((sub[:, wu] @ nu[wu]).sum()) / L) if wu.any() else 0.0
            sup = float(absF[rows][:, w].max()) if w.any() and rows.stop > rows.start else 0.0
            v = max(l2, sup)
            if v > best[0]:
                best = (v, {"interval": [a, b], "gamma": g.tolist(), "l2": l2, "sup": sup})
    return best


# ---------------------------------------------------------------------------
# verifiers (recompute every property from the raw definitions)

def _uncovered(tents, alpha, beta, dist, k: ConstantPack, tol: float) -> np.ndarray:
    """Pointwise test of ``(alpha, beta)`` against every ``D_T``; True where no tent holds it."""
    free = np.ones(len(alpha), dtype=bool)
    for (lo, hi), gammas in _by_interval(tents).items():
        pad = tol * max(abs(lo), abs(hi), hi - lo)
        sel = np.nonzero(free & (alpha >= lo - pad) & (alpha <= hi + pad))[0]
        if sel.size == 0:
            continue
        g = np.unique(np.asarray(gammas, float), axis=0)
        for a in range(0, len(g), 256):
            r = np.linalg.norm(beta[sel][None, :, :] - g[a:a + 256, None, :], axis=-1)
            inside = ((r >= (1.0 / (hi - lo)) * (1 - tol))
                      & (r <= dist[sel][None, :] / k.delta1 * (1 + tol))).any(axis=0)
            free[sel[inside]] = False
            sel = sel[~inside]
            if sel.size == 0:
                break
    return free


def verify_linfty(res: LinftyResult, omega, F: Field, curve: SingularCurve, k: ConstantPack,
                  tol: float = PREDICATE_TOL) -> list:
    """Violations of covering, two-sided estimate and orthogonality."""
    out = []
    lam = res.lam
    omega = np.asarray(omega, bool) & F.measure.active[None, :]
    absF = np.abs(F.values)
    level = omega & (absF > lam) & (absF <= 2 * lam)
    x = F.alpha.x
    pts = F.measure.points
    dist = F.measure.dist
    j = res.j
    # points lie in the level set
    for r, c in res.points:
        if not level[r, c]:
            out.append({"property": "points_in_level_set", "witness": {"point": [r, c]}})
    # covering
    rows, cells = np.nonzero(level)
    a, b, d = x[rows], pts[cells], dist[cells]
    hit = ~_uncovered(res.tents, a, b, d, k, tol)
    for p in np.nonzero(~hit)[0][:10]:
        out.append({"property": "covering", "witness": {"point": [int(rows[p]), int(cells[p])],
                                                         "alpha": float(a[p]), "beta": b[p].tolist()}})
    # estimate: c sum 1/d <= sum |I| <= 2(2M+1) 2c sum 1/d, and sum 1/d <= sum |F|^2/(d lam^2)
    if res.points:
        pr = np.array([p[0] for p in res.points])
        pc = np.array([p[1] for p in res.points])
        inv = float(np.sum(1.0 / dist[pc]))
        tot = res.total_length
        lower, upper = k.c * inv, 2 * (2 * k.M + 1) * 2 * k.c * inv
        if not (lower * (1 - tol) <= tot <= upper * (1 + tol)):
            out.append({"property": "estimate", "witness": {"sum_I": tot, "lower": lower, "upper": upper}})
        energy = float(np.sum(absF[pr, pc] ** 2 / dist[pc])) / lam ** 2
        if inv > energy * (1 + tol):
            out.append({"property": "estimate_energy", "witness": {"sum_inv_d": inv, "energy": energy}})
        # orthogonality
        al = x[pr]
        bj = pts[pc] @ BASIS[:, j - 1]
        dd = dist[pc]
        inv_d = 1.0 / dd
        t_ok = np.abs(al[:, None] - al[None, :]) >= 2 * (inv_d[:, None] + inv_d[None, :]) * (1 - tol)
        f_ok = np.abs(bj[:, None] - bj[None, :]) >= k.rho * (dd[:, None] + dd[None, :]) * (1 - tol)
        bad = ~(t_ok | f_ok)
        np.fill_diagonal(bad, False)
        for p, q in np.argwhere(np.triu(bad))[:10]:
            out.append({"property": "orthogonality", "witness": {"pair": [res.points[p], res.points[q]]}})
    elif not res.tents and level.any():
        pass  # covered by the covering check above
    return out


def verify_l2(res: L2Result, omega, F: Field, curve: SingularCurve, k: ConstantPack,
              lattice: TentLattice, tol: float = PREDICATE_TOL) -> list:
    out = []
    lam = res.lam
    j = res.j
    omega = np.asarray(omega, bool) & F.measure.active[None, :]
    x = F.alpha.x
    pts = F.measure.points
    dist = F.measure.dist
    nu = F.nu
    absq = np.abs(F.values) ** 2
    # covering on the lattice, for the residual set
    resid = omega & ~cover_mask(res.tents, F, k, tol=-tol)
    energy = absq * resid
    for gi, g in enumerate(lattice.gammas):
        cache = {}
        for lvl, a, b in lattice.intervals(F.alpha):
            L = b - a
            if L not in cache:
                cache[L] = region_masks(F.measure, g, 1.0 / L, k, j)[res.side]
            region = cache[L]
            if not region.any():
                continue
            rows = rows_in(F.alpha, a, b)
            size = math.sqrt(float((energy[rows][:, region] @ nu[region]).sum()) / L)
            if size > lam / math.sqrt(2) * (1 + tol):
                out.append({"property": "covering", "witness": {"interval": [a, b], "gamma": g.tolist(),
                                                                 "size": size}})
    # estimate: (1/delta1) sum_S |I| <= sum_T |I| <= (51/delta1) sum_S |I|
    # and sum_S |I| <= 2 sum ||F||_S^2 / lam^2
    sS = float(sum(t.length for t in res.triples))
    sT = res.total_length
    lower, upper = sS / k.delta1, 51.0 / k.delta1 * sS
    if not (lower * (1 - tol) <= sT <= upper * (1 + tol)):
        out.append({"property": "estimate", "witness": {"sum_T": sT, "lower": lower, "upper": upper}})
    e = 0.0
    for t in res.triples:
        es = float(np.sum(absq[t.rows, t.cells] * nu[t.cells]))
        e += es
        if es < (lam * lam / 2) * t.length * (1 - tol):
            out.append({"property": "triple_size", "witness": {"interval": [t.lo, t.hi], "energy": es}})
        # S inside Omega, I and the half region
        g = np.asarray(t.gamma)
        region = region_masks(F.measure, g, 1.0 / t.length, k, j)[res.side]
        if t.rows.size and (not omega[t.rows, t.cells].all() or not region[t.cells].all()
                            or np.any(x[t.rows] < t.lo) or np.any(x[t.rows] > t.hi)):
            out.append({"property": "triple_region", "witness": {"interval": [t.lo, t.hi]}})
    if sS > 2 * e / lam ** 2 * (1 + tol):
        out.append({"property": "estimate_energy", "witness": {"sum_S": sS, "bound": 2 * e / lam ** 2}})
    # orthogonality across distinct triples
    n_alpha = F.values.shape[0]
    bj_all = pts @ BASIS[:, j - 1]
    for p, tp in enumerate(res.triples):
        for q, tq in enumerate(res.triples):
            if p == q or tp.rows.size == 0 or tq.rows.size == 0:
                continue
            gp = float(np.asarray(tp.gamma) @ BASIS[:, j - 1])
            gq = float(np.asarray(tq.gamma) @ BASIS[:, j - 1])
            # the first triple is the one with the smaller gamma_j in the processing order
            if (gp > gq) if res.side == "<" else (gp < gq):
                continue
            if gp == gq and q < p:
                continue
            w = _cross_violation(tp, tq, x, bj_all, dist, k, n_alpha, tol)
            if w is not None:
                out.append({"property": "orthogonality", "witness": w})
    return out


def _cross_violation(tp: Triple, tq: Triple, x, bj, dist, k: ConstantPack, n_alpha: int, tol):
    """A pair (alpha, beta) in S_p, (alpha', beta') in S_q failing both separations, or None."""
    cp, ip = np.unique(tp.cells, return_inverse=True)
    cq, iq = np.unique(tq.cells, return_inverse=True)
    f_bad = np.abs(bj[cp][:, None] - bj[cq][None, :]) < k.rho * (dist[cp][:, None] + dist[cq][None, :]) * (1 - tol)
    if not f_bad.any():
        return None
    Sp = np.zeros((n_alpha, cp.size), dtype=np.int32)
    Sp[tp.rows, ip] = 1
    Sq = np.zeros((n_alpha, cq.size), dtype=np.int32)
    Sq[tq.rows, iq] = 1
    # dilate S_q in alpha by the open radius 2|I_p|
    gap = 2 * tp.length * (1 - tol)
    near = np.abs(x[:, None] - x[None, :]) < gap
    Dq = (near.astype(np.int32) @ Sq) > 0
    both = (Sp.T @ Dq.astype(np.int32)) > 0
    bad = both & f_bad
    if not bad.any():
        return None
    a, b = np.argwhere(bad)[0]
    r = int(np.nonzero(Sp[:, a] & Dq[:, b])[0][0])
    r2 = int(np.nonzero(Sq[:, b] & near[r])[0][0])
    return {"pair": [[r, int(cp[a])], [r2, int(cq[b])]]}


def verify_selection_properties(result, omega, F: Field, curve: SingularCurve, k: ConstantPack,
                                lattice: TentLattice | None = None) -> list:
    """Dispatch on the result type; an empty list means every property holds."""
    if isinstance(result, LinftyResult):
        return verify_linfty(result, omega, F, curve, k)
    if isinstance(result, L2Result):
        if lattice is None:
            raise SelectionError("the L2 covering check needs the test lattice")
        return verify_l2(result, omega, F, curve, k, lattice)
    raise TypeError(f"cannot verify {type(result).__name__}")


# ---------------------------------------------------------------------------
# mutations used to check that the verifiers detect broken outputs

def drop_tent(result, index: int):
    """Copy of ``result`` without its ``index``-th tent."""
    out = copy.copy(result)
    out.tents = result.tents[:index] + result.tents[index + 1:]
    if isinstance(result, LinftyResult):
        out.tent_owner = result.tent_owner[:index] + result.tent_owner[index + 1:]
    return out


def duplicate_point(result, index: int = 0):
    """Copy with the ``index``-th point (or triple) repeated."""
    out = copy.copy(result)
    if isinstance(result, LinftyResult):
        out.points = result.points + [result.points[index]]
        out.point_class = result.point_class + [result.point_class[index]]
    else:
        out.triples = result.triples + [result.triples[index]]
    return out


# ---------------------------------------------------------------------------
# embedding constant

def measure_embedding_constant(measure: GridMeasure, alpha: AlphaGrid, bumps: BumpProfile,
                               gammas, k: ConstantPack, j: int, samples: int = 8, seed: int = 0) -> float:
    """Largest ``||F_j g||_{L^2_nu(W minus U)} / ||g||`` over a batch of random ``g``.

    Complex white noise is used for ``g``; the result lower-bounds the
    true constant and is what the L^2 selection consumes.
    """
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(samples):
        g = rng.normal(size=alpha.n) + 1j * rng.normal(size=alpha.n)
        best = max(best, embedding_l2_ratio(embed(g, j, measure, alpha, bumps), g, gammas, k))
    return best


# ---------------------------------------------------------------------------
# layered decomposition for indicator-type inputs

def dyadic_exponent(x: float) -> int:
    """The integer n with ``2**(n-1) < x <= 2**n``."""
    if not (x > 0 and np.isfinite(x)):
        raise SelectionError(f"dyadic exponent of {x}")
    n = math.ceil(math.log2(x))
    while math.ldexp(1.0, n) < x:
        n += 1
    while math.ldexp(1.0, n - 1) >= x:
        n -= 1
    return n


@dataclass
class StoppingLevel:
    n: int
    lam: float
    omega_points: int
    sizes: list
    sum_length: float
    n_tents: int

    @property
    def contribution(self) -> float:
        return self.sum_length * float(np.prod(self.sizes))

    def to_json(self) -> dict:
        return {"n": self.n, "lambda": self.lam, "omega_points": self.omega_points,
                "sizes": list(self.sizes), "sum_length": self.sum_length, "n_tents": self.n_tents,
                "contribution": self.contribution}


@dataclass
class StoppingReport:
    measures: list
    order: list
    exponents: list
    levels: list
    residual_sizes: list
    direct: float | None

    @property
    def bound_measured(self) -> float:
        return float(sum(l.contribution for l in self.levels))

    @property
    def bound_dyadic(self) -> float:
        """``2^{n_1} (2 + n_2 - n_1)``."""
        n1, n2, _ = self.exponents
        return math.ldexp(2 + n2 - n1, n1)

    @property
    def bound_reference(self) -> float:
        """``a_1^{-1/2} (2 + log(a_1/a_2))``."""
        a1, a2, _ = self.measures
        return a1 ** -0.5 * (2 + math.log(a1 / a2))

    def to_json(self) -> dict:
        return {"measures": self.measures, "order": self.order, "exponents": self.exponents,
                "levels": [l.to_json() for l in self.levels], "residual_sizes": self.residual_sizes,
                "bound_measured": self.bound_measured, "bound_dyadic": self.bound_dyadic,
                "bound_reference": self.bound_reference, "direct": self.direct}


def stopping_time(fs, m, curve: SingularCurve, measure: GridMeasure, alpha: AlphaGrid,
                  bumps: BumpProfile, k: ConstantPack, lattice: TentLattice, levels_below: int = 4,
                  A: float | None = None, c_emb=None, direct: bool = True) -> StoppingReport:
    """Iterated Bessel selection at thresholds ``2^{n-1}``, ``n = n_3, n_3 - 1, ...``.

    ``fs`` are three functions on the alpha grid bounded by indicators of
    sets ``E_j``; they are normalized by ``|E_j|^{1/2}``.  Every level
    selects tents for all three fields on the shared set ``Omega_n`` and
    removes their regions before the next level.  The loop stops
    ``levels_below`` levels under ``n_1`` or when ``Omega_n`` is empty.
    ``A`` truncates the time axis to ``[-A, A]``.
    """
    fs = [np.asarray(f, dtype=complex) for f in fs]
    if len(fs) != 3 or any(f.shape != (alpha.n,) for f in fs):
        raise SelectionError("three functions on the alpha grid are required")
    meas = [alpha.h * int(np.count_nonzero(f)) for f in fs]
    if min(meas) == 0:
        raise DegenerateInput("a set E_j has measure zero")
    if any(np.abs(f).max() > 1 + 1e-12 for f in fs):
        raise SelectionError("inputs must be bounded by indicators")
    order = sorted(range(3), key=lambda i: -meas[i])
    a = [meas[i] for i in order]
    expo = [dyadic_exponent(x ** -0.5) for x in a]
    tilde = [f / math.sqrt(ai) for f, ai in zip(fs, meas)]
    fields = [embed(tilde[i], i + 1, measure, alpha, bumps) for i in range(3)]
    omega = np.zeros(fields[0].values.shape, dtype=bool)
    x = alpha.x
    keep = np.ones(alpha.n, bool) if A is None else np.abs(x) <= A
    omega[keep] = True
    omega &= measure.active[None, :]
    if c_emb is None:
        c_emb = [measure_embedding_constant(measure, alpha, bumps, lattice.gammas, k, i + 1)
                 for i in range(3)]
    c_emb = [c if c > 0 else 1.0 for c in np.broadcast_to(np.asarray(c_emb, float), (3,))]
    norms = [math.sqrt(alpha.h * float(np.sum(np.abs(t) ** 2))) for t in tilde]
    out = []
    for n in range(expo[2], expo[0] - levels_below - 1, -1):
        if not omega.any():
            break
        lam = math.ldexp(1.0, n - 1)
        sizes = [global_size(F.with_mask(omega), lattice, curve, k) for F in fields]
        tents = []
        for i, F in enumerate(fields):
            if sizes[i] <= lam:
                continue
            tents.extend(bessel(omega, F, lam, curve, k, lattice, norms[i], c_emb[i], i + 1, A).tents)
        out.append(StoppingLevel(n, lam, int(omega.sum()), sizes,
                                 float(sum(T.length for T in tents)), len(tents)))
        if tents:
            omega &= ~cover_mask(tents, fields[0], k)
    resid = [global_size(F.with_mask(omega), lattice, curve, k) for F in fields]
    lam_direct = None
    if direct:
        lam_direct = abs(trilinear_direct(m, *tilde, h=alpha.h))
    return StoppingReport(a, order, expo, out, resid, lam_direct)


def interval_indicator(alpha: AlphaGrid, start: int, count: int) -> np.ndarray:
    """Indicator of ``count`` consecutive samples from index ``start``."""
    if count <= 0 or start < 0 or start + count > alpha.n:
        raise SelectionError("interval does not fit on the grid")
    f = np.zeros(alpha.n)
    f[start:start + count] = 1.0
    return f


def weak_type_scan(m, ratios=(1, 4, 16, 64), a2: float = 1.0, a3_fractions=(1.0, 0.25),
                   offsets=(0.0, 0.3, -0.2), h: float = 1.0 / 16, pad: float = 2.0) -> list:
    """``|Lambda(1_E1, 1_E2, 1_E3)| / (a_2^{1/2} a_3^{1/2} (1 + log(a_1/a_2)))`` for interval sets.

    ``E_j`` are intervals of lengths ``a_1 = r a_2``, ``a_2`` and
    ``a_3 = q a_2`` shifted by ``offsets``; lengths and offsets are
    rounded to the grid so that the measures are exact.  The grid spans
    ``pad`` times the largest interval on each side.
    """
    rows = []
    for r in ratios:
        for q in a3_fractions:
            lengths = [r * a2, a2, q * a2]
            if not (lengths[0] >= lengths[1] >= lengths[2] > 0):
                raise SelectionError("need a_1 >= a_2 >= a_3 > 0")
            n = 1 << int(math.ceil(math.log2(2 * pad * lengths[0] / h)))
            alpha = AlphaGrid(n, h, -0.5 * n * h)
            fs = []
            for L, off in zip(lengths, offsets):
                count = max(1, int(round(L / h)))
                start = n // 2 + int(round((off - 0.5 * L) / h))
                fs.append(interval_indicator(alpha, start, count))
            a = [h * np.count_nonzero(f) for f in fs]
            val = abs(trilinear_direct(m, *fs, h=h))
            log_term = math.log(a[0] / a[1])
            denom = math.sqrt(a[1] * a[2]) * (1 + log_term)
            rows.append({"a1": a[0], "a2": a[1], "a3": a[2], "log": log_term, "n": n, "h": h,
                         "abs_lambda": val, "ratio": val / denom})
    return rows
