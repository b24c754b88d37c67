"""PNG figures for suite tables, drawn with matplotlib's Agg backend."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _col(rows, key):
    return np.array([r[key] for r in rows], float)


def _bessel(ax, rows):
    lam, tot = _col(rows, "lambda"), _col(rows, "sum_length")
    ax.loglog(lam, tot, "o-", label="sum of tent lengths")
    ax.loglog(lam, tot[0] * (lam / lam[0]) ** -2, "--", label="slope -2")
    ax.set_xlabel("lambda")
    ax.legend()


def _annuli(ax, rows):
    k = _col(rows, "k")
    ax.semilogy(k + np.random.default_rng(0).uniform(-0.1, 0.1, len(k)), _col(rows, "contribution"), ".",
                alpha=0.3, label="tent contributions")
    kk = np.unique(k)
    env = np.array([next(r["envelope"] for r in rows if r["k"] == q) for q in kk])
    c = max(r["ratio"] for r in rows)
    ax.semilogy(kk, c * env, "k-", label="c (1+k) 2^{k(1-s)}")
    ax.set_xlabel("annulus k")
    ax.legend()


def _refinement(ax, rows):
    ax.plot(_col(rows, "level"), _col(rows, "sup"), "o-")
    ax.set_xlabel("refinement level")
    ax.set_ylabel("sup of localized norms")


def _weak(ax, rows):
    for lvl in sorted({r["level"] for r in rows}):
        sub = [r for r in rows if r["level"] == lvl]
        ax.semilogx(_col(sub, "a1") / _col(sub, "a2"), _col(sub, "ratio"), "o", label=f"grid level {lvl}")
    ax.set_xlabel("a1 / a2")
    ax.set_ylabel("normalized ratio")
    ax.legend()


def _levels(ax, rows):
    ax.semilogy(_col(rows, "v_grid"), _col(rows, "rel_error"), "o-")
    ax.set_xlabel("V-grid points per side")
    ax.set_ylabel("relative error")


def _kernel(ax, rows):
    for lvl in sorted({r["level"] for r in rows}):
        sub = [r for r in rows if r["level"] == lvl]
        ax.plot(_col(sub, "seed"), _col(sub, "max_ratio"), "o", label=f"nodes {sub[0]['nodes']}")
    ax.set_xlabel("multiplier seed")
    ax.set_ylabel("max kernel ratio")
    ax.legend()


PLOTTERS = {
    ("bessel", "sweep"): _bessel,
    ("form_compare", "annuli"): _annuli,
    ("form_compare", "levels"): _levels,
    ("hormander_norm", "refinement"): _refinement,
    ("hormander_norm", "kernel_condition"): _kernel,
    ("weak_type_scan", "ratios"): _weak,
}


def render_figures(report, out_dir) -> list:
    """One PNG per table with a known layout; returns the written paths."""
    out = Path(out_dir)
    paths = []
    for name, rows in sorted(report.tables.items()):
        draw = PLOTTERS.get((report.suite, name))
        if draw is None or not rows:
            continue
        fig, ax = plt.subplots(figsize=(5, 3.5))
        draw(ax, rows)
        ax.set_title(f"{report.suite}: {name}")
        fig.tight_layout()
        p = out / f"{report.suite}_{name}.png"
        fig.savefig(p, dpi=100, metadata={"Software": None})
        plt.close(fig)
        paths.append(p)
    return paths
