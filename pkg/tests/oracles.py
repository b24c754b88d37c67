"""Independent reference computations shared by the tests."""
import math

import mpmath
import numpy as np
from scipy.special import j0

from tentfield.bumps import eta_tilde

# ||Phi||_{H^s} for s = 1.25 from the Hankel route below (rho up to 1200)
PHI_SOBOLEV_125 = 2.6497604546531197
PHI_L2 = 0.2618773028487767


def _gauss_panels(edges, k):
    x, w = np.polynomial.legendre.leggauss(k)
    a, b = edges[:-1], edges[1:]
    return ((0.5 * (a + b))[:, None] + (0.5 * (b - a))[:, None] * x).ravel(), ((0.5 * (b - a))[:, None] * w).ravel()


def phi_sobolev_hankel(s: float, top: float = 600.0) -> float:
    """``||Phi||_{H^s}`` via the radial transform ``2 pi int Phi(r) J0(2 pi rho r) r dr``."""
    r, wr = _gauss_panels(np.linspace(0.0, 0.16, 321), 12)
    g = wr * eta_tilde(r) * r
    rho, wrho = _gauss_panels(np.linspace(0.0, top, int(top) + 1), 6)
    hat = np.concatenate([2 * np.pi * j0(2 * np.pi * np.outer(rho[i:i + 500], r)) @ g
                          for i in range(0, len(rho), 500)])
    return math.sqrt(float(np.sum(wrho * (1 + rho ** 2) ** s * hat ** 2 * 2 * np.pi * rho)))


def constants_mp(theta0=0, dps: int = 40) -> dict:
    """The aperture constants in multiprecision, written out from their definitions."""
    with mpmath.workdps(dps):
        t0 = mpmath.mpf(theta0)
        pi = mpmath.pi
        proj = mpmath.sqrt(6) / 3
        t1 = pi / 18 - t0 / 3
        d0 = proj * mpmath.cos(t0 + pi / 3)
        d1 = mpmath.sin(t1)
        d2 = proj * mpmath.cos(pi / 3 + t0 + t1)
        rho = (d2 - d1) / (1 + d1)
        eps = d1 * rho ** 2 / 2
        return {"theta1": t1, "delta0": d0, "delta1": d1, "delta2": d2, "rho": rho, "eps": eps}
