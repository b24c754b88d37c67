import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from oracles import PHI_SOBOLEV_125, phi_sobolev_hankel
from tentfield.bumps import big_phi
from tentfield.geometry import GeometryError, PlaneGrid, line_curve
from tentfield.multiplier import (
    beta_samples, builtin, grid_multiplier, hormander_norm, localize, normalized, random_multiplier,
    sobolev_norm, window_grid,
)

CURVE = line_curve(3, 0.1, half_length=100, n=9)


def test_builtins_values():
    y = np.array([[0.5, 0.2], [-0.3, 1.0], [0.0, 2.0]])
    assert np.all(builtin("one")(y) == 1) and np.all(builtin("zero")(y) == 0)
    assert list(builtin("bht_sign")(y).real) == [1.0, -1.0, 0.0]
    lip = builtin("lip_difference")(y)
    assert np.allclose(np.abs(lip[:2]), 1.0) and lip[2] == 0
    pm = builtin("point_mikhlin", {"exponent": 2})(np.array([[0.0, 1.0]]))
    assert np.isclose(pm[0], -1.0)
    with pytest.raises(ValueError):
        builtin("nope")
    with pytest.raises(ValueError):
        builtin("lip_difference", {"profile": {"kind": "nope"}})


def test_random_multiplier_reproducible():
    y = np.random.default_rng(0).normal(size=(20, 2))
    assert np.array_equal(random_multiplier(4)(y), random_multiplier(4)(y))
    assert not np.allclose(random_multiplier(4)(y), random_multiplier(5)(y))


def test_spec_transforms():
    m = builtin("lip_difference")
    y = np.array([[0.3, 0.7], [1.2, -0.4]])
    assert np.allclose(m.scaled(2j)(y), 2j * m(y))
    assert np.allclose(m.translated([0.1, 0.0])(y), m(y - [0.1, 0.0]))
    assert np.allclose(m.dilated(3.0)(y), m(y / 3.0))


def test_grid_multiplier_bilinear():
    g = PlaneGrid.uniform((0.0, 0.0), (1.0, 1.0), 8)
    P = g.points
    m = grid_multiplier(g, 2 * P[:, 0] - P[:, 1] + 1j)
    y = np.array([[0.1, -0.2], [0.33, 0.5]])
    assert np.allclose(m(y), 2 * y[:, 0] - y[:, 1] + 1j)
    assert m(np.array([[5.0, 5.0]]))[0] == 0
    with pytest.raises(ValueError):
        grid_multiplier(g, np.full(64, np.nan))


def test_sobolev_zero_is_parseval():
    rng = np.random.default_rng(2)
    g = rng.normal(size=(32, 32)) + 1j * rng.normal(size=(32, 32))
    h = 0.03
    assert math.isclose(sobolev_norm(g, h, 0.0), math.sqrt(h * h * np.sum(np.abs(g) ** 2)), rel_tol=1e-12)


@pytest.mark.parametrize("s", [0.5, 1.25, 2.0])
def test_sobolev_gaussian_closed_form(s):
    sigma, h, n = 0.1, 0.01, 160
    t = (np.arange(n) - n / 2 + 0.5) * h
    y = np.stack(np.meshgrid(t, t, indexing="ij"), -1)
    g = np.exp(-np.pi * np.sum(y ** 2, -1) / sigma ** 2)
    # |g^(rho)|^2 = sigma^4 exp(-2 pi sigma^2 rho^2), radial integral
    ref = math.sqrt(quad(lambda r: (1 + r * r) ** s * sigma ** 4 * math.exp(-2 * math.pi * sigma ** 2 * r * r)
                         * 2 * math.pi * r, 0, np.inf)[0])
    assert math.isclose(sobolev_norm(g, h, s), ref, rel_tol=1e-8)


def test_window_phi_norm_against_hankel_oracle():
    y, h = window_grid(256)
    fft_route = sobolev_norm(big_phi(y), h, 1.25)
    assert abs(fft_route - PHI_SOBOLEV_125) / PHI_SOBOLEV_125 < 1e-4
    assert abs(phi_sobolev_hankel(1.25) - PHI_SOBOLEV_125) < 1e-4


def test_hormander_norm_of_one_is_beta_independent():
    betas = beta_samples(CURVE, levels=2, directions=8, centers=CURVE.samples[4:5])
    sup, _, vals = hormander_norm(builtin("one"), CURVE, 1.25, betas)
    assert np.ptp(vals) / sup < 1e-12
    assert abs(sup - PHI_SOBOLEV_125) / PHI_SOBOLEV_125 < 1e-3


@settings(max_examples=10, deadline=None)
@given(st.floats(0.1, 10.0), st.integers(0, 1000))
def test_hormander_norm_dilation_invariant(lam, seed):
    m = random_multiplier(seed)
    betas = beta_samples(CURVE, levels=1, directions=4, centers=CURVE.samples[4:5])
    a = hormander_norm(m, CURVE, 1.25, betas, n=32)[0]
    b = hormander_norm(m.dilated(lam), CURVE.scaled(lam), 1.25, lam * betas, n=32)[0]
    assert math.isclose(a, b, rel_tol=1e-9)


@settings(max_examples=10, deadline=None)
@given(st.complex_numbers(min_magnitude=1e-3, max_magnitude=1e3, allow_nan=False, allow_infinity=False))
def test_hormander_norm_homogeneous(c):
    m = builtin("lip_difference")
    betas = beta_samples(CURVE, levels=1, directions=4, centers=CURVE.samples[4:5])
    a = hormander_norm(m, CURVE, 1.25, betas, n=32)[0]
    assert math.isclose(hormander_norm(m.scaled(c), CURVE, 1.25, betas, n=32)[0], abs(c) * a, rel_tol=1e-9)


def test_normalized_has_unit_norm():
    betas = beta_samples(CURVE, levels=1, directions=6, centers=CURVE.samples[4:5])
    m = normalized(random_multiplier(3), CURVE, 1.25, betas, n=32)
    assert math.isclose(hormander_norm(m, CURVE, 1.25, betas, n=32)[0], 1.0, rel_tol=1e-12)
    with pytest.raises(ValueError):
        normalized(builtin("zero"), CURVE, 1.25, betas, n=32)


def test_beta_samples_avoid_curve():
    pts = beta_samples(CURVE, levels=2, directions=8)
    assert np.all(CURVE.distance(pts)[0] > 0)
    assert len(beta_samples(CURVE, levels=2, directions=8, centers=CURVE.samples[:1])) == 5 * 8
    with pytest.raises(GeometryError):
        localize(builtin("one"), CURVE.samples[3], CURVE)
    with pytest.raises(GeometryError):
        hormander_norm(builtin("one"), CURVE, 1.25, np.zeros((0, 2)))
