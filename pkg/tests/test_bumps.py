import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from tentfield.bumps import (
    ETA_MASS, AlphaGrid, BumpProfile, ConfigurationError, Field, GridMeasure, GridNormalizer,
    QuadratureNormalizer, TentLattice, big_phi, embed, embedding_l2_ratio, eta, eta_cdf, eta_tilde,
    global_size, local_size, pairing, region_masks, rows_in, wave_packet,
)
from tentfield.geometry import PlaneGrid, coordinate, derive_constants, line_curve

K = derive_constants(0.1)


def _raw(x):
    return math.exp(-1.0 / (1.0 - x * x)) if abs(x) < 1 else 0.0


def test_eta_mass_against_quadrature():
    ref, _ = quad(_raw, -1, 1, epsabs=1e-15, epsrel=1e-13)
    assert math.isclose(ETA_MASS, ref, rel_tol=1e-12)
    assert math.isclose(ETA_MASS, 0.4439938161680794, rel_tol=1e-12)


@pytest.mark.parametrize("x", [-0.9, -0.3, 0.0, 0.25, 0.7])
def test_eta_cdf_against_quadrature(x):
    ref = quad(_raw, -1, x, epsabs=1e-15)[0] / ETA_MASS
    assert abs(eta_cdf(x) - ref) < 1e-10


def test_eta_tilde_plateau_and_support():
    assert eta_tilde(0.0) == 1.0 and eta_tilde(0.14) == 1.0
    assert eta_tilde(0.16) == 0.0 and eta_tilde(3.0) == 0.0
    assert math.isclose(eta_tilde(0.15), 0.5, abs_tol=1e-12)
    r = np.linspace(0.13, 0.17, 401)
    assert np.all(np.diff(eta_tilde(r)) <= 1e-15)
    assert np.allclose(eta_tilde(-r), eta_tilde(r))
    assert big_phi(np.array([0.1, 0.0])) == 1.0 and big_phi(np.array([0.0, 0.2])) == 0.0


def test_eta_even_and_normalized():
    x = np.linspace(-1, 1, 20001)
    assert np.allclose(eta(x), eta(-x))
    assert math.isclose(float(np.sum(eta(x)) * (x[1] - x[0])), 1.0, rel_tol=1e-9)


@pytest.mark.parametrize("x", [0.0, 0.7, 3.1, 11.0])
def test_phi_against_quadrature(x):
    b = BumpProfile(0.5)
    r = 0.32 * b.eps
    ref = 2 * quad(lambda xi: b.phi_hat(xi) * math.cos(2 * math.pi * x * xi), 0, r,
                   points=[0.28 * b.eps, 0.3 * b.eps], limit=200, epsabs=1e-13)[0]
    assert abs(b.phi(x) - ref) < 1e-9


def test_phi_l2_by_parseval():
    b = BumpProfile(0.5)
    x = np.linspace(-b.phi_range, b.phi_range, 200001)
    spatial = math.sqrt(float(np.sum(b.phi(x) ** 2)) * (x[1] - x[0]))
    assert math.isclose(spatial, b.phi_l2, rel_tol=1e-6)
    assert b.phi_l1 >= 1.0 - 1e-6  # phi^(0) = 1 bounds the L1 norm


def test_bump_profile_validation():
    with pytest.raises(ConfigurationError):
        BumpProfile(0.0)
    with pytest.raises(ConfigurationError):
        BumpProfile(0.5, resolution=8)


def _setup(nv=6, n=256):
    curve = line_curve(3, 0.1, half_length=60, n=3)
    meas = GridMeasure(PlaneGrid.uniform((3.0, 0.0), (1.0, 1.0), nv), curve)
    return curve, meas, AlphaGrid(n, 0.5, -64.0)


def test_grid_measure_weights():
    curve, meas, _ = _setup()
    assert meas.active.all()
    assert np.allclose(meas.weights, meas.areas / meas.dist ** 2)
    near = GridMeasure(PlaneGrid.uniform((0.0, 0.0), (1.0, 1.0), 4), curve)
    assert not near.active.all() and np.all(near.weights[~near.active] == 0)


def test_embedding_matches_wave_packet_pairing():
    # spacing fine enough that every window (width ~0.16 d) sits inside the band
    curve, meas, _ = _setup()
    alpha = AlphaGrid(1024, 0.125, -64.0)
    b = BumpProfile(0.5)
    rng = np.random.default_rng(1)
    f = np.exp(-((alpha.x - 3.0) / 6) ** 2) * np.exp(2j * np.pi * 0.5 * alpha.x) + 0.1 * rng.normal(size=alpha.n)
    F = embed(f, 3, meas, alpha, b)
    for row, cell in [(400, 3), (512, 20), (560, 35)]:
        wp = wave_packet(alpha.x[row], meas.points[cell], 3, curve, b, alpha)
        # the packet route inverts phi_hat by quadrature, good to a few 1e-6
        assert abs(F.values[row, cell] - pairing(f, wp, alpha)) < 1e-5 * abs(F.values[row, cell])


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False))
def test_embedding_is_linear(seed, c):
    curve, meas, alpha = _setup(nv=3, n=64)
    b = BumpProfile(0.5)
    rng = np.random.default_rng(seed)
    f, g = rng.normal(size=(2, alpha.n))
    lhs = embed(c * f + g, 2, meas, alpha, b).values
    rhs = c * embed(f, 2, meas, alpha, b).values + embed(g, 2, meas, alpha, b).values
    assert np.allclose(lhs, rhs, atol=1e-10 * (1 + abs(c)))


def test_normalizers_agree_on_fine_grid():
    curve = line_curve(3, 0.1, half_length=60, n=3)
    b = BumpProfile(0.5)
    meas = GridMeasure(PlaneGrid.uniform((4.0, 0.0), (1.5, 1.5), 120), curve)
    grid, q = GridNormalizer(meas, b), QuadratureNormalizer(curve, b)
    x = np.array([[4.0, 0.0], [3.6, 0.4], [4.3, -0.5]])
    assert np.allclose(grid(x), q(x), rtol=2e-3)


def test_rows_in_closed_interval():
    alpha = AlphaGrid(10, 1.0, 0.0)
    s = rows_in(alpha, 2.0, 5.0)
    assert (s.start, s.stop) == (2, 6)
    s = rows_in(alpha, 2.5, 2.7)
    assert s.stop == s.start


def test_local_size_parts_and_masks():
    curve, meas, alpha = _setup()
    F = embed(np.cos(alpha.x), 3, meas, alpha, BumpProfile(0.5))
    gamma = curve.at_coordinate(0.0)
    l2, sup = local_size(F, -10.0, 10.0, gamma, 0.1, curve, K, parts=True)
    assert local_size(F, -10.0, 10.0, gamma, 0.1, curve, K) == max(l2, sup)
    m = region_masks(meas, gamma, 0.1, K, 3)
    on_line = meas.coord(3) == coordinate(gamma, 3)
    assert np.array_equal(m["WU"], m["<"] | m[">"] | (m["WU"] & on_line))
    assert not (m["<"] & m[">"]).any() and not (m["WU"] & ~m["W"]).any()
    zero = F.with_mask(np.zeros(F.values.shape, bool))
    assert local_size(zero, -10.0, 10.0, gamma, 0.1, curve, K) == 0.0


def test_lattice_and_global_size():
    curve, meas, alpha = _setup()
    lat = TentLattice.build(alpha, curve, levels=4, n_gamma=5, span=(-10, 10))
    lengths = {hi - lo for _, lo, hi in lat.intervals(alpha)}
    assert sorted(lengths) == [alpha.length / 8, alpha.length / 4, alpha.length / 2, alpha.length]
    assert lat.count(alpha) == len(list(lat.intervals(alpha))) * 5
    F = embed(np.cos(alpha.x), 3, meas, alpha, BumpProfile(0.5))
    g = global_size(F, lat, curve, K)
    assert g >= local_size(F, alpha.x0 - 0.5 * alpha.h, alpha.x0 - 0.5 * alpha.h + alpha.length,
                           lat.gammas[0], 1.0 / alpha.length, curve, K) - 1e-12
    assert math.isclose(global_size(Field(2 * F.values, alpha, meas, 3), lat, curve, K), 2 * g)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 10))
def test_embedding_ratio_scale_invariant(seed, c):
    curve, meas, alpha = _setup(nv=4, n=128)
    b = BumpProfile(0.5)
    f = np.random.default_rng(seed).normal(size=alpha.n)
    gam = curve.at_coordinate(np.linspace(-5, 5, 3))
    r1 = embedding_l2_ratio(embed(f, 3, meas, alpha, b), f, gam, K)
    r2 = embedding_l2_ratio(embed(c * f, 3, meas, alpha, b), c * f, gam, K)
    assert math.isclose(r1, r2, rel_tol=1e-9)


def test_field_shape_checked():
    curve, meas, alpha = _setup()
    with pytest.raises(ValueError):
        Field(np.zeros((3, 3)), alpha, meas, 1)


def test_embedding_sup_bound_needs_phi_l1():
    curve, meas, _ = _setup()
    alpha = AlphaGrid(1024, 0.125, -64.0)
    b = BumpProfile(0.5)
    rng = np.random.default_rng(4)
    f = np.exp(2j * np.pi * rng.random(alpha.n))
    F = embed(f, 2, meas, alpha, b)
    assert np.abs(F.values).max() <= b.phi_l1 * (1 + 1e-6)
    # unimodular f aligned with one packet attains the L1 norm of phi, above 1
    wp = wave_packet(alpha.x[512], meas.points[20], 2, curve, b, alpha)
    g = np.exp(-1j * np.angle(wp))
    top = abs(embed(g, 2, meas, alpha, b).values[512, 20])
    assert math.isclose(top, b.phi_l1, rel_tol=1e-3) and top > 2.0


def test_global_size_stable_under_refinement():
    curve = line_curve(3, 0.1, half_length=60, n=3)
    b = BumpProfile(0.5)
    ratios = []
    for level in range(2):
        alpha = AlphaGrid(256 * 2 ** level, 0.5 / 2 ** level, -64.0)
        meas = GridMeasure(PlaneGrid.uniform((3.0, 0.0), (1.0, 1.0), 6 * 2 ** level), curve)
        lat = TentLattice.build(alpha, curve, levels=4, n_gamma=5, span=(-10, 10))
        f = np.cos(0.7 * alpha.x) * (np.abs(alpha.x) < 40)
        ratios.append(global_size(embed(f, 3, meas, alpha, b), lat, curve, K) / np.abs(f).max())
    assert all(np.isfinite(ratios)) and max(ratios) / min(ratios) < 2.0
