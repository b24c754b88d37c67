import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tentfield.bumps import AlphaGrid, BumpProfile, GridMeasure, QuadratureNormalizer, TentLattice, embed, global_size
from tentfield.geometry import SQRT3, PlaneGrid, Tent, derive_constants, line_curve, to_ambient
from tentfield.modelform import (
    DegenerateInput, annulus_index, build_kernels, cell_form, cell_form_spectral, envelope,
    kernel_condition_ratio, kernel_from_multiplier, model_form_evaluate, significant_cells,
    tent_estimate_ratio, trilinear_direct,
)
from tentfield.multiplier import builtin, random_multiplier

CURVE = line_curve(3, 0.1, half_length=100, n=3)
BUMPS = BumpProfile(0.5)


def _brute_direct(m, fs, h):
    """Plain double loop over the DFT lattice."""
    N = len(fs[0])
    L = N * h
    k = np.arange(N) - N // 2
    hats = [np.fft.fftshift(h * np.fft.fft(f)) for f in fs]
    total = 0j
    for a, k1 in enumerate(k):
        for b, k2 in enumerate(k):
            k3 = -k1 - k2
            if k[0] <= k3 <= k[-1]:
                # plane coordinates written out, exact on the diagonal k1 = k2
                y = np.array([[(k1 - k2) / math.sqrt(2), (k1 + k2 - 2 * k3) / math.sqrt(6)]]) / L
                total += m(y)[0] * hats[0][a] * hats[1][b] * hats[2][k3 - k[0]]
    return SQRT3 * total / L ** 2


def test_direct_against_double_loop():
    rng = np.random.default_rng(0)
    fs = rng.normal(size=(3, 24)) + 1j * rng.normal(size=(3, 24))
    m = random_multiplier(1)
    assert abs(trilinear_direct(m, *fs, h=0.5, chunk=5) - _brute_direct(m, fs, 0.5)) < 1e-10


def _gauss(n, h, nu, sigma, shift=0.0):
    x = h * np.arange(n)
    return np.exp(-np.pi * ((x - h * n / 2 - shift) / sigma) ** 2) * np.exp(2j * np.pi * nu * x)


@settings(max_examples=20, deadline=None)
@given(st.floats(-0.15, 0.15), st.floats(-0.15, 0.15), st.floats(6, 12))
def test_direct_one_is_pointwise_product(y1, y2, sigma):
    nu = to_ambient(np.array([y1, y2]))
    fs = [_gauss(256, 1.0, nu[j], sigma, 2 * j - 2) for j in range(3)]
    direct = trilinear_direct(builtin("one"), *fs)
    exact = SQRT3 * np.sum(fs[0] * fs[1] * fs[2])
    assert abs(direct - exact) <= 1e-9 * abs(exact) + 1e-12


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 1000), st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False))
def test_direct_is_linear_in_multiplier(seed, c):
    rng = np.random.default_rng(seed)
    fs = rng.normal(size=(3, 32))
    m1, m2 = random_multiplier(seed), builtin("bht_sign")
    both = type(m1)("sum", lambda y: m1(y) + c * m2(y))
    lhs = trilinear_direct(both, *fs)
    rhs = trilinear_direct(m1, *fs) + c * trilinear_direct(m2, *fs)
    assert abs(lhs - rhs) < 1e-9 * (1 + abs(lhs))


def _kernel(m=None, beta=(2.0, 0.3), n=16, pair=(0, 1)):
    m = random_multiplier(2) if m is None else m
    return kernel_from_multiplier(m, np.array(beta), CURVE, BUMPS, n=n, pair=pair)


def test_kernel_lags_match_pointwise_evaluation():
    K = _kernel()
    la, lb = np.arange(-3, 4), np.arange(-2, 3)
    h = 0.7
    A, B = np.meshgrid(la, lb, indexing="ij")
    amb = np.zeros(A.shape + (3,))
    amb[..., 0], amb[..., 1] = h * A, h * B
    # K is a function on V: the ambient lag is projected by the evaluation
    amb -= amb.mean(axis=-1, keepdims=True)
    assert np.allclose(K.at_lags(h, la, lb), K(amb), atol=1e-12)
    assert np.isclose(K.mass, K(np.zeros(3)))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 2))
def test_spectral_cell_form_matches_lag_sum(seed, ref):
    rng = np.random.default_rng(seed)
    pair = tuple(i for i in range(3) if i != ref)
    K = _kernel(n=12, pair=pair)
    n = 40
    cols = []
    for _ in range(3):
        c = np.zeros(n, complex)
        lo = int(rng.integers(0, n - 8))
        c[lo:lo + int(rng.integers(1, 8))] = rng.normal(size=1) + 1j * rng.normal(size=1)
        cols.append(c)
    lags = cell_form(K, cols, 0.9, ref=ref)
    spec = cell_form_spectral(K, cols, 0.9, ref=ref)
    assert abs(lags - spec) <= 1e-10 * (1 + abs(lags))


def test_cell_form_pair_mismatch():
    K = _kernel(pair=(0, 2))
    with pytest.raises(ValueError):
        cell_form_spectral(K, [np.ones(4)] * 3, 1.0, ref=2)


@settings(max_examples=200)
@given(st.floats(1e-3, 1e6))
def test_annulus_index_matches_log2(r):
    k = int(annulus_index(r))
    if r <= 1:
        assert k == 0
    else:
        assert k == math.ceil(math.log2(r)) or (2.0 ** (k - 1) < r <= 2.0 ** k)
        assert 2.0 ** (k - 1) < r <= 2.0 ** k


def test_annulus_index_powers_of_two():
    r = 2.0 ** np.arange(0, 12)
    assert list(annulus_index(r)) == [0] + list(range(1, 12))
    assert list(annulus_index(np.nextafter(r, np.inf))) == list(range(1, 13))


def test_envelope_values():
    assert np.allclose(envelope([0, 1, 2], 1.25), [1.0, 2 * 2 ** -0.25, 3 * 2 ** -0.5])


@settings(max_examples=10, deadline=None)
@given(st.complex_numbers(min_magnitude=0.01, max_magnitude=100, allow_nan=False, allow_infinity=False))
def test_kernel_condition_homogeneous(c):
    m = random_multiplier(7)
    a = kernel_condition_ratio(_kernel(m), 1.25)
    b = kernel_condition_ratio(_kernel(m.scaled(c)), 1.25)
    assert math.isclose(b, abs(c) * a, rel_tol=1e-9)
    assert kernel_condition_ratio(_kernel(builtin("zero")), 1.25) == 0.0


def _small_model(nv=6, N=128, sigma=8.0):
    sb = 1 / (sigma * math.sqrt(2 * math.pi))
    center = np.array([4 * sb, 0.0])
    nu = to_ambient(center)
    alpha = AlphaGrid(N, 1.0, 0.0)
    fs = [_gauss(N, 1.0, nu[j], sigma) for j in range(3)]
    meas = GridMeasure(PlaneGrid.uniform(center, 3 * sb, nv), CURVE)
    Fs = [embed(fs[j], j + 1, meas, alpha, BUMPS) for j in range(3)]
    return alpha, fs, meas, Fs


def test_model_form_routes_agree():
    alpha, fs, meas, Fs = _small_model()
    cells = significant_cells(Fs, 1e-6)
    K = build_kernels(random_multiplier(0), meas, BUMPS, cells=cells, n=12)
    a = model_form_evaluate(K, Fs, 1.0, method="spectral")
    b = model_form_evaluate(K, Fs, 1.0, method="lags")
    assert abs(a - b) <= 1e-10 * abs(a)
    with pytest.raises(ValueError):
        model_form_evaluate(K, Fs, 1.0, method="other")


def test_significant_cells_threshold():
    alpha, fs, meas, Fs = _small_model()
    few, many = significant_cells(Fs, 1e-2), significant_cells(Fs, 1e-12)
    assert set(few) <= set(many) and len(few) < len(many)


def test_tent_estimate_small_run():
    k = derive_constants(0.1)
    alpha, fs, meas, Fs = _small_model(nv=6, N=128)
    lat = TentLattice.build(alpha, CURVE, levels=4, n_gamma=5, span=(-1, 1))
    sizes = [global_size(F, lat, CURVE, k) for F in Fs]
    cells = significant_cells(Fs, 1e-6)
    norm = QuadratureNormalizer(CURVE, BUMPS)
    K = build_kernels(random_multiplier(0), meas, BUMPS, cells=cells, normalizer=norm, n=16, pair=(0, 1))
    T = Tent(64.0, 16.0, tuple(CURVE.at_coordinate(0.0)))
    rep = tent_estimate_ratio(K, Fs, T, 3, CURVE, k, sizes, 1.0, 0.0, k_max=6, missing="skip")
    assert rep["support_violations"] == []
    assert rep["contributing_cells"] > 0
    assert sum(rep["per_k"]) <= rep["ratio"] * (1 + 1e-12)
    with pytest.raises(DegenerateInput):
        tent_estimate_ratio(K, Fs, T, 3, CURVE, k, [0.0, 1.0, 1.0], 1.0)
