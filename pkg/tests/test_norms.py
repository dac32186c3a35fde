import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from offaxis_nls.grid import Field, build_grid
from offaxis_nls.norms import (AdmissiblePair, delta_exponent, energy, is_admissible,
                               lane_pair_for_sigma, mixed_norm, modified_mass, w_exponents,
                               w_norm_accumulate)

INF = math.inf


@pytest.mark.parametrize("r,d,k,expected", [(2, 3, 1, 0.0), (INF, 3, 1, 1.0), (4, 2, 0, 0.5)])
def test_delta_exponent(r, d, k, expected):
    assert delta_exponent(r, d, k) == pytest.approx(expected, abs=1e-15)


def test_delta_exponent_rejects_small_r():
    with pytest.raises(ValueError):
        delta_exponent(1.5, 2, 0)


@pytest.mark.parametrize("q,r,d,k,expected", [
    (INF, 2, 3, 1, True),
    (2, 6, 3, 0, False),  # endpoint for d - k = 3
    (4, 4, 3, 1, True),
    (4, 4, 2, 1, False),  # delta(4) = 1/4 there, needs q = 8
    (8, 4, 2, 1, True),
    (2, INF, 2, 0, False),  # endpoint for d - k = 2
])
def test_is_admissible(q, r, d, k, expected):
    assert is_admissible(q, r, d, k) is expected


@pytest.mark.parametrize("sigma,d,k,pair", [(1, 2, 0, (4, 4)), (1, 3, 1, (4, 4)), (2, 3, 2, (6, 6))])
def test_lane_pair(sigma, d, k, pair):
    p = lane_pair_for_sigma(sigma, d, k)
    assert (p.q, p.r) == pytest.approx(pair)
    assert is_admissible(p.q, p.r, d, k)


def test_lane_pair_rejects_endpoint():
    with pytest.raises(ValueError):
        lane_pair_for_sigma(2.0, 3, 0)
    with pytest.raises(ValueError):
        AdmissiblePair(4, 4, 2, 1)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 5.0), st.integers(1, 3), st.data())
def test_delta_of_rho_matches_formula(sigma, d, data):
    k = data.draw(st.integers(0, d - 1))
    got = delta_exponent(2 * (sigma + 1), d, k)
    assert got == pytest.approx((d - k) * sigma / (sigma + 1) / 2, rel=1e-14, abs=1e-15)


@pytest.fixture
def grid21():
    return build_grid(2, 1, 0.5, [24.0, 24.0], [96, 96])


def rand_field(g, seed=0):
    rng = np.random.default_rng(seed)
    return Field(g, rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape))


def test_mixed_norm_p2_s0_is_l2(grid21):
    f = rand_field(grid21)
    assert mixed_norm(f, 2, 0) == pytest.approx(f.l2_norm(), rel=1e-12)


def _h_sobolev_gaussian(s):
    # h(y) = exp(-y^2/2) has unitary transform exp(-eta^2/2)
    val, _ = quad(lambda e: (1 + e * e) ** s * np.exp(-e * e), -np.inf, np.inf, epsabs=1e-14, epsrel=1e-13)
    return math.sqrt(val)


def _g_lp(p):
    g = lambda x: (1 + 0.5 * x * x) * np.exp(-x * x / 2)  # noqa: E731
    if math.isinf(p):
        # maximum sits at x = 0
        return 1.0
    val, _ = quad(lambda x: g(x) ** p, -np.inf, np.inf, epsabs=1e-14, epsrel=1e-13)
    return val ** (1 / p)


@pytest.mark.parametrize("p,s", [(2, 1), (4, -0.5), (1, 0.3), (3, 2), (INF, -1)])
def test_mixed_norm_separable(grid21, p, s):
    f = Field.from_function(grid21, lambda x, y: (1 + 0.5 * x * x) * np.exp(-x**2 / 2) * np.exp(-y**2 / 2))
    expected = _g_lp(p) * _h_sobolev_gaussian(s)
    tol = 1e-9
    assert mixed_norm(f, p, s) == pytest.approx(expected, rel=tol)


def test_mixed_norm_y_plane_wave():
    g = build_grid(2, 1, 0.5, [2 * np.pi, 2 * np.pi], [16, 16])
    eta0 = 3.0
    f = Field.from_function(g, lambda x, y: np.exp(1j * eta0 * y) + 0 * x)
    expected = math.sqrt(1 + eta0**2) * math.sqrt(g.volume)
    assert mixed_norm(f, 2, 1) == pytest.approx(expected, rel=1e-12)


def test_mixed_norm_k0_is_plain_lp():
    g = build_grid(2, 0, 0.0, [6.0, 6.0], [32, 32])
    f = rand_field(g, 3)
    p = 3.0
    expected = (g.cell_volume * np.sum(np.abs(f.data) ** p)) ** (1 / p)
    assert mixed_norm(f, p, 1.7) == pytest.approx(expected, rel=1e-12)
    assert mixed_norm(f, INF, 0) == pytest.approx(np.max(np.abs(f.data)))


def test_mixed_norm_rejects_small_p(grid21):
    with pytest.raises(ValueError):
        mixed_norm(rand_field(grid21), 0.5, 0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([1.0, 2.0, 3.5, INF]), st.floats(-2, 2),
       st.complex_numbers(min_magnitude=1e-3, max_magnitude=1e3))
def test_norm_axioms(seed, p, s, c):
    g = build_grid(2, 1, 0.5, [4.0, 4.0], [8, 8])
    f, h = rand_field(g, seed), rand_field(g, seed + 7)
    nf, nh = mixed_norm(f, p, s), mixed_norm(h, p, s)
    assert mixed_norm(c * f, p, s) == pytest.approx(abs(c) * nf, rel=1e-10)
    assert mixed_norm(f + h, p, s) <= (nf + nh) * (1 + 1e-10)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([1.0, 2.0, 4.0, INF]), st.floats(-3, 3), st.floats(0, 2))
def test_monotone_in_s(seed, p, s1, ds):
    g = build_grid(3, 2, 0.5, [4.0, 4.0, 4.0], [4, 8, 8])
    f = rand_field(g, seed)
    assert mixed_norm(f, p, s1) <= mixed_norm(f, p, s1 + ds) * (1 + 1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([1.0, 1.5, 2.0, 3.0, INF]), st.floats(-2, 2))
def test_duality(seed, p, s):
    g = build_grid(2, 1, 0.5, [3.0, 5.0], [8, 8])
    f, h = rand_field(g, seed), rand_field(g, seed + 1)
    pd = INF if p == 1 else (1.0 if math.isinf(p) else p / (p - 1))
    inner = abs(g.cell_volume * np.vdot(h.data, f.data))
    assert inner <= mixed_norm(f, p, s) * mixed_norm(h, pd, -s) * (1 + 1e-10)


def test_w_norm_zero_and_constant(grid21):
    z = Field.zeros(grid21)
    assert w_norm_accumulate([z] * 5, (0.0, 2.0)) == 0.0
    f = Field.from_function(grid21, lambda x, y: np.exp(-(x**2 + 2 * y**2) / 2))
    ex = w_exponents(2, 1)
    T = 3.0
    got = w_norm_accumulate([f] * 7, (1.0, 1.0 + T))
    assert got == pytest.approx(T ** (1 / ex["q"]) * mixed_norm(f, ex["q"], ex["s_w"]), rel=1e-13)
    with pytest.raises(ValueError):
        w_norm_accumulate([f], (0, 1))


def test_w_exponents_both_logged():
    ex = w_exponents(2, 1)
    assert ex["q"] == pytest.approx(6.0)
    assert ex["s_w"] == pytest.approx(-1 / 3)
    assert ex["s_alt"] == pytest.approx(2 / 3)


def test_w_norm_gaussian_series_quadrature_oracle(grid21):
    # f(t) = a(t) exp(-(x^2 + y^2)/2), a(t) = 1 + 0.5 sin t on [0, 2 pi]
    ex = w_exponents(2, 1)
    q, s = ex["q"], ex["s_w"]
    n = 64
    ts = np.linspace(0, 2 * np.pi, n + 1)
    base = Field.from_function(grid21, lambda x, y: np.exp(-(x**2 + y**2) / 2))
    series = [(1 + 0.5 * np.sin(t)) * base for t in ts]
    got = w_norm_accumulate(series, (0.0, 2 * np.pi))

    xq, _ = quad(lambda x: np.exp(-q * x * x / 2), -np.inf, np.inf, epsabs=1e-15, epsrel=1e-14)
    spatial = xq ** (1 / q) * _h_sobolev_gaussian(s)
    tq, _ = quad(lambda t: (1 + 0.5 * np.sin(t)) ** q, 0, 2 * np.pi, epsabs=1e-14, epsrel=1e-14)
    expected = tq ** (1 / q) * spatial
    assert got == pytest.approx(expected, rel=1e-6)


def test_energy_and_mass_of_zero(grid21):
    z = Field.zeros(grid21)
    assert energy(z) == 0.0 and modified_mass(z) == 0.0


def test_modified_mass_eps0_is_l2():
    g = build_grid(2, 1, 0.0, [5.0, 5.0], [16, 16])
    f = rand_field(g, 2)
    assert modified_mass(f) == pytest.approx(f.l2_norm() ** 2, rel=1e-12)


def test_modified_mass_weights_eta():
    g = build_grid(2, 1, 0.5, [2 * np.pi, 2 * np.pi], [16, 16])
    f = Field.from_function(g, lambda x, y: np.exp(1j * (x + 2 * y)))
    assert modified_mass(f) == pytest.approx((1 + 0.25 * 4) * g.volume, rel=1e-12)


def test_plane_wave_energy():
    g = build_grid(2, 1, 0.5, [2 * np.pi, 4 * np.pi], [16, 32])
    kappa = np.array([2.0, 1.5])
    f = Field.from_function(g, lambda x, y: np.exp(1j * (kappa[0] * x + kappa[1] * y)))
    V = g.volume
    assert energy(f, sigma=1.0) == pytest.approx(0.5 * kappa @ kappa * V - 0.25 * V, rel=1e-12)
