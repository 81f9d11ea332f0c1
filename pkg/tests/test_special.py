import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import gig_quad_moment, gig_quad_norm, log_bessel_k_quad

from regimegraph.gh import PRESETS, preset_shape
from regimegraph.special import (DomainError, GigParams, dlog_bessel_k_dnu, gig_logpdf,
                                 gig_moments, gig_sample, log_bessel_k)

# K_1(1), from the integral representation (see oracles.log_bessel_k_quad)
K1_AT_1 = 0.6019072301972346

ORDERS = [0.0, 0.3, 1.0, 2.5, 7.0, 12.5, 25.0, 50.0]
ARGS = [1e-4, 1e-2, 0.3, 1.0, 4.0, 20.0, 100.0]


class TestLogBesselK:
    def test_half_integer_closed_form(self):
        expected = math.log(math.sqrt(math.pi / 4.0) * math.exp(-2.0))
        assert log_bessel_k(0.5, 2.0) == pytest.approx(expected, rel=1e-14)

    def test_even_in_order(self):
        assert log_bessel_k(-3.2, 1.7) == log_bessel_k(3.2, 1.7)

    def test_frozen_value(self):
        assert math.exp(log_bessel_k(1.0, 1.0)) == pytest.approx(K1_AT_1, rel=1e-12)

    @pytest.mark.parametrize("nu", ORDERS)
    def test_against_quadrature(self, nu):
        x = np.array(ARGS)
        got = log_bessel_k(np.full_like(x, nu), x)
        ref = np.array([log_bessel_k_quad(nu, xi) for xi in x])
        # relative error of exp(log K) is the absolute error of log K
        assert np.max(np.abs(got - ref)) < 1e-10

    def test_scalar_and_array_paths_agree(self):
        nu, x = np.meshgrid([0.0, 1.3, 11.0, 60.0], [1e-5, 0.5, 30.0])
        arr = log_bessel_k(nu, x)
        for a, n, xx in zip(arr.ravel(), nu.ravel(), x.ravel()):
            assert log_bessel_k(float(n), float(xx)) == pytest.approx(a, rel=1e-13, abs=1e-13)

    @pytest.mark.parametrize("nu", [0.0, 0.7, 5.0, 49.0, 120.0, 500.0])
    @pytest.mark.parametrize("x", [1e-300, 1e-150, 1e-20, 1.0, 1e5, 1e150, 1e300])
    def test_finite_over_extreme_range(self, nu, x):
        assert np.isfinite(log_bessel_k(nu, x))

    @pytest.mark.parametrize("x", [0.0, -1.0, np.inf, np.nan])
    def test_domain_error(self, x):
        with pytest.raises(DomainError):
            log_bessel_k(1.0, x)
        with pytest.raises(DomainError):
            log_bessel_k(np.array([1.0]), np.array([x]))

    @given(st.floats(0, 40), st.floats(1e-3, 80))
    def test_recurrence(self, nu, x):
        # K_{nu+1} = K_{nu-1} + (2 nu / x) K_nu; negative orders reduce to this by symmetry
        lhs = log_bessel_k(nu + 1.0, x)
        terms = [log_bessel_k(nu - 1.0, x)]
        if 2.0 * nu / x > 0:  # a subnormal order underflows the coefficient
            terms.append(math.log(2.0 * nu / x) + log_bessel_k(nu, x))
        rhs = np.logaddexp.reduce(terms)
        assert abs(math.expm1(lhs - rhs)) < 1e-8

    def test_monotone_decreasing_in_x(self):
        x = np.geomspace(1e-3, 50, 200)
        assert np.all(np.diff(log_bessel_k(np.full_like(x, 2.3), x)) < 0)


class TestOrderDerivative:
    def test_zero_at_origin(self):
        assert dlog_bessel_k_dnu(0.0, 3.0) == 0.0

    def test_matches_finite_difference(self):
        h = 1e-5
        ref = (math.log(K(1.5 + h, 2.0)) - math.log(K(1.5 - h, 2.0))) / (2 * h)
        assert dlog_bessel_k_dnu(1.5, 2.0) == pytest.approx(ref, rel=1e-6)

    def test_odd(self):
        assert dlog_bessel_k_dnu(-2.0, 1.0) == pytest.approx(-dlog_bessel_k_dnu(2.0, 1.0), rel=1e-12)

    @pytest.mark.parametrize("nu,x", [(0.4, 0.5), (3.0, 10.0), (20.0, 2.0)])
    def test_against_quadrature_difference(self, nu, x):
        h = 1e-4
        ref = (log_bessel_k_quad(nu + h, x) - log_bessel_k_quad(nu - h, x)) / (2 * h)
        assert dlog_bessel_k_dnu(nu, x) == pytest.approx(ref, rel=1e-6)

    def test_vectorized(self):
        out = dlog_bessel_k_dnu(np.array([-1.0, 0.0, 1.0]), 2.0)
        assert out.shape == (3,)
        assert out[1] == 0.0 and out[0] == pytest.approx(-out[2])


def K(nu, x):
    return math.exp(log_bessel_k(nu, x))


GIG_GRID = [(-0.5, 1.0, 1.0), (1.0, 0.001, 0.5), (-20.0, 40.0, 0.001), (2.5, 3.0, 0.2),
            (-1.0, 2.0, 0.001), (0.0, 0.5, 5.0), (7.0, 1.0, 1.0), (1.5, 0.001, 0.5)]


class TestGig:
    def test_params_validation(self):
        with pytest.raises(DomainError):
            GigParams(1.0, 0.0, 1.0)
        with pytest.raises(DomainError):
            GigParams(np.nan, 1.0, 1.0)
        assert GigParams(1.0, 1e-12, 1.0).chi == 1e-8

    def test_inverse_gaussian_mean(self):
        e_w, _, _ = gig_moments(GigParams(-0.5, 1.0, 1.0))
        assert e_w == pytest.approx(1.0, rel=1e-12)

    def test_frozen_quadrature_mean(self):
        # quadrature of w f(w) for GIG(1, 0.001, 0.5)
        e_w, _, _ = gig_moments(1.0, 0.001, 0.5)
        assert abs(e_w - 4.003921327151378) < 1e-6

    @pytest.mark.parametrize("lam,chi,psi", GIG_GRID)
    def test_moments_against_quadrature(self, lam, chi, psi):
        e_w, e_inv, e_log = gig_moments(lam, chi, psi)
        assert e_w == pytest.approx(gig_quad_moment(lam, chi, psi, lambda w: w), rel=1e-8)
        assert e_inv == pytest.approx(gig_quad_moment(lam, chi, psi, lambda w: 1 / w), rel=1e-8)
        assert e_log == pytest.approx(gig_quad_moment(lam, chi, psi, np.log), rel=1e-6, abs=1e-7)

    @pytest.mark.parametrize("lam,chi,psi", GIG_GRID)
    def test_density_integrates_to_one(self, lam, chi, psi):
        if abs(lam) > 10:
            # scipy's unscaled kv underflows here; check via the log-density instead
            from scipy.integrate import quad
            mode = ((lam - 1) + math.sqrt((lam - 1) ** 2 + chi * psi)) / psi
            f = lambda s: math.exp(gig_logpdf(math.exp(s), lam, chi, psi) + s)
            s0 = math.log(mode)
            total = quad(f, s0 - 60, s0 + 60, points=[s0], epsabs=0, epsrel=1e-12, limit=500)[0]
        else:
            total = gig_quad_norm(lam, chi, psi)
        assert total == pytest.approx(1.0, abs=1e-8)

    @given(st.floats(-15, 15), st.floats(0.01, 20), st.floats(0.01, 20))
    def test_reciprocal_identity(self, lam, chi, psi):
        _, e_inv, _ = gig_moments(lam, chi, psi)
        e_w_swapped, _, _ = gig_moments(-lam, psi, chi)
        assert e_inv == pytest.approx(e_w_swapped, rel=1e-12)

    @given(st.floats(-30, 30), st.floats(1e-6, 50), st.floats(1e-6, 50))
    def test_jensen(self, lam, chi, psi):
        e_w, e_inv, e_log = gig_moments(lam, chi, psi)
        assert np.isfinite([e_w, e_inv, e_log]).all()
        assert e_w * e_inv >= 1.0 - 1e-10
        assert e_log <= math.log(e_w) + 1e-9

    def test_vectorized_moments(self):
        e_w, e_inv, e_log = gig_moments(np.array([1.0, -1.0]), np.array([2.0, 2.0]), 1.0)
        assert e_w.shape == (2,)

    def test_logpdf_matches_formula(self):
        lam, chi, psi, w = 1.3, 0.8, 2.2, 0.7
        ref = (0.5 * lam * math.log(psi / chi) - math.log(2) - log_bessel_k(lam, math.sqrt(chi * psi))
               + (lam - 1) * math.log(w) - 0.5 * (chi / w + psi * w))
        assert gig_logpdf(w, lam, chi, psi) == pytest.approx(ref, rel=1e-14)


class TestGigSample:
    def test_reproducible(self):
        p = GigParams(0.5, 1.0, 2.0)
        np.testing.assert_array_equal(gig_sample(p, 100, 3), gig_sample(p, 100, 3))

    def test_zero_draws(self):
        assert gig_sample(GigParams(0.5, 1.0, 2.0), 0, 1).shape == (0,)

    def test_negative_draws(self):
        with pytest.raises(ValueError):
            gig_sample(GigParams(0.5, 1.0, 2.0), -1, 1)

    def test_invalid_params(self):
        with pytest.raises(DomainError):
            gig_sample((1.0, -1.0, 1.0), 10, 1)

    def test_mean_within_three_se(self):
        p = GigParams(-0.5, 4.0, 1.0)
        draws = gig_sample(p, 10**6, 11)
        e_w = gig_moments(p)[0]
        se = draws.std() / math.sqrt(draws.size)
        assert abs(draws.mean() - e_w) < 3 * se

    @pytest.mark.parametrize("name", sorted(PRESETS))
    def test_preset_means_within_four_se(self, name):
        lam, chi, psi = preset_shape(name, 2)
        draws = gig_sample(GigParams(lam, chi, psi), 10**6, 5)
        e_w = gig_moments(lam, chi, psi)[0]
        if name in ("student_t", "cauchy"):
            # psi = 0.001 gives W a very long right tail; 1/W is far better behaved
            draws, e_w = 1.0 / draws, gig_moments(lam, chi, psi)[1]
        se = draws.std() / math.sqrt(draws.size)
        assert abs(draws.mean() - e_w) < 4 * se
