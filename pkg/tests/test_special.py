"""Special-function accuracy against high-precision references."""

import mpmath as mp
import numpy as np
import pytest

from evimat.special import betainc, digamma, lgamma, sigmoid, softplus, student_t_cdf


class TestLogGamma:
    def test_against_mpmath_on_working_range(self):
        xs = np.linspace(1.0, 50.0, 1201)
        ref = np.array([float(mp.loggamma(x)) for x in xs])
        got = lgamma(xs)
        denom = np.maximum(np.abs(ref), 1.0)
        assert np.max(np.abs(got - ref) / denom) < 1e-12

    def test_half_integer_values(self):
        # Gamma(0.5) = sqrt(pi), Gamma(2.5) = 1.5 * 0.5 * sqrt(pi)
        assert lgamma(0.5) == pytest.approx(0.5 * np.log(np.pi), abs=1e-14)
        assert lgamma(2.5) == pytest.approx(np.log(0.75 * np.sqrt(np.pi)), abs=1e-14)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            lgamma(0.0)
        with pytest.raises(ValueError):
            lgamma(np.array([1.0, -2.0]))


class TestDigamma:
    def test_against_mpmath(self):
        xs = np.linspace(1.0, 50.0, 1201)
        ref = np.array([float(mp.digamma(x)) for x in xs])
        got = digamma(xs)
        denom = np.maximum(np.abs(ref), 1.0)
        assert np.max(np.abs(got - ref) / denom) < 1e-12

    def test_recurrence(self):
        # psi(x+1) = psi(x) + 1/x
        xs = np.linspace(1.2, 20.0, 57)
        np.testing.assert_allclose(digamma(xs + 1.0), digamma(xs) + 1.0 / xs, rtol=1e-12)

    def test_scalar_shape(self):
        assert isinstance(digamma(3.7), float)


class TestIncompleteBeta:
    def test_against_mpmath(self):
        rng = np.random.default_rng(3)
        a = rng.uniform(0.55, 40.0, 400)
        b = np.full(400, 0.5)
        x = rng.uniform(0.0, 1.0, 400)
        ref = np.array(
            [float(mp.betainc(ai, bi, 0, xi, regularized=True)) for ai, bi, xi in zip(a, b, x)]
        )
        got = betainc(a, b, x)
        assert np.max(np.abs(got - ref)) < 1e-12

    def test_bounds(self):
        assert betainc(2.0, 0.5, 0.0) == 0.0
        assert betainc(2.0, 0.5, 1.0) == 1.0


class TestStudentTCdf:
    def test_symmetry_and_median(self):
        assert student_t_cdf(0.0, 4.0) == pytest.approx(0.5, abs=1e-14)
        z = np.linspace(-6, 6, 101)
        f = student_t_cdf(z, 3.5)
        np.testing.assert_allclose(f + f[::-1], 1.0, atol=1e-13)

    def test_against_quadrature(self):
        rng = np.random.default_rng(4)
        z = rng.uniform(-6, 6, 24)
        df = rng.uniform(2.1, 40.0, 24)

        def ref(zz, nu):
            pdf = lambda t: mp.gamma((nu + 1) / 2) / (
                mp.sqrt(nu * mp.pi) * mp.gamma(nu / 2)
            ) * (1 + t * t / nu) ** (-(nu + 1) / 2)
            return float(mp.quad(pdf, [-mp.inf, zz]))

        got = student_t_cdf(z, df)
        refs = np.array([ref(zi, di) for zi, di in zip(z, df)])
        assert np.max(np.abs(got - refs)) < 1e-10

    def test_monotone(self):
        z = np.linspace(-8, 8, 401)
        assert np.all(np.diff(student_t_cdf(z, 5.0)) > 0)


class TestLogistic:
    def test_sigmoid_softplus_basics(self):
        assert sigmoid(0.0) == 0.5
        assert softplus(0.0) == pytest.approx(np.log(2.0), abs=1e-15)
        # saturation is finite and ordered
        assert sigmoid(40.0) <= 1.0
        assert sigmoid(-40.0) >= 0.0
        assert softplus(-745.0) >= 0.0
        assert np.isfinite(softplus(710.0))

    def test_softplus_identity(self):
        # softplus(x) - softplus(-x) = x
        xs = np.linspace(-30, 30, 301)
        np.testing.assert_allclose(softplus(xs) - softplus(-xs), xs, atol=1e-12)
