import math

import numpy as np
import pytest
import scipy.stats

from cyclicmc import numkit
from cyclicmc.numkit import DegenerateDof, DomainError, NotPositiveDefinite

from conftest import rng_from


class TestCholesky:
    def test_identity(self):
        L = numkit.cholesky(np.eye(3))
        assert np.allclose(L, np.eye(3), atol=1e-14)

    def test_hand_expanded_2x2(self):
        L = numkit.cholesky(np.array([[4.0, 2.0], [2.0, 3.0]]))
        expected = np.array([[2.0, 0.0], [1.0, math.sqrt(2.0)]])
        assert np.allclose(L, expected, atol=1e-12)

    def test_indefinite_raises(self):
        with pytest.raises(NotPositiveDefinite):
            numkit.cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_tiny_pivot_raises(self):
        m = np.diag([1.0, 1e-14])
        with pytest.raises(NotPositiveDefinite):
            numkit.cholesky(m)

    def test_asymmetric_rejected(self):
        with pytest.raises(ValueError):
            numkit.cholesky(np.array([[1.0, 0.5], [0.1, 1.0]]))

    def test_roundtrip_random_spd(self):
        rng = rng_from(7)
        for _ in range(30):
            d = int(rng.integers(1, 8))
            a = rng.standard_normal((d, d))
            m = a @ a.T + 1e-3 * np.eye(d)
            L = numkit.cholesky(m)
            err = np.linalg.norm(L @ L.T - m) / np.linalg.norm(m)
            assert err <= 1e-10
            assert np.all(np.diagonal(L) > 0)


class TestDetInverse:
    def test_identity(self):
        det, ld, inv = numkit.det_logdet_inverse(np.eye(4))
        assert det == pytest.approx(1.0)
        assert ld == pytest.approx(0.0, abs=1e-14)
        assert np.allclose(inv.array, np.eye(4))

    def test_diagonal(self):
        det, ld, inv = numkit.det_logdet_inverse(np.diag([2.0, 8.0]))
        assert det == pytest.approx(16.0)
        assert ld == pytest.approx(math.log(16.0))
        assert np.allclose(inv.array, np.diag([0.5, 0.125]))

    def test_2x2_closed_form(self):
        m = np.array([[4.0, 2.0], [2.0, 3.0]])
        det, ld, inv = numkit.det_logdet_inverse(m)
        assert det == pytest.approx(8.0)
        assert ld == pytest.approx(math.log(8.0))
        assert np.allclose(inv.array, [[0.375, -0.25], [-0.25, 0.5]])
        assert np.allclose(m @ inv.array, np.eye(2), atol=1e-8)
        assert det == pytest.approx(math.exp(ld))


class TestChisqQuantile:
    def test_frozen_values(self):
        # d=2 is exponential: quantile = -2 log(1-p)
        assert numkit.chisq_quantile(0.90, 2) == pytest.approx(4.605170186, abs=1e-8)
        assert numkit.chisq_quantile(0.50, 2) == pytest.approx(1.386294361, abs=1e-8)
        # d=1: square of the standard normal 0.95 quantile
        assert numkit.chisq_quantile(0.90, 1) == pytest.approx(2.705543454, abs=1e-8)

    def test_domain(self):
        for bad in (0.0, 1.0, -0.2, 1.3):
            with pytest.raises(DomainError):
                numkit.chisq_quantile(bad, 2)
        with pytest.raises(DomainError):
            numkit.chisq_quantile(0.5, 0)

    @pytest.mark.parametrize("d", [1, 2, 5, 10, 50])
    @pytest.mark.parametrize("p", [0.01, 0.1, 0.5, 0.9, 0.99])
    def test_inversion_and_reference(self, d, p):
        q = numkit.chisq_quantile(p, d)
        assert numkit.chisq_cdf(q, d) == pytest.approx(p, abs=1e-10)
        assert q == pytest.approx(scipy.stats.chi2.ppf(p, d), rel=1e-9)


class TestHotelling:
    def test_frozen_student_t_square(self):
        # d=1 reduces to the squared Student-t 0.95 quantile with 10 df
        assert numkit.hotelling_t2_quantile(0.90, 1, 10) == pytest.approx(
            3.285012, abs=1e-4)
        t = scipy.stats.t.ppf(0.95, 10)
        assert numkit.hotelling_t2_quantile(0.90, 1, 10) == pytest.approx(
            t * t, rel=1e-10)

    def test_chisq_limit(self):
        q = numkit.hotelling_t2_quantile(0.90, 2, 10**7)
        assert q == pytest.approx(4.60517, rel=1e-4)

    def test_degenerate_dof(self):
        with pytest.raises(DegenerateDof):
            numkit.hotelling_t2_quantile(0.90, 3, 3)
        with pytest.raises(DegenerateDof):
            numkit.hotelling_t2_quantile(0.90, 3, 2)

    def test_exceeds_chisq_and_monotone_in_df(self):
        for d in (1, 2, 4):
            chisq = numkit.chisq_quantile(0.90, d)
            prev = math.inf
            for df in (d + 1, d + 3, d + 10, d + 100, d + 1000):
                q = numkit.hotelling_t2_quantile(0.90, d, df)
                assert q > chisq
                assert q < prev
                prev = q

    @pytest.mark.parametrize("p", [0.1, 0.5, 0.9, 0.99])
    def test_matches_f_reference(self, p):
        d, df = 3, 17
        mine = numkit.hotelling_t2_quantile(p, d, df)
        ref = df * d / (df - d + 1) * scipy.stats.f.ppf(p, d, df - d + 1)
        assert mine == pytest.approx(ref, rel=1e-9)

    @pytest.mark.parametrize("p", [0.05, 0.5, 0.9])
    @pytest.mark.parametrize("dfs", [(1, 7), (3, 11), (8, 2), (2, 5000001)])
    def test_f_quantile_inversion(self, p, dfs):
        d1, d2 = dfs
        q = numkit.f_quantile(p, d1, d2)
        assert numkit.f_cdf(q, d1, d2) == pytest.approx(p, abs=1e-8)
        assert q == pytest.approx(scipy.stats.f.ppf(p, d1, d2), rel=1e-7)


class TestMvnSample:
    def test_deterministic_given_seed(self):
        cov = np.eye(3)
        x1 = numkit.mvn_sample(np.zeros(3), cov, rng_from(5))
        x2 = numkit.mvn_sample(np.zeros(3), cov, rng_from(5))
        assert np.array_equal(x1, x2)

    def test_zero_cov_rejected(self):
        with pytest.raises(NotPositiveDefinite):
            numkit.mvn_sample(np.zeros(2), np.zeros((2, 2)), rng_from(5))

    def test_moments(self):
        rng = rng_from(11)
        a = rng.standard_normal((3, 3))
        cov = a @ a.T + np.eye(3)
        mean = np.array([1.0, -2.0, 0.5])
        n = 10**5
        spd = numkit.SpdMatrix(cov)
        draws = np.array([numkit.mvn_sample(mean, spd, rng) for _ in range(n)])
        tol = 4.0 * np.sqrt(np.diagonal(cov) / n)
        assert np.all(np.abs(draws.mean(axis=0) - mean) <= tol)
        emp = np.cov(draws.T)
        rel = np.linalg.norm(emp - cov) / np.linalg.norm(cov)
        assert rel <= 0.05


class TestGammaSample:
    def test_domain(self):
        with pytest.raises(DomainError):
            numkit.gamma_sample(0.0, 1.0, rng_from(2))
        with pytest.raises(DomainError):
            numkit.gamma_sample(1.0, -1.0, rng_from(2))

    def test_exponential_mean(self):
        rng = rng_from(3)
        draws = np.array([numkit.gamma_sample(1.0, 1.0, rng) for _ in range(10**5)])
        assert draws.mean() == pytest.approx(1.0, rel=0.02)

    def test_moment_identities(self):
        rng = rng_from(4)
        a, b = 14.5, 2.5
        draws = np.array([numkit.gamma_sample(a, b, rng) for _ in range(10**5)])
        assert np.all(draws > 0)
        assert draws.mean() == pytest.approx(a / b, rel=0.02)
        assert draws.var() == pytest.approx(a / b**2, rel=0.05)

    def test_small_shape(self):
        rng = rng_from(6)
        draws = np.array([numkit.gamma_sample(0.3, 1.0, rng) for _ in range(10**5)])
        assert np.all(draws >= 0)
        assert draws.mean() == pytest.approx(0.3, rel=0.03)
