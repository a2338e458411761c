"""Density and sampler checks against independent oracles.

Oracles: the dense Kronecker-structured Gaussian for the matrix normal,
scipy's inverse-gamma and Student-t for the 1x1 reductions, adaptive
quadrature for normalization, and Monte Carlo mixing over the
inverse-Wishart for the matrix-t integral identity.
"""

import numpy as np
import pytest
import scipy.integrate
import scipy.stats

from spatstack.errors import DimensionMismatch, InvalidDof, NonSPDMatrix
from spatstack.matrix_variate import (
    InverseWishartParams,
    MatrixNormalParams,
    MatrixTParams,
    iw_sample,
    mn_log_density,
    mn_sample,
    mt_log_density,
    mt_sample,
)


def random_spd(rng, n, scale=1.0):
    a = rng.standard_normal((n, n))
    return scale * (a @ a.T + n * np.eye(n))


def random_mn_params(rng, n, q):
    return MatrixNormalParams(
        mean=rng.standard_normal((n, q)),
        row_cov=random_spd(rng, n),
        col_cov=random_spd(rng, q),
    )


class TestMatrixNormalDensity:
    def test_1x1_reduces_to_standard_normal(self):
        params = MatrixNormalParams([[0.0]], [[1.0]], [[1.0]])
        assert mn_log_density([[0.0]], params) == pytest.approx(
            -0.5 * np.log(2 * np.pi), abs=1e-12
        )

    def test_transpose_symmetry(self):
        rng = np.random.default_rng(7)
        params = random_mn_params(rng, 3, 2)
        y = rng.standard_normal((3, 2))
        flipped = MatrixNormalParams(params.mean.T, params.col_cov, params.row_cov)
        assert mn_log_density(y, params) == pytest.approx(
            mn_log_density(y.T, flipped), abs=1e-10
        )

    @pytest.mark.parametrize("shape", [(1, 1), (3, 2), (2, 4), (3, 3)])
    def test_kronecker_gaussian_oracle(self, shape):
        # vec(Y) column-stacked is N(vec(M), U kron V)
        n, q = shape
        rng = np.random.default_rng(n * 10 + q)
        params = random_mn_params(rng, n, q)
        y = rng.standard_normal((n, q))
        oracle = scipy.stats.multivariate_normal.logpdf(
            y.flatten(order="F"),
            params.mean.flatten(order="F"),
            np.kron(params.col_cov, params.row_cov),
        )
        assert mn_log_density(y, params) == pytest.approx(oracle, abs=1e-10)

    def test_shape_mismatch_raises(self):
        params = MatrixNormalParams(np.zeros((2, 2)), np.eye(2), np.eye(2))
        with pytest.raises(DimensionMismatch):
            mn_log_density(np.zeros((3, 2)), params)

    def test_non_spd_raises(self):
        params = MatrixNormalParams(np.zeros((2, 2)), -np.eye(2), np.eye(2))
        with pytest.raises(NonSPDMatrix):
            mn_log_density(np.zeros((2, 2)), params)


class TestMatrixNormalSampler:
    def test_zero_core_hook_returns_mean(self):
        rng = np.random.default_rng(0)
        params = random_mn_params(rng, 3, 2)
        draw = mn_sample(params, rng, _z=np.zeros((3, 2)))
        np.testing.assert_array_equal(draw, params.mean)

    def test_moments_match_parameters(self):
        rng = np.random.default_rng(11)
        params = MatrixNormalParams(
            mean=np.array([[1.0, -2.0], [0.5, 3.0]]),
            row_cov=np.array([[2.0, 0.6], [0.6, 1.0]]),
            col_cov=np.array([[1.5, -0.4], [-0.4, 0.8]]),
        )
        n_draws = 100_000
        draws = np.array([mn_sample(params, rng) for _ in range(n_draws)])

        se = np.sqrt(
            np.outer(np.diag(params.row_cov), np.diag(params.col_cov)) / n_draws
        )
        assert np.all(np.abs(draws.mean(axis=0) - params.mean) < 4 * se)

        # after row whitening the draws are MN(0, I, U); pool rows
        lv = np.linalg.cholesky(params.row_cov)
        white = np.linalg.solve(lv, draws - params.mean)
        pooled = white.reshape(-1, 2)
        col_cov_hat = pooled.T @ pooled / pooled.shape[0]
        assert np.all(
            np.abs(col_cov_hat - params.col_cov) < 0.05 * np.abs(params.col_cov) + 1e-3
        )

    def test_seed_determinism(self):
        params = random_mn_params(np.random.default_rng(1), 2, 2)
        a = mn_sample(params, np.random.default_rng(42))
        b = mn_sample(params, np.random.default_rng(42))
        c = mn_sample(params, np.random.default_rng(43))
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)


class TestInverseWishart:
    def test_invalid_dof_rejected(self):
        with pytest.raises(InvalidDof):
            InverseWishartParams(np.eye(3), 1.5)

    def test_univariate_is_inverse_gamma(self):
        # q=1, scale=2, dof=5 is inverse-gamma(shape 2.5, scale 1)
        rng = np.random.default_rng(5)
        params = InverseWishartParams([[2.0]], 5.0)
        draws = np.array([iw_sample(params, rng)[0, 0] for _ in range(20_000)])
        assert abs(draws.mean() - 2.0 / 3.0) < 4 * draws.std() / np.sqrt(draws.size)
        stat = scipy.stats.kstest(draws, scipy.stats.invgamma(2.5, scale=1.0).cdf)
        assert stat.pvalue > 0.01

    def test_mean_identity_q2(self):
        rng = np.random.default_rng(6)
        params = InverseWishartParams(np.eye(2), 7.0)
        draws = np.array([iw_sample(params, rng) for _ in range(100_000)])
        mean = draws.mean(axis=0)
        se = draws.std(axis=0) / np.sqrt(draws.shape[0])
        assert np.all(np.abs(mean - 0.25 * np.eye(2)) < 4 * se)

    def test_draws_are_spd(self):
        rng = np.random.default_rng(8)
        params = InverseWishartParams(random_spd(rng, 3), 6.0)
        for _ in range(100):
            np.linalg.cholesky(iw_sample(params, rng))


class TestMatrixTDensity:
    def test_1x1_frozen_value(self):
        # log(Gamma(2) / (Gamma(1.5) sqrt(pi))) = log(2/pi)
        params = MatrixTParams(3.0, [[0.0]], [[1.0]], [[1.0]])
        assert mt_log_density([[0.0]], params) == pytest.approx(
            -0.45158270528945486, abs=1e-12
        )

    def test_1x1_matches_student_t_oracle(self):
        # T(nu, mu, V, Psi) on scalars is t_nu(mu, scale=sqrt(V Psi / nu))
        params = MatrixTParams(4.0, [[0.3]], [[2.0]], [[1.5]])
        oracle = scipy.stats.t(df=4.0, loc=0.3, scale=np.sqrt(2.0 * 1.5 / 4.0))
        for y in [-3.0, -0.2, 0.3, 1.7, 10.0]:
            assert mt_log_density([[y]], params) == pytest.approx(
                oracle.logpdf(y), abs=1e-12
            )

    def test_1x1_integrates_to_one(self):
        # nu=3 tails carry ~2e-5 mass beyond +-50, so compare against the
        # oracle's truncated mass there; at nu=6 the truncation is below
        # 1e-9 and the integral must hit 1 outright.
        heavy = MatrixTParams(3.0, [[0.3]], [[2.0]], [[1.5]])
        total, _ = scipy.integrate.quad(
            lambda y: np.exp(mt_log_density([[y]], heavy)), -50, 50, limit=200
        )
        oracle = scipy.stats.t(df=3.0, loc=0.3, scale=np.sqrt(2.0 * 1.5 / 3.0))
        assert abs(total - (oracle.cdf(50) - oracle.cdf(-50))) < 1e-6

        light = MatrixTParams(6.0, [[0.0]], [[1.0]], [[1.0]])
        total, _ = scipy.integrate.quad(
            lambda y: np.exp(mt_log_density([[y]], light)), -50, 50, limit=200
        )
        assert abs(total - 1.0) < 1e-6

    def test_maximized_at_location(self):
        rng = np.random.default_rng(3)
        params = MatrixTParams(
            6.0, rng.standard_normal((2, 2)), random_spd(rng, 2), random_spd(rng, 2)
        )
        center = mt_log_density(params.location, params)
        for _ in range(25):
            perturbed = params.location + 0.3 * rng.standard_normal((2, 2))
            assert mt_log_density(perturbed, params) < center

    def test_matches_iw_mixture_oracle(self):
        # the matrix-t is the IW mixture of matrix normals
        rng = np.random.default_rng(12)
        m, q, nu = 2, 2, 8.0
        mu = rng.standard_normal((m, q))
        v = random_spd(rng, m)
        psi = random_spd(rng, q)
        params = MatrixTParams(nu, mu, v, psi)
        y = mu + 0.5 * rng.standard_normal((m, q))

        n_mc = 50_000
        iw = InverseWishartParams(psi, nu)
        logs = np.array(
            [
                mn_log_density(y, MatrixNormalParams(mu, v, iw_sample(iw, rng)))
                for _ in range(n_mc)
            ]
        )
        shift = logs.max()
        weights = np.exp(logs - shift)
        mc_mean = weights.mean()
        mc_log = shift + np.log(mc_mean)
        mc_se = weights.std() / (np.sqrt(n_mc) * mc_mean)
        assert abs(mt_log_density(y, params) - mc_log) < 3 * mc_se


class TestMatrixTSampler:
    def test_mean_matches_location(self):
        rng = np.random.default_rng(21)
        params = MatrixTParams(
            10.0,
            np.array([[1.0, -1.0], [0.0, 2.0]]),
            np.array([[1.0, 0.2], [0.2, 0.5]]),
            np.array([[0.8, -0.1], [-0.1, 1.2]]),
        )
        draws = np.array([mt_sample(params, rng) for _ in range(100_000)])
        se = draws.std(axis=0) / np.sqrt(draws.shape[0])
        assert np.all(np.abs(draws.mean(axis=0) - params.location) < 4 * se)

    def test_1x1_tails_match_student_t(self):
        rng = np.random.default_rng(22)
        params = MatrixTParams(3.0, [[0.0]], [[1.0]], [[1.0]])
        draws = np.array([mt_sample(params, rng)[0, 0] for _ in range(20_000)])
        stat = scipy.stats.kstest(
            draws, scipy.stats.t(df=3.0, scale=np.sqrt(1.0 / 3.0)).cdf
        )
        assert stat.pvalue > 0.01

    def test_seed_determinism(self):
        params = MatrixTParams(5.0, np.zeros((2, 2)), np.eye(2), np.eye(2))
        a = mt_sample(params, np.random.default_rng(9))
        b = mt_sample(params, np.random.default_rng(9))
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, mt_sample(params, np.random.default_rng(10)))
