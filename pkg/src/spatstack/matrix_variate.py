"""Matrix-variate distribution families used by the conjugate machinery.

Log-densities and seeded samplers for the matrix-normal, inverse-Wishart
and matrix-variate Student-t families. All densities are computed and
returned in log space: raw matrix-t values for even modest (n, q)
underflow double precision, so no raw-density interface is offered.

Conventions
-----------
A matrix-normal MN(M, V, U) on n x q matrices has row covariance V
(n x n) and column covariance U (q x q); vec(Y^T) ~ N(vec(M^T), V kron U).
The inverse-Wishart IW(Psi, nu) on q x q matrices has mean
Psi / (nu - q - 1) for nu > q + 1 and is proper for nu > q - 1.
The matrix-t T(nu, mu, V, Psi) is the marginal of Y | Sigma ~ MN(mu, V,
Sigma) under Sigma ~ IW(Psi, nu).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import multigammaln

from .errors import DimensionMismatch, InvalidDof
from .linalg import chol_logdet, cholesky_lower, tri_solve

_LOG_2PI = np.log(2.0 * np.pi)
_LOG_PI = np.log(np.pi)


def _as_matrix(a, name):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise DimensionMismatch(f"{name} must be a 2-d array, got ndim={a.ndim}")
    return a


@dataclass(frozen=True)
class MatrixNormalParams:
    """Mean, row covariance (n x n) and column covariance (q x q)."""

    mean: np.ndarray
    row_cov: np.ndarray
    col_cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", _as_matrix(self.mean, "mean"))
        object.__setattr__(self, "row_cov", _as_matrix(self.row_cov, "row_cov"))
        object.__setattr__(self, "col_cov", _as_matrix(self.col_cov, "col_cov"))
        n, q = self.mean.shape
        if self.row_cov.shape != (n, n):
            raise DimensionMismatch(
                f"row_cov is {self.row_cov.shape}, expected ({n}, {n})"
            )
        if self.col_cov.shape != (q, q):
            raise DimensionMismatch(
                f"col_cov is {self.col_cov.shape}, expected ({q}, {q})"
            )


@dataclass(frozen=True)
class InverseWishartParams:
    """SPD scale matrix (q x q) and degrees of freedom > q - 1."""

    scale: np.ndarray
    dof: float

    def __post_init__(self):
        object.__setattr__(self, "scale", _as_matrix(self.scale, "scale"))
        q = self.scale.shape[0]
        if self.scale.shape != (q, q):
            raise DimensionMismatch("scale must be square")
        if not self.dof > q - 1:
            raise InvalidDof(f"dof={self.dof} must exceed q - 1 = {q - 1}")


@dataclass(frozen=True)
class MatrixTParams:
    """Degrees of freedom, location (m x q), row scale (m x m), column
    scale (q x q) of a matrix-variate Student-t."""

    dof: float
    location: np.ndarray
    row_scale: np.ndarray
    col_scale: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "location", _as_matrix(self.location, "location"))
        object.__setattr__(self, "row_scale", _as_matrix(self.row_scale, "row_scale"))
        object.__setattr__(self, "col_scale", _as_matrix(self.col_scale, "col_scale"))
        m, q = self.location.shape
        if self.row_scale.shape != (m, m):
            raise DimensionMismatch(
                f"row_scale is {self.row_scale.shape}, expected ({m}, {m})"
            )
        if self.col_scale.shape != (q, q):
            raise DimensionMismatch(
                f"col_scale is {self.col_scale.shape}, expected ({q}, {q})"
            )
        if not self.dof > q - 1:
            raise InvalidDof(f"dof={self.dof} must exceed q - 1 = {q - 1}")


def mn_log_density(y, params):
    """Log-density of a matrix-normal at the n x q matrix ``y``.

    Evaluated through the Cholesky factors of the row and column
    covariances; no explicit inverse is formed. The quadratic form is
    tr{U^-1 (Y-M)^T V^-1 (Y-M)} = ||L_v^-1 (Y-M) L_u^-T||_F^2.
    """
    y = _as_matrix(y, "y")
    if y.shape != params.mean.shape:
        raise DimensionMismatch(
            f"y has shape {y.shape}, mean has shape {params.mean.shape}"
        )
    n, q = y.shape
    lv = cholesky_lower(params.row_cov)
    lu = cholesky_lower(params.col_cov)
    # rows whitened, then columns
    c = tri_solve(lv, y - params.mean)
    d = tri_solve(lu, c.T)
    quad = float(np.sum(d * d))
    return -0.5 * (n * q * _LOG_2PI + q * chol_logdet(lv) + n * chol_logdet(lu) + quad)


def mn_sample(params, rng, _z=None):
    """Draw one matrix from MN(mean, row_cov, col_cov).

    ``_z`` is a test hook: when given, it replaces the standard-normal
    core so degenerate cases (``_z = 0`` returns the mean exactly) can be
    exercised without a zero covariance.
    """
    n, q = params.mean.shape
    lv = cholesky_lower(params.row_cov)
    lu = cholesky_lower(params.col_cov)
    z = rng.standard_normal((n, q)) if _z is None else np.asarray(_z, dtype=float)
    return params.mean + lv @ z @ lu.T


def iw_sample(params, rng):
    """Draw one SPD matrix from IW(scale, dof) via Bartlett decomposition.

    With A the Bartlett factor of a standard Wishart(dof, I) and L the
    Cholesky factor of the scale, the draw is (L A^-T)(L A^-T)^T, which is
    SPD by construction.
    """
    q = params.scale.shape[0]
    l_scale = cholesky_lower(params.scale)
    a = _bartlett_lower(params.dof, q, rng)
    b = tri_solve(a, l_scale.T).T  # L @ A^-T
    return b @ b.T


def _bartlett_lower(dof, q, rng):
    """Lower-triangular Bartlett factor A with A A^T ~ Wishart(dof, I)."""
    a = np.zeros((q, q))
    for i in range(q):
        a[i, i] = np.sqrt(rng.chisquare(dof - i))
    if q > 1:
        idx = np.tril_indices(q, -1)
        a[idx] = rng.standard_normal(len(idx[0]))
    return a


def mt_log_density(y, params):
    """Log-density of a matrix-variate Student-t at the m x q matrix ``y``.

    Uses the q x q determinant form
        |I_m + V^-1 A Psi^-1 A^T| = |I_q + Psi^-1 A^T V^-1 A|,  A = Y - mu,
    so the cost is dominated by one m x m and two q x q factorizations.
    The multivariate gamma function enters only through log-gamma sums.
    """
    y = _as_matrix(y, "y")
    if y.shape != params.location.shape:
        raise DimensionMismatch(
            f"y has shape {y.shape}, location has shape {params.location.shape}"
        )
    m, q = y.shape
    nu = params.dof
    lv = cholesky_lower(params.row_scale)
    lp = cholesky_lower(params.col_scale)
    c = tri_solve(lv, y - params.location)  # L_v^-1 A, so A^T V^-1 A = C^T C
    w = tri_solve(lp, c.T)  # L_p^-1 C^T
    s = np.eye(q) + w @ w.T  # similar to I + Psi^-1 A^T V^-1 A
    ls = cholesky_lower(s)
    return float(
        multigammaln(0.5 * (nu + m), q)
        - multigammaln(0.5 * nu, q)
        - 0.5 * m * q * _LOG_PI
        - 0.5 * q * chol_logdet(lv)
        - 0.5 * m * chol_logdet(lp)
        - 0.5 * (nu + m) * chol_logdet(ls)
    )


def mt_sample(params, rng):
    """Draw one matrix from the matrix-t by composition.

    Sigma ~ IW(col_scale, dof), then Y ~ MN(location, row_scale, Sigma).
    Compositional sampling reuses the tested samplers above instead of a
    direct matrix-t transform.
    """
    sigma = iw_sample(InverseWishartParams(params.col_scale, params.dof), rng)
    return mn_sample(
        MatrixNormalParams(params.location, params.row_scale, sigma), rng
    )
