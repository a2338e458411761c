"""Exact conjugate matrix-variate Bayesian regression.

Two routes to the same family of MNIW posteriors:

* marginal model: Y = X beta + E with a general SPD row covariance V,
  updated shard by shard (exact streaming transfer of the posterior);
* latent spatial model: Y = X beta + Omega + E, where Omega is a latent
  spatial field with row correlation R_phi and E carries the nugget load
  (1/alpha - 1) I. Its posterior is MNIW over gamma = [beta; Omega].

Posterior state is kept in natural-parameter form (row precision and
precision-weighted mean), so shard updates are order-independent
additions; the inverse-Wishart scale telescopes accordingly. Row
"covariances" inside MNIWPosterior are therefore stored as precisions,
while MatrixNormalParams and the latent-model inputs use covariances;
each call site converts explicitly.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DataQualityError, DimensionMismatch
from .kernels import as_coords, exp_corr
from .linalg import (
    chol_solve,
    cholesky_jittered,
    cholesky_lower,
    inv_from_chol,
    symmetrize,
    tri_solve,
)
from .matrix_variate import InverseWishartParams, MatrixTParams, iw_sample

__all__ = [
    "PriorSpec",
    "Dataset",
    "MNIWPosterior",
    "PredictiveMatrixT",
    "prior_posterior",
    "sequential_update",
    "batch_posterior",
    "latent_posterior",
    "predictive_params",
    "posterior_samples",
    "beta_sample_memlean",
]


@dataclass(frozen=True)
class PriorSpec:
    """MNIW prior: beta | Sigma ~ MN(M0 m0, M0, Sigma), Sigma ~ IW(Psi0, nu0).

    ``m0`` is the precision-weighted prior mean (the prior mean of beta is
    M0 @ m0), matching the streaming update recursion.
    """

    m0: np.ndarray
    M0: np.ndarray
    Psi0: np.ndarray
    nu0: float

    def __post_init__(self):
        object.__setattr__(self, "m0", np.atleast_2d(np.asarray(self.m0, float)))
        object.__setattr__(self, "M0", np.asarray(self.M0, float))
        object.__setattr__(self, "Psi0", np.asarray(self.Psi0, float))
        p, q = self.m0.shape
        if self.M0.shape != (p, p):
            raise DimensionMismatch(f"M0 is {self.M0.shape}, expected ({p}, {p})")
        if self.Psi0.shape != (q, q):
            raise DimensionMismatch(f"Psi0 is {self.Psi0.shape}, expected ({q}, {q})")
        InverseWishartParams(self.Psi0, self.nu0)  # validates SPD shape and dof

    @classmethod
    def default(cls, p, q):
        """Weakly informative default: m0 = 0, M0 = 10 I, Psi0 = I, nu0 = 3."""
        return cls(np.zeros((p, q)), 10.0 * np.eye(p), np.eye(q), 3.0)


@dataclass(frozen=True)
class Dataset:
    """Outcomes Y (n x q), design X (n x p), planar coordinates (n x 2).

    Zero-row datasets are allowed so a streaming update with an empty
    shard is an identity; operations that need data check n themselves.
    """

    Y: np.ndarray
    X: np.ndarray
    coords: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "Y", np.atleast_2d(np.asarray(self.Y, float)))
        object.__setattr__(self, "X", np.atleast_2d(np.asarray(self.X, float)))
        object.__setattr__(self, "coords", np.asarray(self.coords, float))
        n = self.Y.shape[0]
        if self.X.shape[0] != n or self.coords.shape[0] != n:
            raise DimensionMismatch(
                f"row counts disagree: Y {self.Y.shape}, X {self.X.shape}, "
                f"coords {self.coords.shape}"
            )
        if n > 0:
            as_coords(self.coords)
        if not (np.isfinite(self.Y).all() and np.isfinite(self.X).all()):
            raise DataQualityError("Y or X contains non-finite values")

    @property
    def n(self):
        return self.Y.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def q(self):
        return self.Y.shape[1]

    def take(self, idx):
        """Row-subset view (copies) of the dataset."""
        idx = np.asarray(idx)
        return Dataset(self.Y[idx], self.X[idx], self.coords[idx])

    def check_design_rank(self):
        """Raise when X is rank deficient; called at ingestion."""
        if np.linalg.matrix_rank(self.X) < self.p:
            raise DataQualityError(
                f"design matrix is rank deficient (p={self.p}, n={self.n})"
            )
        return self


@dataclass(frozen=True)
class MNIWPosterior:
    """MNIW posterior over (coefficients, Sigma) in natural-parameter form.

    ``mean`` is d x q; ``row_precision`` is the d x d inverse of the
    matrix-normal row covariance. For the marginal model d = p; for the
    latent model d = p + n and rows p..d-1 belong to the latent field.
    ``n_coef`` records p so the split is recoverable.
    """

    mean: np.ndarray
    row_precision: np.ndarray
    iw_scale: np.ndarray
    iw_dof: float
    n_coef: int

    def __post_init__(self):
        d, q = self.mean.shape
        if self.row_precision.shape != (d, d):
            raise DimensionMismatch(
                f"row_precision is {self.row_precision.shape}, expected ({d}, {d})"
            )
        if self.iw_scale.shape != (q, q):
            raise DimensionMismatch(
                f"iw_scale is {self.iw_scale.shape}, expected ({q}, {q})"
            )
        if not self.iw_dof > q - 1:
            raise DataQualityError(
                f"iw_dof={self.iw_dof} must exceed q - 1 = {q - 1}"
            )
        if not 0 < self.n_coef <= d:
            raise DimensionMismatch(f"n_coef={self.n_coef} outside 1..{d}")

    @property
    def d(self):
        return self.mean.shape[0]

    @property
    def q(self):
        return self.mean.shape[1]

    @property
    def is_latent(self):
        return self.d > self.n_coef

    def beta_mean(self):
        return self.mean[: self.n_coef]

    def omega_mean(self):
        return self.mean[self.n_coef :]


def prior_posterior(prior):
    """The prior expressed as a zero-data MNIWPosterior."""
    l0 = cholesky_lower(prior.M0)
    return MNIWPosterior(
        mean=prior.M0 @ prior.m0,
        row_precision=symmetrize(inv_from_chol(l0)),
        iw_scale=prior.Psi0.copy(),
        iw_dof=float(prior.nu0),
        n_coef=prior.m0.shape[0],
    )


def sequential_update(post, shard, v_shard):
    """Fold one data shard into a marginal-model posterior.

    The update adds X^T V^-1 X to the precision and X^T V^-1 Y to the
    precision-weighted mean; the IW scale telescopes through the
    quadratic forms of consecutive means, so any partition of the data
    with block-diagonal V reproduces the one-shot batch posterior
    exactly, in any shard order.
    """
    if shard.n == 0:
        return post
    if post.is_latent:
        raise DimensionMismatch("sequential_update applies to marginal posteriors")
    if shard.p != post.d:
        raise DimensionMismatch(
            f"shard has p={shard.p}, posterior expects {post.d}"
        )
    v_shard = np.asarray(v_shard, float)
    if v_shard.shape != (shard.n, shard.n):
        raise DimensionMismatch(
            f"V is {v_shard.shape}, expected ({shard.n}, {shard.n})"
        )
    lv = cholesky_lower(v_shard)
    a = tri_solve(lv, shard.X)
    b = tri_solve(lv, shard.Y)

    eta_old = post.row_precision @ post.mean
    prec_new = symmetrize(post.row_precision + a.T @ a)
    eta_new = eta_old + a.T @ b
    mean_new = chol_solve(cholesky_lower(prec_new), eta_new)
    psi_new = symmetrize(
        post.iw_scale + b.T @ b + post.mean.T @ eta_old - mean_new.T @ eta_new
    )
    return MNIWPosterior(
        mean=mean_new,
        row_precision=prec_new,
        iw_scale=psi_new,
        iw_dof=post.iw_dof + shard.n,
        n_coef=post.n_coef,
    )


def batch_posterior(data, v, prior):
    """One-shot marginal-model posterior (single-shard special case)."""
    return sequential_update(prior_posterior(prior), data, v)


class _LatentSolver:
    """Block solver for the latent posterior precision system.

    The precision is [[c X^T X + M0^-1, c X^T], [c X, R^-1 + c I]] with
    c = alpha / (1 - alpha). Solves use the identity
    (R^-1 + c I)^-1 = (I + c R)^-1 R, so only R and I + c R are factored
    (both stay well conditioned where R^-1 does not), plus a rank-p Schur
    complement for the coefficient block.
    """

    def __init__(self, X, R, c, m0_inv):
        n = R.shape[0]
        self.X = X
        self.c = c
        self.R = R
        self.l_g = cholesky_lower(np.eye(n) + c * R)
        self.w = chol_solve(self.l_g, R @ (c * X))  # (R^-1 + cI)^-1 (cX)
        schur = c * (X.T @ X) + m0_inv - (c * X).T @ self.w
        self.l_s = cholesky_lower(symmetrize(schur))

    def solve(self, b_top, b_bot):
        t = chol_solve(self.l_g, self.R @ b_bot)
        u = chol_solve(self.l_s, b_top - self.c * (self.X.T @ t))
        v = t - self.w @ u
        return np.vstack([u, v])


def latent_posterior(data, spec, prior, solver="schur"):
    """MNIW posterior over gamma = [beta; Omega] for one candidate model.

    ``solver`` selects how the (p+n) block system for the posterior mean
    is solved: "schur" (default) works from the Cholesky factors of
    R_phi and I + c R_phi; "dense" factors the assembled precision and is
    the reference path for tests. Both fill the same posterior fields.
    """
    if data.n < 1:
        raise DimensionMismatch("latent_posterior needs at least one row")
    n, p, q = data.n, data.p, data.q
    if prior.m0.shape != (p, q):
        raise DimensionMismatch(
            f"prior m0 is {prior.m0.shape}, expected ({p}, {q})"
        )
    c = spec.alpha / (1.0 - spec.alpha)
    r = exp_corr(data.coords, data.coords, spec.kernel)
    l_r = cholesky_jittered(r)
    r_inv = symmetrize(inv_from_chol(l_r))
    m0_inv = symmetrize(inv_from_chol(cholesky_lower(prior.M0)))

    prec = np.empty((p + n, p + n))
    prec[:p, :p] = c * (data.X.T @ data.X) + m0_inv
    prec[:p, p:] = c * data.X.T
    prec[p:, :p] = c * data.X
    prec[p:, p:] = r_inv + c * np.eye(n)
    prec = symmetrize(prec)

    b = np.vstack([c * (data.X.T @ data.Y) + prior.m0, c * data.Y])
    if solver == "dense":
        mean = chol_solve(cholesky_lower(prec), b)
    elif solver == "schur":
        mean = _LatentSolver(data.X, r, c, m0_inv).solve(b[:p], b[p:])
    else:
        raise ValueError(f"unknown solver {solver!r}")

    psi = symmetrize(
        prior.Psi0
        + c * (data.Y.T @ data.Y)
        + prior.m0.T @ (prior.M0 @ prior.m0)
        - mean.T @ b
    )
    return MNIWPosterior(
        mean=mean,
        row_precision=prec,
        iw_scale=psi,
        iw_dof=float(prior.nu0) + n,
        n_coef=p,
    )


@dataclass(frozen=True)
class PredictiveMatrixT:
    """Joint matrix-t predictive over stacked [Omega_new; Y_new] rows.

    ``params`` has m = 2 * n_pred rows: the first n_pred are the latent
    field at the new locations, the last n_pred the outcomes.
    """

    params: MatrixTParams
    n_pred: int

    def omega_params(self):
        """Row-marginal matrix-t of the latent block."""
        return self._block(slice(0, self.n_pred))

    def y_params(self):
        """Row-marginal matrix-t of the outcome block."""
        return self._block(slice(self.n_pred, 2 * self.n_pred))

    def _block(self, rows):
        p = self.params
        return MatrixTParams(
            dof=p.dof,
            location=p.location[rows],
            row_scale=p.row_scale[rows, rows],
            col_scale=p.col_scale,
        )


def predictive_params(data, post, spec, coords_new, x_new):
    """Matrix-t predictive for new locations from a latent posterior.

    Writing the new latent and outcome rows as a linear map of gamma plus
    a matrix-normal error with row covariance built from the conditional
    kernel blocks, the joint predictive is matrix-t with the posterior
    degrees of freedom and column scale.
    """
    if not post.is_latent:
        raise DimensionMismatch("predictive_params needs a latent posterior")
    p, q = post.n_coef, post.q
    n = post.d - p
    if data.n != n:
        raise DimensionMismatch(
            f"posterior was fit on n={n} rows, dataset has {data.n}"
        )
    coords_new = np.asarray(coords_new, float).reshape(-1, 2)
    x_new = np.atleast_2d(np.asarray(x_new, float))
    n_new = coords_new.shape[0]
    if n_new == 0:
        empty = MatrixTParams(
            dof=post.iw_dof,
            location=np.zeros((0, q)),
            row_scale=np.zeros((0, 0)),
            col_scale=post.iw_scale,
        )
        return PredictiveMatrixT(params=empty, n_pred=0)
    if x_new.shape != (n_new, p):
        raise DimensionMismatch(
            f"x_new is {x_new.shape}, expected ({n_new}, {p})"
        )

    r_ss = exp_corr(data.coords, data.coords, spec.kernel)
    l_r = cholesky_jittered(r_ss)
    r_su = exp_corr(data.coords, coords_new, spec.kernel)
    m_u = chol_solve(l_r, r_su).T  # rho(U,S) rho(S,S)^-1
    v_omega = symmetrize(
        exp_corr(coords_new, coords_new, spec.kernel) - m_u @ r_su
    )

    m = np.zeros((2 * n_new, p + n))
    m[:n_new, p:] = m_u
    m[n_new:, :p] = x_new
    m[n_new:, p:] = m_u

    w = chol_solve(cholesky_lower(post.row_precision), m.T)
    v_star = m @ w
    v_star[:n_new, :n_new] += v_omega
    v_star[:n_new, n_new:] += v_omega
    v_star[n_new:, :n_new] += v_omega
    v_star[n_new:, n_new:] += v_omega + spec.noise_ratio * np.eye(n_new)

    params = MatrixTParams(
        dof=post.iw_dof,
        location=m @ post.mean,
        row_scale=symmetrize(v_star),
        col_scale=post.iw_scale,
    )
    return PredictiveMatrixT(params=params, n_pred=n_new)


def posterior_samples(post, n_draws, rng):
    """Exact draws of (beta, Sigma, Omega) from an MNIW posterior.

    Sigma ~ IW(iw_scale, iw_dof), then the coefficient matrix from the
    matrix normal with row covariance row_precision^-1. Omega is None for
    marginal-model posteriors.
    """
    if n_draws < 1:
        raise ValueError("n_draws must be at least 1")
    l_prec = cholesky_lower(post.row_precision)
    iw = InverseWishartParams(post.iw_scale, post.iw_dof)
    p = post.n_coef
    out = []
    for _ in range(n_draws):
        sigma = iw_sample(iw, rng)
        l_sig = cholesky_lower(sigma)
        z = rng.standard_normal((post.d, post.q))
        gamma = post.mean + tri_solve(l_prec, z, trans=1) @ l_sig.T
        omega = gamma[p:] if post.is_latent else None
        out.append((gamma[:p], sigma, omega))
    return out


def beta_sample_memlean(prior, X, v_chol, Y, sigma, rng, _z_beta=None, _z_y=None):
    """One draw of beta | data, Sigma by solving a linear system.

    Draws Y_rep ~ MN(Y, V, Sigma) and Z ~ MN(M0 m0, M0, Sigma), then
    solves (M0^-1 + X^T V^-1 X) B = M0^-1 Z + X^T V^-1 Y_rep. The result
    matches the closed-form conditional posterior MN(M_n m_n, M_n, Sigma)
    in its first two moments, hence in distribution, while only the prior
    precision and X^T V^-1 need to be retained between calls.

    ``_z_beta`` / ``_z_y`` are test hooks replacing the standard-normal
    cores (both zero returns M_n m_n exactly).
    """
    X = np.atleast_2d(np.asarray(X, float))
    Y = np.atleast_2d(np.asarray(Y, float))
    n, p = X.shape
    q = Y.shape[1]
    a = tri_solve(v_chol, X)  # L_V^-1 X
    m0_chol = cholesky_lower(prior.M0)
    m0_inv = symmetrize(inv_from_chol(m0_chol))
    l_sig = cholesky_lower(np.asarray(sigma, float))

    z_y = rng.standard_normal((n, q)) if _z_y is None else np.asarray(_z_y, float)
    y_rep = Y + v_chol @ z_y @ l_sig.T
    z_b = rng.standard_normal((p, q)) if _z_beta is None else np.asarray(_z_beta, float)
    z = prior.M0 @ prior.m0 + m0_chol @ z_b @ l_sig.T

    lhs = symmetrize(m0_inv + a.T @ a)
    rhs = m0_inv @ z + a.T @ tri_solve(v_chol, y_rep)
    return chol_solve(cholesky_lower(lhs), rhs)
