"""End-to-end stacked inference on partitioned spatial data.

The flow: partition the dataset into K near-equal subsets; inside each
subset, score every candidate model by K-fold cross-validated log
predictive density and solve for within-subset weights; then stack the
subsets themselves using the already-computed density tables (no
refitting); finally sample parameters and predictions from the resulting
mixture of finite mixtures.

Everything is deterministic given the master seed: per-subset seeds are
derived through numpy SeedSequence spawning, so fitting subsets serially
or under a process pool yields identical results.
"""

import concurrent.futures
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp, multigammaln

from .conjugate import Dataset, _LatentSolver, latent_posterior
from .errors import DimensionMismatch, ShardTooSmall
from .kernels import exp_corr
from .linalg import chol_solve, cholesky_jittered, cholesky_lower, symmetrize, tri_solve
from .matrix_variate import InverseWishartParams, iw_sample
from .stacking import (
    LogPredDensityTable,
    kfold_assign,
    pseudo_bma,
    softmax_shifted,
    solve_simplex_logscore,
)

DEFAULT_SUBSET_SIZE = 500
DEFAULT_FOLDS = 10
DEFAULT_DRAWS = 250

_LOG_PI = np.log(np.pi)


@dataclass(frozen=True)
class SubsetResult:
    """Everything a subset contributes to the second stacking stage and
    to posterior/predictive sampling: its weights, its cross-validated
    log-density block, and one full-subset posterior per candidate model."""

    subset_id: int
    z_hat: np.ndarray
    log_pd: np.ndarray
    posteriors: tuple
    data: Dataset
    fold_of: np.ndarray

    @property
    def n_models(self):
        return self.log_pd.shape[1]


@dataclass(frozen=True)
class StackedModel:
    """Fitted two-stage stack: grid, prior, per-subset results, and the
    between-subset weights."""

    grid: tuple
    prior: object
    results: tuple
    w_hat: np.ndarray
    weight_method: str
    n_folds: int
    master_seed: int

    @property
    def n_subsets(self):
        return len(self.results)

    @property
    def n_models(self):
        return len(self.grid)

    def mixture_weights(self):
        """Joint (subset, model) mixture weights w_k * z_kj, summing to 1."""
        return np.vstack([w * r.z_hat for w, r in zip(self.w_hat, self.results)])


@dataclass(frozen=True)
class PredictionResult:
    """Pooled predictive draws and per-location summaries.

    ``y_draws`` and ``omega_draws`` have shape (n_draws, n_pred, q);
    summaries map name -> (n_pred, q) arrays with monotone quantiles.
    """

    y_draws: np.ndarray
    omega_draws: np.ndarray
    subset_labels: np.ndarray
    model_labels: np.ndarray

    def summaries(self, which="y"):
        draws = self.y_draws if which == "y" else self.omega_draws
        q025, q50, q975 = np.percentile(draws, [2.5, 50.0, 97.5], axis=0)
        return {
            "mean": draws.mean(axis=0),
            "sd": draws.std(axis=0, ddof=1),
            "q2.5": q025,
            "q50": q50,
            "q97.5": q975,
        }


def subset_seed(master_seed, subset_id):
    """Deterministic per-subset seed; stable across platforms and across
    serial/parallel execution."""
    return np.random.SeedSequence([int(master_seed), int(subset_id)])


def partition(data, n_subsets=None, seed=0, min_rows=None):
    """Random disjoint exhaustive split into near-equal subsets.

    With ``n_subsets`` unset, K = ceil(n / 500) targets the default
    subset size. Sizes differ by at most one row. Raises ShardTooSmall
    when a subset would fall below ``min_rows`` (callers pass
    max(p + 1, L)).
    """
    if n_subsets is None:
        n_subsets = int(np.ceil(data.n / DEFAULT_SUBSET_SIZE))
    if n_subsets < 1:
        raise ShardTooSmall("need at least one subset")
    if min_rows is None:
        min_rows = data.p + 1
    if data.n // n_subsets < min_rows:
        raise ShardTooSmall(
            f"K={n_subsets} would give subsets of ~{data.n // n_subsets} rows, "
            f"below the minimum {min_rows}"
        )
    if n_subsets == 1:
        return [data]
    rng = np.random.default_rng(seed)
    order = rng.permutation(data.n)
    return [data.take(np.sort(idx)) for idx in np.array_split(order, n_subsets)]


def _row_log_densities(train, test, spec, prior):
    """Held-out per-row log predictive densities under one model.

    Each held-out row i gets the scalar-row matrix-t density with the
    fold posterior's dof and column scale, location and row scale built
    from the conditional kernel blocks. Row scales use the diagonal of
    the joint predictive row covariance, which coincides with the
    one-row-at-a-time construction.
    """
    n, p, q = train.n, train.p, train.q
    c = spec.alpha / (1.0 - spec.alpha)
    r_tr = exp_corr(train.coords, train.coords, spec.kernel)
    l_r = cholesky_jittered(r_tr)
    m0_chol = cholesky_lower(prior.M0)
    m0_inv = symmetrize(chol_solve(m0_chol, np.eye(p)))
    solver = _LatentSolver(train.X, r_tr, c, m0_inv)

    b_top = c * (train.X.T @ train.Y) + prior.m0
    b_bot = c * train.Y
    mean = solver.solve(b_top, b_bot)
    psi = symmetrize(
        prior.Psi0
        + c * (train.Y.T @ train.Y)
        + prior.m0.T @ (prior.M0 @ prior.m0)
        - mean.T @ np.vstack([b_top, b_bot])
    )
    nu = float(prior.nu0) + n

    r_tu = exp_corr(train.coords, test.coords, spec.kernel)
    m_u = chol_solve(l_r, r_tu).T  # n_test x n
    m_y = np.hstack([test.X, m_u])  # n_test x (p + n)
    loc = m_y @ mean

    w = solver.solve(m_y[:, :p].T, m_y[:, p:].T)  # P^-1 M_y^T
    quad = np.einsum("ij,ji->i", m_y, w)
    v_omega = 1.0 - np.einsum("ij,ji->i", m_u, r_tu)
    v_row = quad + v_omega + (1.0 / spec.alpha - 1.0)

    # scalar-row matrix-t log density, vectorized over the held-out rows
    resid = test.Y - loc
    l_psi = cholesky_lower(psi)
    white = tri_solve(l_psi, resid.T)
    maha = np.sum(white * white, axis=0)  # (y - mu) Psi^-1 (y - mu)^T
    logdet_psi = 2.0 * np.sum(np.log(np.diag(l_psi)))
    const = (
        multigammaln(0.5 * (nu + 1.0), q)
        - multigammaln(0.5 * nu, q)
        - 0.5 * q * _LOG_PI
        - 0.5 * logdet_psi
    )
    return (
        const
        - 0.5 * q * np.log(v_row)
        - 0.5 * (nu + 1.0) * np.log1p(maha / v_row)
    )


def fit_subset(data, grid, prior, n_folds=DEFAULT_FOLDS, seed=0):
    """Within-subset stage: CV log-density table, weights, posteriors.

    For every candidate model, each fold is refit on the remaining folds
    and the held-out rows are scored under the fold's matrix-t
    predictive. The within-subset weights maximize the mean log score of
    the mixture; full-subset posteriors (one per model) are fit once and
    kept for later sampling.
    """
    if data.n < n_folds:
        raise ShardTooSmall(f"subset has {data.n} rows, fewer than L={n_folds}")
    fold_of = kfold_assign(data.n, n_folds, seed)
    log_pd = np.empty((data.n, len(grid)))
    for j, spec in enumerate(grid):
        for fold in range(n_folds):
            test_idx = np.flatnonzero(fold_of == fold)
            train_idx = np.flatnonzero(fold_of != fold)
            log_pd[test_idx, j] = _row_log_densities(
                data.take(train_idx), data.take(test_idx), spec, prior
            )
    table = LogPredDensityTable(log_pd)
    z_hat = solve_simplex_logscore(table)
    posteriors = tuple(latent_posterior(data, spec, prior) for spec in grid)
    return SubsetResult(
        subset_id=-1,
        z_hat=z_hat,
        log_pd=log_pd,
        posteriors=posteriors,
        data=data,
        fold_of=fold_of,
    )


def _fit_subset_task(args):
    k, data, grid, prior, n_folds, seed_seq = args
    seed = seed_seq.generate_state(1)[0]
    result = fit_subset(data, grid, prior, n_folds=n_folds, seed=seed)
    return replace(result, subset_id=k)


def stack_between(results, method="bps", tol=1e-8):
    """Between-subset stage, reusing the stored per-subset tables.

    The stacked n x J table pairs every subset's CV densities with every
    subset's within-subset weights: column k of the stage-two table is
    the log of the z_k-mixture evaluated on all n rows. "bps" solves the
    simplex problem on that table; "pseudo_bma" applies the softmax of
    the per-subset elpd values. No dataset access, no refitting.
    """
    if not results:
        raise DimensionMismatch("no subset results to stack")
    n_models = results[0].n_models
    if any(r.n_models != n_models for r in results):
        raise DimensionMismatch("subsets disagree on the model grid size")
    stacked = np.vstack([r.log_pd for r in results])
    if method == "pseudo_bma":
        return pseudo_bma(LogPredDensityTable(stacked), [r.z_hat for r in results])
    if method != "bps":
        raise ValueError(f"unknown weight method {method!r}")
    if len(results) == 1:
        return np.ones(1)
    with np.errstate(divide="ignore"):
        columns = [
            logsumexp(stacked + np.log(r.z_hat)[None, :], axis=1) for r in results
        ]
    return solve_simplex_logscore(np.column_stack(columns), tol=tol)


def stack_between_common(results, grid, prior, eval_data, method="bps", tol=1e-8):
    """Experimental variant: rescore every subset on a common held-out
    dataset before stacking, instead of reusing the CV tables.

    This follows the reading that subset comparison needs predictive
    assessments over one shared set of points. Each subset's models are
    scored row-wise on ``eval_data`` and mixed with the stored z weights.
    """
    columns = []
    for r in results:
        log_pd = np.column_stack(
            [_row_log_densities(r.data, eval_data, spec, prior) for spec in grid]
        )
        with np.errstate(divide="ignore"):
            columns.append(logsumexp(log_pd + np.log(r.z_hat)[None, :], axis=1))
    table = np.column_stack(columns)
    if method == "pseudo_bma":
        return softmax_shifted(table.sum(axis=0))
    if len(results) == 1:
        return np.ones(1)
    return solve_simplex_logscore(table, tol=tol)


def fit(
    data,
    grid,
    prior,
    n_subsets=None,
    n_folds=DEFAULT_FOLDS,
    seed=0,
    weight_method="bps",
    workers=1,
):
    """Full two-stage fit. Deterministic given ``seed``; subsets run in
    parallel when ``workers`` > 1 with identical results to serial."""
    grid = tuple(grid)
    subsets = partition(
        data, n_subsets, seed=seed, min_rows=max(data.p + 1, n_folds)
    )
    tasks = [
        (k, sub, grid, prior, n_folds, subset_seed(seed, k))
        for k, sub in enumerate(subsets)
    ]
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_fit_subset_task, tasks))
    else:
        results = [_fit_subset_task(t) for t in tasks]
    w_hat = stack_between(results, method=weight_method)
    return StackedModel(
        grid=grid,
        prior=prior,
        results=tuple(results),
        w_hat=w_hat,
        weight_method=weight_method,
        n_folds=n_folds,
        master_seed=int(seed),
    )


def draw_mixture_labels(model, n_draws, rng):
    """Per-draw categorical (subset, model) labels from w_k * z_kj."""
    k_labels = rng.choice(model.n_subsets, size=n_draws, p=model.w_hat)
    j_labels = np.empty(n_draws, dtype=np.int64)
    for k in range(model.n_subsets):
        mask = k_labels == k
        if mask.any():
            j_labels[mask] = rng.choice(
                model.n_models, size=int(mask.sum()), p=model.results[k].z_hat
            )
    return k_labels, j_labels


def sample_theta(model, n_draws, rng):
    """Draws of (beta, Sigma, Omega) from the stacked posterior mixture.

    Each draw picks a subset from w_hat, a model from that subset's
    z_hat, then one exact draw from the stored posterior. Returns
    (beta_draws, sigma_draws, omega_list, subset_labels, model_labels);
    omega entries vary in row count with the owning subset.
    """
    k_labels, j_labels = draw_mixture_labels(model, n_draws, rng)
    factors = {}
    betas, sigmas, omegas = [], [], []
    for k, j in zip(k_labels, j_labels):
        key = (int(k), int(j))
        post = model.results[k].posteriors[j]
        if key not in factors:
            factors[key] = (
                cholesky_lower(post.row_precision),
                InverseWishartParams(post.iw_scale, post.iw_dof),
            )
        l_prec, iw = factors[key]
        sigma = iw_sample(iw, rng)
        l_sig = cholesky_lower(sigma)
        z = rng.standard_normal((post.d, post.q))
        gamma = post.mean + tri_solve(l_prec, z, trans=1) @ l_sig.T
        betas.append(gamma[: post.n_coef])
        sigmas.append(sigma)
        omegas.append(gamma[post.n_coef :] if post.is_latent else None)
    return np.array(betas), np.array(sigmas), omegas, k_labels, j_labels


class _CellPredictor:
    """Cached per-(subset, model) pieces for conditional predictive draws."""

    def __init__(self, result, spec, post, coords_new, x_new):
        data = result.data
        self.post = post
        self.spec = spec
        r_tr = exp_corr(data.coords, data.coords, spec.kernel)
        l_r = cholesky_jittered(r_tr)
        r_tu = exp_corr(data.coords, coords_new, spec.kernel)
        self.m_u = chol_solve(l_r, r_tu).T
        v_omega = symmetrize(
            exp_corr(coords_new, coords_new, spec.kernel) - self.m_u @ r_tu
        )
        self.l_vo = cholesky_jittered(v_omega)
        self.l_prec = cholesky_lower(post.row_precision)
        self.iw = InverseWishartParams(post.iw_scale, post.iw_dof)
        self.x_new = x_new
        self.noise_sd = np.sqrt(1.0 / spec.alpha - 1.0)

    def draw(self, rng):
        """One (omega_new, y_new) draw via the conditional route."""
        post = self.post
        sigma = iw_sample(self.iw, rng)
        l_sig = cholesky_lower(sigma)
        z = rng.standard_normal((post.d, post.q))
        gamma = post.mean + tri_solve(self.l_prec, z, trans=1) @ l_sig.T
        beta, omega = gamma[: post.n_coef], gamma[post.n_coef :]
        z_o = rng.standard_normal((self.m_u.shape[0], post.q))
        omega_new = self.m_u @ omega + self.l_vo @ z_o @ l_sig.T
        z_y = rng.standard_normal(omega_new.shape)
        y_new = (
            self.x_new @ beta + omega_new + self.noise_sd * z_y @ l_sig.T
        )
        return omega_new, y_new


def predict(model, coords_new, x_new, n_draws=DEFAULT_DRAWS, rng=None):
    """Predictive draws of the outcomes and the latent field at new
    locations, pooled over per-draw (subset, model) selections."""
    if rng is None or isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    coords_new = np.asarray(coords_new, float).reshape(-1, 2)
    x_new = np.atleast_2d(np.asarray(x_new, float))
    p = model.results[0].data.p
    if x_new.shape != (coords_new.shape[0], p):
        raise DimensionMismatch(
            f"x_new is {x_new.shape}, expected ({coords_new.shape[0]}, {p})"
        )
    k_labels, j_labels = draw_mixture_labels(model, n_draws, rng)
    cells = {}
    y_draws = np.empty((n_draws, coords_new.shape[0], model.results[0].data.q))
    omega_draws = np.empty_like(y_draws)
    for i, (k, j) in enumerate(zip(k_labels, j_labels)):
        key = (int(k), int(j))
        if key not in cells:
            result = model.results[k]
            cells[key] = _CellPredictor(
                result, model.grid[j], result.posteriors[j], coords_new, x_new
            )
        omega_draws[i], y_draws[i] = cells[key].draw(rng)
    return PredictionResult(
        y_draws=y_draws,
        omega_draws=omega_draws,
        subset_labels=k_labels,
        model_labels=j_labels,
    )
