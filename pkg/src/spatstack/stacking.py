"""Convex weight engines over held-out log predictive densities.

Both stacking stages reduce to the same problem: given a table of log
predictive densities (rows = held-out observations, columns = candidate
models or subsets), find simplex weights maximizing the mean log score

    f(w) = (1/n) sum_i log sum_j w_j * pd_ij.

The objective is concave in w, so a first-order point on the simplex is
the global optimum. The solver is exponentiated-gradient (mirror) ascent
with an Armijo backtracking line search: feasibility is automatic in any
dimension, ascent is monotone, and no external optimizer is needed.
Densities travel through the whole module in log space; mixtures are
formed with log-sum-exp.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import (
    ConvergenceFailure,
    DataQualityError,
    DimensionMismatch,
    InvalidFoldCount,
)

# Weights below this after convergence are treated as exactly zero
# support; the survivors are renormalized so the output sums to one.
SUPPORT_EPS = 1e-12

# Coordinates at or below this weight whose gradient still lags the
# maximum are treated as vanishing and shrunk multiplicatively: their
# gradient gap decays only linearly with the weight, so plain ascent
# steps cannot retire them in bounded time.
DEAD_WEIGHT = 1e-4
DEATH_FACTOR = 0.1


@dataclass(frozen=True)
class LogPredDensityTable:
    """Held-out log predictive densities, n_rows x n_models.

    ``row_meta`` and ``col_meta`` are optional bookkeeping (subset id,
    local row, fold; model label) carried along for reporting.
    """

    values: np.ndarray
    row_meta: tuple = field(default=None, compare=False)
    col_meta: tuple = field(default=None, compare=False)

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.values, float))
        object.__setattr__(self, "values", v)
        if np.isnan(v).any():
            raise DataQualityError("log-density table contains NaN")
        dead = np.all(np.isneginf(v), axis=1)
        if dead.any():
            rows = np.flatnonzero(dead)[:10]
            raise DataQualityError(
                f"{int(dead.sum())} rows have zero predictive density under "
                f"every model (first offenders: {rows.tolist()})"
            )
        if np.isposinf(v).any():
            raise DataQualityError("log-density table contains +inf")

    @property
    def n_rows(self):
        return self.values.shape[0]

    @property
    def n_models(self):
        return self.values.shape[1]


def kfold_assign(n, n_folds, seed):
    """Uniformly random balanced fold labels in 0..n_folds-1.

    Fold sizes differ by at most one; the same seed reproduces the same
    assignment.
    """
    if n_folds < 2 or n_folds > n:
        raise InvalidFoldCount(f"need 2 <= n_folds <= n, got L={n_folds}, n={n}")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(n, dtype=np.int64)
    fold_of[rng.permutation(n)] = np.arange(n) % n_folds
    return fold_of


def _mix_rows(table_values, w):
    """Per-row log of the w-mixture, via log-sum-exp over columns."""
    with np.errstate(divide="ignore"):
        logw = np.log(w)
    return logsumexp(table_values + logw[None, :], axis=1)


def log_score(table, w):
    """Mean held-out log score of the mixture with weights ``w``.

    Returns -inf when some row has support only on zero-weight columns;
    that value signals an infeasible mixture rather than raising.
    """
    values = table.values if isinstance(table, LogPredDensityTable) else np.atleast_2d(table)
    w = np.asarray(w, float)
    if w.shape != (values.shape[1],):
        raise DimensionMismatch(
            f"weights have shape {w.shape}, table has {values.shape[1]} columns"
        )
    return float(np.mean(_mix_rows(values, w)))


def log_score_gradient(table, w):
    """Analytic gradient of log_score at ``w``.

    d f / d w_j = (1/n) sum_i pd_ij / (sum_k w_k pd_ik), evaluated as
    mean_i exp(table_ij - rowmix_i).
    """
    values = table.values if isinstance(table, LogPredDensityTable) else np.atleast_2d(table)
    w = np.asarray(w, float)
    mix = _mix_rows(values, w)
    return np.exp(values - mix[:, None]).mean(axis=0)


def solve_simplex_logscore(table, tol=1e-8, max_iter=10000):
    """Maximize the mean log score over the probability simplex.

    Exponentiated-gradient ascent from the uniform point with Armijo
    backtracking. Convergence requires both a relative objective change
    below ``tol`` and the first-order certificate: every coordinate still
    in the support has its partial derivative within ``tol`` of the
    maximum partial derivative. Concavity then certifies global
    optimality. When float precision saturates the objective before the
    coordinate-wise certificate closes, the weighted duality gap
    max_j g_j - g'w <= tol (which bounds the suboptimality by ``tol``
    directly) is accepted instead. Exactly symmetric instances stay at
    the uniform point.

    Raises ConvergenceFailure (carrying the best iterate) if the budget
    is exhausted first.
    """
    values = table.values if isinstance(table, LogPredDensityTable) else np.atleast_2d(table)
    n_models = values.shape[1]
    if n_models == 1:
        return np.ones(1)

    w = np.full(n_models, 1.0 / n_models)
    obj = log_score(values, w)
    grad = log_score_gradient(values, w)
    step = 1.0
    rel_change = np.inf
    for _ in range(max_iter):
        gap = grad.max() - grad
        support = w > SUPPORT_EPS
        offenders = support & (gap > tol)
        if not offenders.any() and rel_change <= tol:
            return _finalize_weights(w)

        # retire vanishing coordinates whose gap cannot close by ascent
        if offenders.any() and np.all(w[offenders] <= DEAD_WEIGHT):
            w_new = w.copy()
            w_new[offenders] *= DEATH_FACTOR
            w_new /= w_new.sum()
            obj_new = log_score(values, w_new)
            if obj_new >= obj - 1e-12 * max(1.0, abs(obj)):
                rel_change = abs(obj_new - obj) / max(1.0, abs(obj))
                w, obj = w_new, obj_new
                grad = log_score_gradient(values, w)
                continue

        # multiplicative ascent; backtrack until the Armijo bound holds
        improved = False
        for _ in range(60):
            w_new = w * np.exp(step * (grad - grad.max()))
            w_new /= w_new.sum()
            obj_new = log_score(values, w_new)
            if np.isfinite(obj_new) and obj_new >= obj + 1e-4 * float(
                grad @ (w_new - w)
            ):
                improved = True
                break
            step *= 0.5
        if not improved or np.array_equal(w_new, w):
            # Objective saturated in float precision; the duality gap
            # max_j g_j - g'w bounds the suboptimality directly. At
            # saturation the gap cannot fall below ~sqrt(eps * curvature),
            # so accept up to that scale rather than spinning.
            saturation_tol = max(tol, 1e-7 * max(1.0, abs(obj)))
            if grad.max() - float(grad @ w) <= saturation_tol:
                return _finalize_weights(w)
            break
        rel_change = abs(obj_new - obj) / max(1.0, abs(obj))
        w, obj = w_new, obj_new
        grad = log_score_gradient(values, w)
        step = min(step * 2.0, 1e6)

    if grad.max() - float(grad @ w) <= tol:
        return _finalize_weights(w)
    raise ConvergenceFailure(
        f"simplex solver did not meet tol={tol} within {max_iter} iterations",
        best_weights=_finalize_weights(w),
        best_objective=obj,
    )


def _finalize_weights(w):
    """Zero out numerically dead coordinates and renormalize exactly."""
    w = np.where(w > SUPPORT_EPS, w, 0.0)
    return w / w.sum()


def pseudo_bma(table, z_list):
    """Between-subset weights as a softmax over per-subset elpd values.

    elpd_k stacks every row's log density under subset k's within-subset
    mixture; the softmax is evaluated with a max shift so it can neither
    overflow nor underflow. Invariant under any common additive shift of
    the elpd vector.
    """
    values = table.values if isinstance(table, LogPredDensityTable) else np.atleast_2d(table)
    elpd = np.array([elpd_for_mixture(values, z) for z in z_list])
    return softmax_shifted(elpd)


def elpd_for_mixture(table_values, z):
    """Sum over rows of the log z-mixture density."""
    z = np.asarray(z, float)
    if z.shape != (table_values.shape[1],):
        raise DimensionMismatch(
            f"mixture weights have shape {z.shape}, table has "
            f"{table_values.shape[1]} columns"
        )
    return float(np.sum(_mix_rows(table_values, z)))


def softmax_shifted(v):
    """exp(v - max) / sum, immune to overflow."""
    v = np.asarray(v, float)
    e = np.exp(v - v.max())
    return e / e.sum()
