"""Dense linear-algebra helpers built on Cholesky factorizations.

Cholesky is the only SPD factorization used in the package; every
"inverse" in the closed-form posterior algebra is realized as a
triangular solve against a cached factor.
"""

import numpy as np
import scipy.linalg

from .errors import NonSPDMatrix

# Jitter added to a correlation matrix when its factorization fails once
# (duplicate or near-duplicate locations); a second failure is fatal.
CORR_JITTER = 1e-10


def cholesky_lower(a):
    """Lower Cholesky factor of an SPD matrix.

    Raises NonSPDMatrix carrying LAPACK's leading-minor index when the
    factorization fails.
    """
    a = np.asarray(a, dtype=float)
    try:
        return scipy.linalg.cholesky(a, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise NonSPDMatrix(str(exc)) from None


def cholesky_jittered(a, jitter=CORR_JITTER):
    """Cholesky with a single diagonal-jitter retry.

    Used for correlation matrices of distinct-but-close locations. The
    jitter is fixed rather than escalating so results stay reproducible.
    """
    try:
        return cholesky_lower(a)
    except NonSPDMatrix:
        pass
    bumped = np.asarray(a, dtype=float).copy()
    bumped[np.diag_indices_from(bumped)] += jitter
    return cholesky_lower(bumped)


def chol_logdet(chol_factor):
    """log-determinant of A from its lower Cholesky factor."""
    return 2.0 * np.sum(np.log(np.diag(chol_factor)))


def chol_solve(chol_factor, b):
    """Solve A x = b given the lower Cholesky factor of A."""
    return scipy.linalg.cho_solve((chol_factor, True), b, check_finite=False)


def tri_solve(chol_factor, b, trans=0):
    """Triangular solve L x = b (or L^T x = b with trans=1)."""
    return scipy.linalg.solve_triangular(
        chol_factor, b, lower=True, trans=trans, check_finite=False
    )


def inv_from_chol(chol_factor):
    """Explicit inverse of A from its lower Cholesky factor.

    Only used where the inverse itself is the stored quantity (posterior
    precision blocks); solves are preferred everywhere else.
    """
    return chol_solve(chol_factor, np.eye(chol_factor.shape[0]))


def symmetrize(a):
    """Remove the floating-point skew of an analytically symmetric matrix."""
    return 0.5 * (a + a.T)
