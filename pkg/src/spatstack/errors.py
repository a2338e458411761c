"""Exception hierarchy shared across the package.

Every library error derives from SpatstackError so callers (and the CLI)
can map failures to a coarse category: configuration, data quality, or
numerical breakdown.
"""


class SpatstackError(Exception):
    """Base class for all spatstack errors."""


class ConfigError(SpatstackError):
    """Invalid or incomplete run configuration."""


# ---- data errors -------------------------------------------------------

class DataError(SpatstackError):
    """Base class for problems with user-supplied data."""


class DimensionMismatch(DataError):
    """Array shapes are inconsistent with each other or with parameters."""


class ParseError(DataError):
    """Malformed input file; message carries the offending line/column."""


class SchemaMismatch(DataError):
    """Prediction input columns disagree with the columns used at training."""


class DataQualityError(DataError):
    """Data violate a model precondition (rank-deficient design, rows with
    zero predictive density under every candidate model, ...)."""


class ShardTooSmall(DataError):
    """A partition shard has fewer rows than the fitting procedure needs."""


class InvalidFoldCount(DataError):
    """Cross-validation fold count outside [2, n]."""


class TooFewPairs(DataError):
    """Not enough point pairs to estimate a variogram on the requested bins."""


# ---- numerical errors --------------------------------------------------

class NumericalError(SpatstackError):
    """Base class for numerical failures."""


class NonSPDMatrix(NumericalError):
    """Cholesky factorization failed; message carries the leading-minor
    index reported by LAPACK."""


class InvalidDof(NumericalError):
    """Inverse-Wishart degrees of freedom at or below q - 1."""


class InvalidAlpha(NumericalError):
    """Spatial variance proportion outside the open interval (0, 1)."""


class ConvergenceFailure(NumericalError):
    """Iterative solver exhausted its iteration budget.

    The best iterate found is attached as ``best_weights`` together with
    its objective value so callers can decide whether to accept it.
    """

    def __init__(self, message, best_weights=None, best_objective=None):
        super().__init__(message)
        self.best_weights = best_weights
        self.best_objective = best_objective


class FitDiverged(NumericalError):
    """Bounded least-squares fit failed to produce a usable optimum."""
