"""Distances and exponential spatial correlation.

Locations are plain (n, 2) float arrays in whatever planar units the
caller uses; distances are Euclidean in those units (degree grids are
treated as planar). Only the exponential family is implemented; the
``family`` field leaves room for others without an API change.
"""

from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DimensionMismatch, InvalidAlpha


def as_coords(a, name="coords"):
    """Validate and return an (n, 2) float coordinate array."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[1] != 2:
        raise DimensionMismatch(f"{name} must have shape (n, 2), got {a.shape}")
    if a.shape[0] < 1:
        raise DimensionMismatch(f"{name} must contain at least one location")
    if not np.isfinite(a).all():
        raise DimensionMismatch(f"{name} contains non-finite coordinates")
    return a


@dataclass(frozen=True)
class KernelSpec:
    """Spatial correlation kernel: family name and decay rate phi > 0."""

    phi: float
    family: str = "exponential"

    def __post_init__(self):
        if self.family != "exponential":
            raise ValueError(f"unsupported kernel family {self.family!r}")
        if not self.phi > 0:
            raise ValueError(f"phi must be positive, got {self.phi}")

    @property
    def effective_range(self):
        """Distance at which the correlation drops to 0.05."""
        return -np.log(0.05) / self.phi


@dataclass(frozen=True)
class ModelSpec:
    """One candidate model: spatial variance proportion alpha in (0, 1)
    plus a correlation kernel."""

    alpha: float
    kernel: KernelSpec

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise InvalidAlpha(f"alpha must lie in (0, 1), got {self.alpha}")

    @property
    def phi(self):
        return self.kernel.phi

    @property
    def noise_ratio(self):
        """Row-covariance load of the measurement-error block, 1/alpha - 1."""
        return 1.0 / self.alpha - 1.0


def model_grid(alphas, phis):
    """Cartesian product of alpha and phi values as a list of ModelSpec."""
    return [ModelSpec(a, KernelSpec(phi=p)) for a, p in product(alphas, phis)]


def pairwise_dist(a, b):
    """Euclidean distance matrix between two location sets."""
    a = as_coords(a, "a")
    b = as_coords(b, "b")
    return cdist(a, b)


def exp_corr(a, b, kernel):
    """Exponential correlation exp(-phi * distance) between location sets."""
    return np.exp(-kernel.phi * pairwise_dist(a, b))


def nugget_corr(coords, spec):
    """Marginal-model row correlation R_phi + (1/alpha - 1) I.

    The strictly positive nugget diagonally loads the matrix, so the
    result is SPD even with duplicated locations.
    """
    coords = as_coords(coords)
    v = exp_corr(coords, coords, spec.kernel)
    v[np.diag_indices_from(v)] += spec.noise_ratio
    return v
