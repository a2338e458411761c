import numpy as np
import pytest

from spatstack.errors import DimensionMismatch, InvalidAlpha, NonSPDMatrix
from spatstack.kernels import (
    KernelSpec,
    ModelSpec,
    exp_corr,
    model_grid,
    nugget_corr,
    pairwise_dist,
)
from spatstack.linalg import cholesky_jittered, cholesky_lower


class TestPairwiseDist:
    def test_single_point_zero(self):
        d = pairwise_dist([[0.0, 0.0]], [[0.0, 0.0]])
        np.testing.assert_array_equal(d, [[0.0]])

    def test_3_4_5_triangle(self):
        d = pairwise_dist([[0.0, 0.0]], [[3.0, 4.0]])
        assert d[0, 0] == pytest.approx(5.0, abs=1e-15)

    def test_symmetric_on_same_set(self):
        rng = np.random.default_rng(0)
        pts = rng.uniform(size=(20, 2))
        d = pairwise_dist(pts, pts)
        assert np.max(np.abs(d - d.T)) == 0.0

    def test_coordinate_arity_checked(self):
        with pytest.raises(DimensionMismatch):
            pairwise_dist(np.zeros((3, 3)), np.zeros((3, 2)))


class TestExpCorr:
    def test_zero_distance_gives_one(self):
        c = exp_corr([[0.2, 0.2]], [[0.2, 0.2]], KernelSpec(phi=4.0))
        assert c[0, 0] == 1.0

    def test_effective_range_values(self):
        # correlation crosses 0.05 at -ln(0.05)/phi: 0.9986, 0.7489, 0.5991
        expected = {3.0: 0.9985774245179969, 4.0: 0.7489330683884977,
                    5.0: 0.5991464547107982}
        for phi, rng_val in expected.items():
            k = KernelSpec(phi=phi)
            assert k.effective_range == pytest.approx(rng_val, abs=1e-12)
            c = exp_corr([[0.0, 0.0]], [[rng_val, 0.0]], k)
            assert c[0, 0] == pytest.approx(0.05, abs=1e-12)

    def test_phi4_at_three_quarters(self):
        c = exp_corr([[0.0, 0.0]], [[0.75, 0.0]], KernelSpec(phi=4.0))
        assert c[0, 0] == pytest.approx(np.exp(-3.0), abs=1e-15)
        assert c[0, 0] < 0.05

    def test_larger_phi_smaller_correlation(self):
        rng = np.random.default_rng(1)
        pts = rng.uniform(size=(10, 2))
        c3 = exp_corr(pts, pts, KernelSpec(phi=3.0))
        c5 = exp_corr(pts, pts, KernelSpec(phi=5.0))
        off = ~np.eye(10, dtype=bool)
        assert np.all(c5[off] < c3[off])

    def test_duplicates_singular_without_nugget(self):
        pts = np.array([[0.1, 0.1], [0.1, 0.1], [0.5, 0.5]])
        r = exp_corr(pts, pts, KernelSpec(phi=4.0))
        with pytest.raises(NonSPDMatrix):
            cholesky_lower(r)
        cholesky_jittered(r)  # single jitter retry separates the pair


class TestNuggetCorr:
    def test_single_location_value(self):
        spec = ModelSpec(0.8, KernelSpec(phi=4.0))
        v = nugget_corr([[0.0, 0.0]], spec)
        assert v[0, 0] == pytest.approx(1.25, abs=1e-15)

    def test_alpha_bounds_rejected(self):
        with pytest.raises(InvalidAlpha):
            ModelSpec(1.0, KernelSpec(phi=4.0))
        with pytest.raises(InvalidAlpha):
            ModelSpec(0.0, KernelSpec(phi=4.0))

    def test_equals_exp_corr_plus_diagonal(self):
        rng = np.random.default_rng(2)
        pts = rng.uniform(size=(5, 2))
        spec = ModelSpec(0.7, KernelSpec(phi=3.0))
        v = nugget_corr(pts, spec)
        r = exp_corr(pts, pts, spec.kernel)
        np.testing.assert_array_equal(v - r, (1.0 / 0.7 - 1.0) * np.eye(5))

    def test_spd_with_duplicates(self):
        pts = np.array([[0.1, 0.1], [0.1, 0.1], [0.5, 0.5]])
        v = nugget_corr(pts, ModelSpec(0.9, KernelSpec(phi=4.0)))
        cholesky_lower(v)


class TestModelGrid:
    def test_cartesian_product(self):
        grid = model_grid([0.75, 0.80, 0.85], [2.0, 4.0, 6.0])
        assert len(grid) == 9
        assert {(m.alpha, m.phi) for m in grid} == {
            (a, p) for a in (0.75, 0.80, 0.85) for p in (2.0, 4.0, 6.0)
        }
