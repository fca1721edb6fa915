import numpy as np
import pytest

from dtofkit import RelativeDepthMap, SensorSpec, SparsePointSet
from dtofkit.align import (DOMAIN_DEPTH, DOMAIN_INVERSE, complete,
                           complete_with_residuals, fit_affine)
from dtofkit.core import DataError, EmptyFrameError, INVERSE_DEPTH

from conftest import random_point_set


def pts_from_rel(rel_vals, depths, h=100, w=100):
    n = len(depths)
    rows = np.arange(n) * 3 % h
    cols = (np.arange(n) * 7 + np.arange(n) // 30) % w
    return SparsePointSet.build(rows, cols, depths, h, w, rels=rel_vals)


class TestFitAffine:
    def test_identity(self):
        d = np.linspace(1, 5, 10)
        pts = pts_from_rel(d, d)
        rel = RelativeDepthMap(np.ones((100, 100)))
        fit = fit_affine(pts, rel, domain=DOMAIN_DEPTH)
        assert fit.scale == pytest.approx(1.0, abs=1e-12)
        assert fit.shift == pytest.approx(0.0, abs=1e-12)
        assert fit.rmse_fit == pytest.approx(0.0, abs=1e-12)

    def test_recovers_scale_and_shift(self):
        r = np.linspace(0.5, 3, 10)
        pts = pts_from_rel(r, 2 * r + 0.5)
        rel = RelativeDepthMap(np.ones((100, 100)))
        fit = fit_affine(pts, rel, domain=DOMAIN_DEPTH)
        assert fit.scale == pytest.approx(2.0, abs=1e-9)
        assert fit.shift == pytest.approx(0.5, abs=1e-9)

    def test_normal_equation_gradient_zero(self, rng):
        r = rng.uniform(0.2, 4, 50)
        d = 1.3 * r + 0.7 + rng.normal(0, 0.05, 50)
        pts = pts_from_rel(r, np.maximum(d, 0.05))
        rel = RelativeDepthMap(np.ones((100, 100)))
        fit = fit_affine(pts, rel, domain=DOMAIN_DEPTH)
        res = fit.scale * pts.rels + fit.shift - pts.depths
        assert abs(np.sum(res * pts.rels)) < 1e-9 * len(pts)
        assert abs(np.sum(res)) < 1e-9 * len(pts)

    def test_scale_equivariance(self, rng):
        r = rng.uniform(0.2, 4, 30)
        d = 1.7 * r + 0.3
        rel = RelativeDepthMap(np.ones((100, 100)))
        f1 = fit_affine(pts_from_rel(r, d), rel, domain=DOMAIN_DEPTH)
        c = 2.5
        f2 = fit_affine(pts_from_rel(r * c, d), rel, domain=DOMAIN_DEPTH)
        assert f2.scale == pytest.approx(f1.scale / c, rel=1e-12)
        assert f2.shift == pytest.approx(f1.shift, abs=1e-12)

    def test_robust_beats_plain_with_outlier(self, rng):
        r = rng.uniform(0.5, 3, 100)
        d = 1.5 * r + 0.2
        d_out = d.copy()
        d_out[17] *= 10  # one gross outlier
        rel = RelativeDepthMap(np.ones((100, 100)))
        plain = fit_affine(pts_from_rel(r, d_out), rel, domain=DOMAIN_DEPTH)
        robust = fit_affine(pts_from_rel(r, d_out), rel, domain=DOMAIN_DEPTH,
                            robust=True)
        clean = np.ones(100, dtype=bool)
        clean[17] = False

        def clean_rmse(fit):
            res = fit.scale * r[clean] + fit.shift - d[clean]
            return np.sqrt(np.mean(res ** 2))

        assert clean_rmse(robust) < clean_rmse(plain)

    def test_inverse_domain_samples_raw_map(self, rng):
        h, w = 50, 50
        inv = rng.uniform(0.2, 2.0, (h, w))
        rel = RelativeDepthMap(inv, INVERSE_DEPTH)
        flat = rng.choice(h * w, size=30, replace=False)
        rows, cols = flat // w, flat % w
        depths = 1.0 / (0.8 * inv[rows, cols] + 0.05)
        pts = SparsePointSet.build(rows, cols, depths, h, w)
        fit = fit_affine(pts, rel, domain=DOMAIN_INVERSE)
        assert fit.scale == pytest.approx(0.8, abs=1e-9)
        assert fit.shift == pytest.approx(0.05, abs=1e-9)

    def test_too_few_points(self):
        pts = SparsePointSet.build([0], [0], [1.0], 10, 10, rels=[1.0])
        with pytest.raises(EmptyFrameError):
            fit_affine(pts, RelativeDepthMap(np.ones((10, 10))), domain=DOMAIN_DEPTH)

    def test_degenerate_predictor(self):
        pts = SparsePointSet.build([0, 1], [0, 0], [1.0, 2.0], 10, 10,
                                   rels=[1.0, 1.0])
        with pytest.raises(DataError, match="rank-deficient"):
            fit_affine(pts, RelativeDepthMap(np.ones((10, 10))), domain=DOMAIN_DEPTH)


class TestComplete:
    SPEC = SensorSpec(d_min=0.3, d_max=10.0)

    @staticmethod
    def make_fit(a, b, domain=DOMAIN_DEPTH):
        from dtofkit.align import AffineFit
        return AffineFit(a, b, domain, 0.0, 2)

    def test_identity_fit_returns_clamped_rel(self):
        rel = RelativeDepthMap(np.linspace(0.1, 12, 100).reshape(10, 10))
        out = complete(rel, self.make_fit(1.0, 0.0), self.SPEC)
        np.testing.assert_allclose(out.values,
                                   np.clip(rel.values, 0.3, 10.0))
        assert np.all(out.valid)

    def test_inverse_domain_reciprocal(self):
        rel = RelativeDepthMap(np.full((4, 4), 0.5), INVERSE_DEPTH)
        out = complete(rel, self.make_fit(1.0, 0.0, DOMAIN_INVERSE), self.SPEC)
        np.testing.assert_allclose(out.values, 2.0)

    def test_clamps_to_range(self):
        rel = RelativeDepthMap(np.full((4, 4), 25.0))
        out = complete(rel, self.make_fit(1.0, 0.0), self.SPEC)
        assert np.all(out.values == 10.0)

    def test_output_positivity(self, rng):
        rel = RelativeDepthMap(rng.uniform(0, 5, (20, 20)))
        out = complete(rel, self.make_fit(-1.0, 0.2), self.SPEC)
        assert np.all((out.values >= 0.3) & (out.values <= 10.0))


class TestCompleteWithResiduals:
    SPEC = SensorSpec(d_min=0.1, d_max=20.0)

    def test_zero_residuals_match_complete(self):
        h, w = 40, 40
        rel = RelativeDepthMap(np.linspace(1, 4, h * w).reshape(h, w))
        flat = np.arange(0, h * w, 97)
        rows, cols = flat // w, flat % w
        depths = rel.values[rows, cols]  # exact affine with a=1, b=0
        pts = SparsePointSet.build(rows, cols, depths, h, w,
                                   rels=rel.values[rows, cols])
        fit = fit_affine(pts, rel, domain=DOMAIN_DEPTH)
        base = complete(rel, fit, self.SPEC)
        out = complete_with_residuals(rel, fit, pts, self.SPEC)
        np.testing.assert_allclose(out.values, base.values, atol=1e-9)

    def test_single_point_correction_decays(self):
        h, w = 41, 41
        rel = RelativeDepthMap(np.full((h, w), 2.0))
        fit_pts = SparsePointSet.build([0, 1], [0, 0], [1.0, 2.0], h, w,
                                       rels=[1.0, 2.0])
        fit = fit_affine(fit_pts, rel, domain=DOMAIN_DEPTH)
        # keep only the single residual source
        single = SparsePointSet.build([20], [20], [2.5], h, w, rels=[2.0])
        out = complete_with_residuals(rel, fit, single, self.SPEC)
        base = complete(rel, fit, self.SPEC)
        correction = out.values - base.values
        row = correction[20, :]
        # correction decays monotonically away from the point's column
        assert np.all(np.diff(row[20:]) <= 1e-12)
        assert np.all(np.diff(row[:21]) >= -1e-12)
        # the point pixel reproduces its depth
        assert out.values[20, 20] == pytest.approx(2.5, abs=1e-6)

    def test_requires_points(self):
        rel = RelativeDepthMap(np.full((4, 4), 1.0))
        pts = SparsePointSet(np.array([], dtype=np.int64),
                             np.array([], dtype=np.int64), np.array([]), 4, 4)
        fit_pts = SparsePointSet.build([0, 1], [0, 0], [1.0, 2.0], 4, 4,
                                       rels=[1.0, 2.0])
        fit = fit_affine(fit_pts, rel, domain=DOMAIN_DEPTH)
        with pytest.raises(EmptyFrameError):
            complete_with_residuals(rel, fit, pts, self.SPEC)
