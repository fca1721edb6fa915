"""Affine alignment of external relative depth to sparse metric points,
and dense completion from the fitted map."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .core import (DataError, DenseDepthMap, EmptyFrameError, RelativeDepthMap,
                   SensorSpec, SparsePointSet)

DOMAIN_DEPTH = "depth"
DOMAIN_INVERSE = "inverse"

_IRLS_ROUNDS = 5
_HUBER_MAD_SCALE = 1.345


@dataclass(frozen=True)
class AffineFit:
    scale: float      # a
    shift: float      # b
    domain: str       # fitted in depth or inverse-depth space
    rmse_fit: float   # residual RMSE over the support, meters (fit space)
    support: int      # number of points used

    def __post_init__(self):
        if self.support < 2:
            raise DataError("affine fit needs support >= 2")
        if self.rmse_fit < 0:
            raise DataError("rmse_fit must be >= 0")
        if self.domain not in (DOMAIN_DEPTH, DOMAIN_INVERSE):
            raise DataError(f"unknown fit domain {self.domain!r}")


def _solve_weighted(x: np.ndarray, y: np.ndarray, w: np.ndarray) -> tuple[float, float]:
    sw = w.sum()
    mx = (w * x).sum() / sw
    my = (w * y).sum() / sw
    var = (w * (x - mx) ** 2).sum()
    if var <= 0:
        raise DataError("rank-deficient fit: predictor values are all equal")
    a = (w * (x - mx) * (y - my)).sum() / var
    return float(a), float(my - a * mx)


def fit_affine(pts: SparsePointSet, rel: RelativeDepthMap,
               domain: str = DOMAIN_INVERSE, robust: bool = False) -> AffineFit:
    """Least-squares scale/shift mapping relative depth to the sparse
    metric points.

    domain "depth": predicts d from the paired depth-like r.
    domain "inverse": predicts 1/d from the raw relative-map value at each
    point (the usual choice for inverse-depth estimator outputs).
    robust=True runs Huber-weighted IRLS (5 rounds, scale 1.345 * MAD).
    """
    n = len(pts)
    if n < 2:
        raise EmptyFrameError(f"affine fit needs at least 2 points, got {n}")
    if domain == DOMAIN_DEPTH:
        x = pts.rels.astype(np.float64)
        if np.any(np.isnan(x)):
            raise DataError("depth-domain fit needs points paired with relative depth")
        y = pts.depths.astype(np.float64)
    elif domain == DOMAIN_INVERSE:
        if pts.rows.max() >= rel.height or pts.cols.max() >= rel.width:
            raise DataError("points lie outside the relative map")
        x = rel.values[pts.rows, pts.cols].astype(np.float64)
        y = 1.0 / pts.depths
    else:
        raise DataError(f"unknown fit domain {domain!r}")
    if not np.all(np.isfinite(x)):
        raise DataError("relative values at point locations must be finite")

    w = np.ones(n)
    a, b = _solve_weighted(x, y, w)
    if robust:
        for _ in range(_IRLS_ROUNDS):
            res = a * x + b - y
            mad = float(np.median(np.abs(res - np.median(res))))
            scale = _HUBER_MAD_SCALE * mad
            if scale <= 0:
                break
            absr = np.maximum(np.abs(res), 1e-300)
            w = np.minimum(1.0, scale / absr)
            a, b = _solve_weighted(x, y, w)
    rmse = float(np.sqrt(np.mean((a * x + b - y) ** 2)))
    return AffineFit(a, b, domain, rmse, n)


def complete(rel: RelativeDepthMap, fit: AffineFit,
             spec: SensorSpec = SensorSpec()) -> DenseDepthMap:
    """Dense metric depth from the fitted affine map, clamped to the
    sensor's detection range. Every output pixel is valid."""
    pred = fit.scale * rel.values + fit.shift
    if fit.domain == DOMAIN_INVERSE:
        with np.errstate(divide="ignore"):
            depth = np.where(pred > 0, 1.0 / np.maximum(pred, 1e-300), np.inf)
    else:
        depth = pred
    depth = np.clip(depth, spec.d_min, spec.d_max)
    return DenseDepthMap(depth, np.ones_like(depth, dtype=bool))


def complete_with_residuals(rel: RelativeDepthMap, fit: AffineFit,
                            pts: SparsePointSet,
                            spec: SensorSpec = SensorSpec()) -> DenseDepthMap:
    """Completion plus a local correction field built from per-point
    residuals, spread by inverse-distance weights over the 8 nearest
    points (distances in normalized image coordinates)."""
    if len(pts) == 0:
        raise EmptyFrameError("residual correction needs at least one point")
    base = complete(rel, fit, spec)
    residuals = pts.depths - base.values[pts.rows, pts.cols]

    h, w = rel.height, rel.width
    tree = cKDTree(pts.normalized_coords())
    gx, gy = np.meshgrid(np.arange(w) / w, np.arange(h) / h)
    query = np.column_stack((gx.ravel(), gy.ravel()))
    k = min(8, len(pts))
    dist, idx = tree.query(query, k=k)
    if k == 1:
        dist = dist[:, None]
        idx = idx[:, None]
    weights = 1.0 / (dist ** 2 + 1.0)
    correction = (weights * residuals[idx]).sum(axis=1).reshape(h, w)
    depth = np.clip(base.values + correction, spec.d_min, spec.d_max)
    return DenseDepthMap(depth, np.ones_like(depth, dtype=bool))
